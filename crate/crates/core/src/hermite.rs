//! Probabilistic Hermite polynomials, Gaussian EC densities and the Hermite
//! projector.
//!
//! The densities are
//!
//! ```text
//! ρ_d(u) = (2π)^{-(d+1)/2} H_{d-1}(u) e^{-u²/2},   d ≥ 1
//! ```
//!
//! and `ρ_0` is taken to be the Gaussian tail `Φ⁺`, so that the expected EC
//! curve is `Σ_{d=0}^{D} L_d ρ_d(u)`.

use std::f64::consts::PI;

use crate::ec::StepCurve;
use crate::error::{Error, Result};
use crate::quad;

/// Integration range for smooth inputs.
pub const QUAD_RANGE: (f64, f64) = (-9.0, 9.0);
/// Absolute tolerance handed to the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-10;

const TWO_PI: f64 = 2.0 * PI;

/// `H_d(u)` by the three-term recurrence.
pub fn hermite(d: usize, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if d == 0 {
        return prev;
    }
    for k in 1..d {
        (prev, cur) = (cur, u * cur - k as f64 * prev);
    }
    cur
}

/// `P(N(0,1) > u)`.
pub fn gauss_tail(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn gauss_density(u: f64) -> f64 {
    (-0.5 * u * u).exp() / TWO_PI.sqrt()
}

/// `ρ_d(u)` for `d ≥ 1`.
pub fn ec_density(d: usize, u: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "EC densities are indexed from d = 1".into(),
        ));
    }
    Ok(density_unchecked(d, u))
}

pub(crate) fn density_unchecked(d: usize, u: f64) -> f64 {
    TWO_PI.powf(-0.5 * (d as f64 + 1.0)) * hermite(d - 1, u) * (-0.5 * u * u).exp()
}

/// `ρ_d(u)` with `ρ_0 = Φ⁺`.
pub fn ec_density_ext(d: usize, u: f64) -> f64 {
    if d == 0 {
        gauss_tail(u)
    } else {
        density_unchecked(d, u)
    }
}

/// `d/du ρ_d(u) = -√(2π) ρ_{d+1}(u)`, valid for every `d ≥ 0`.
pub fn ec_density_derivative(d: usize, u: f64) -> f64 {
    -TWO_PI.sqrt() * density_unchecked(d + 1, u)
}

/// `|ρ_d|² = (2π)^{-(d+1/2)} (d-1)!` in the `e^{u²/2}`-weighted inner product.
pub fn density_norm_sq(d: usize) -> f64 {
    assert!(d >= 1, "norm of ρ_0 is not defined");
    TWO_PI.powf(-(d as f64 + 0.5)) * factorial(d - 1)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// EC densities up to a fixed maximal order `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcDensityBasis {
    max_order: usize,
}

impl EcDensityBasis {
    pub fn new(max_order: usize) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::InvalidArgument("max order must be at least 1".into()));
        }
        Ok(EcDensityBasis { max_order })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `H_d(u)` for `d ≤ D + 1`.
    pub fn hermite(&self, d: usize, u: f64) -> Result<f64> {
        if d > self.max_order + 1 {
            return Err(Error::InvalidArgument(format!(
                "Hermite order {d} exceeds D + 1 = {}",
                self.max_order + 1
            )));
        }
        Ok(hermite(d, u))
    }

    /// `ρ_d(u)` for `1 ≤ d ≤ D`.
    pub fn density(&self, d: usize, u: f64) -> Result<f64> {
        if d == 0 || d > self.max_order {
            return Err(Error::InvalidArgument(format!(
                "EC density order {d} outside 1..={}",
                self.max_order
            )));
        }
        Ok(density_unchecked(d, u))
    }

    /// `(ρ_1(u), ..., ρ_D(u))`.
    pub fn densities(&self, u: f64) -> Vec<f64> {
        let g = (-0.5 * u * u).exp();
        let mut h = (1.0, u);
        let mut out = Vec::with_capacity(self.max_order);
        for d in 1..=self.max_order {
            out.push(TWO_PI.powf(-0.5 * (d as f64 + 1.0)) * h.0 * g);
            h = (h.1, u * h.1 - d as f64 * h.0);
        }
        out
    }
}

/// Input to [`weighted_inner`].
#[derive(Clone, Copy)]
pub enum Projectable<'a> {
    /// A raw (unpinned) step curve; it is pinned by subtracting `l0·Φ⁺`.
    Step(&'a StepCurve),
    /// A curve already decaying at both ends.
    Smooth(&'a dyn Fn(f64) -> f64),
}

/// The Hermite projector
/// `𝓗_d{g} = (2π)^{d/2}/(d-1)! ∫ H_{d-1}(u) g(u) du`.
///
/// Step curves are pinned first. Their piecewise-constant part is integrated
/// exactly through the antiderivative `H_d/d`; the Gaussian-tail parts go
/// through quadrature.
pub fn weighted_inner(g: Projectable<'_>, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "the Hermite projector is indexed from d = 1".into(),
        ));
    }
    let scale = TWO_PI.powf(0.5 * d as f64) / factorial(d - 1);
    let integral = match g {
        Projectable::Step(curve) => step_integral(curve, d)?,
        Projectable::Smooth(f) => smooth_integral(f, d)?,
    };
    Ok(scale * integral)
}

fn step_integral(curve: &StepCurve, d: usize) -> Result<f64> {
    let l0 = curve.l0;
    let Some(&u0) = curve.crit.first() else {
        // χ ≡ l0, so the pinned curve is l0·(1 - Φ⁺) everywhere.
        return if l0 == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Quadrature(
                "step curve without breakpoints does not decay".into(),
            ))
        };
    };
    let h = |u: f64| hermite(d - 1, u);
    let (lo, hi) = (QUAD_RANGE.0.min(u0), QUAD_RANGE.1.max(u0));
    let left = quad::integrate(|u| h(u) * (1.0 - gauss_tail(u)), lo, u0, QUAD_TOL)?;
    let right = quad::integrate(|u| h(u) * gauss_tail(u), u0, hi, QUAD_TOL)?;

    // ∫_{u0}^∞ H_{d-1} χ, with χ = a_m on (u_{m-1}, u_m].
    let df = d as f64;
    let mut level = l0;
    let mut steps = 0.0;
    for (m, &jump) in curve.jumps.iter().enumerate() {
        level += jump;
        if let Some(&next) = curve.crit.get(m + 1) {
            steps += level * (hermite(d, next) - hermite(d, curve.crit[m])) / df;
        }
    }
    if level.abs() > 1e-9 * (1.0 + l0.abs()) {
        return Err(Error::Quadrature(format!(
            "step curve ends at level {level}, not 0"
        )));
    }
    Ok(l0 * left + steps - l0 * right)
}

fn smooth_integral(f: &dyn Fn(f64) -> f64, d: usize) -> Result<f64> {
    let (lo, hi) = QUAD_RANGE;
    let integrand = |u: f64| hermite(d - 1, u) * f(u);
    for u in [lo, hi] {
        let v = integrand(u);
        if !(v.abs() <= 1e-8) {
            return Err(Error::Quadrature(format!(
                "integrand is {v:e} at u = {u}; input does not decay"
            )));
        }
    }
    quad::integrate(integrand, lo, hi, QUAD_TOL)
}
