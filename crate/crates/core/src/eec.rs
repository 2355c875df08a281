//! Plug-in expected EC curves, their covariance and confidence bands, and
//! excursion thresholds.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ec::EcCurve;
use crate::error::{Error, Result};
use crate::estimate::{hpe_single, LkcVector};
use crate::hermite::{density_unchecked, gauss_density, gauss_tail, EcDensityBasis};

/// Default threshold search interval.
pub const SEARCH_INTERVAL: (f64, f64) = (0.0, 8.0);
/// Step of the bracketing scan.
pub const SCAN_STEP: f64 = 0.05;
/// Required accuracy `|EEC(û) - α|` of a threshold.
pub const ROOT_TOL: f64 = 1e-10;
/// Below this `|EEC'(û)|` a threshold is flagged as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e-8;

/// EC densities entering the kinematic formula. `ρ_0` is the tail term.
///
/// Only [`Gaussian`] is provided; other field families plug in here.
pub trait EcDensities: fmt::Debug + Send + Sync {
    fn rho(&self, d: usize, u: f64) -> f64;
    fn rho_derivative(&self, d: usize, u: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Gaussian;

impl EcDensities for Gaussian {
    fn rho(&self, d: usize, u: f64) -> f64 {
        if d == 0 {
            gauss_tail(u)
        } else {
            density_unchecked(d, u)
        }
    }

    fn rho_derivative(&self, d: usize, u: f64) -> f64 {
        -(2.0 * PI).sqrt() * density_unchecked(d + 1, u)
    }
}

/// `EEC(u) = L0 ρ_0(u) + Σ_d L_d ρ_d(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EecModel<F: EcDensities = Gaussian> {
    lkc: LkcVector,
    basis: EcDensityBasis,
    family: F,
}

impl EecModel<Gaussian> {
    pub fn new(lkc: LkcVector) -> Result<Self> {
        Self::with_family(lkc, Gaussian)
    }
}

impl<F: EcDensities> EecModel<F> {
    pub fn with_family(lkc: LkcVector, family: F) -> Result<Self> {
        let basis = EcDensityBasis::new(lkc.lkc.len())?;
        if let Some(cov) = &lkc.cov {
            let d = basis.max_order();
            let square = cov.len() == d && cov.iter().all(|r| r.len() == d);
            if !square {
                return Err(Error::InvalidArgument(format!(
                    "covariance must be {d}×{d}"
                )));
            }
        }
        Ok(EecModel { lkc, basis, family })
    }

    pub fn l0(&self) -> i64 {
        self.lkc.l0
    }

    pub fn lkc(&self) -> &LkcVector {
        &self.lkc
    }

    pub fn basis(&self) -> EcDensityBasis {
        self.basis
    }

    pub fn evaluate(&self, u: f64) -> f64 {
        self.l0() as f64 * self.family.rho(0, u) + self.pinned(u)
    }

    /// `EEC(u) - L0 ρ_0(u)`.
    pub fn pinned(&self, u: f64) -> f64 {
        self.lkc
            .lkc
            .iter()
            .enumerate()
            .map(|(k, l)| l * self.family.rho(k + 1, u))
            .sum()
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.l0() as f64 * self.family.rho_derivative(0, u)
            + self
                .lkc
                .lkc
                .iter()
                .enumerate()
                .map(|(k, l)| l * self.family.rho_derivative(k + 1, u))
                .sum::<f64>()
    }

    /// `C(u, v) = Σ_{d,d'} σ_{dd'} ρ_d(u) ρ_{d'}(v)`: the covariance of a
    /// single-field smoothed curve. The plug-in mean has `C / N`.
    pub fn cov(&self, u: f64, v: f64) -> Result<f64> {
        let sigma = self.lkc.cov.as_ref().ok_or(Error::MissingCovariance)?;
        let d = self.basis.max_order();
        let ru: Vec<f64> = (1..=d).map(|k| self.family.rho(k, u)).collect();
        let rv: Vec<f64> = (1..=d).map(|k| self.family.rho(k, v)).collect();
        let mut c = 0.0;
        for i in 0..d {
            for j in 0..d {
                c += sigma[i][j] * ru[i] * rv[j];
            }
        }
        Ok(c)
    }

    /// Pointwise `1 - alpha_level` band `EEC(u) ± z √(C(u,u)/N)`.
    pub fn band(&self, u: f64, alpha_level: f64) -> Result<(f64, f64)> {
        let n = self.lkc.n_used;
        if n < 2 {
            return Err(Error::SampleSize { needed: 2, got: n });
        }
        let half = two_sided_z(alpha_level)? * (self.cov(u, u)?.max(0.0) / n as f64).sqrt();
        let mid = self.evaluate(u);
        Ok((mid - half, mid + half))
    }

    /// Writes `u,eec,lo,hi` rows over `grid`. Band columns stay empty when
    /// the model carries no covariance.
    pub fn write_csv<W: Write>(&self, grid: &LevelGrid, alpha_level: f64, mut out: W) -> Result<()> {
        let with_band = self.lkc.cov.is_some() && self.lkc.n_used >= 2;
        let io = |e| Error::io("<curve csv>", e);
        writeln!(out, "u,eec,lo,hi").map_err(io)?;
        for u in grid.points() {
            let eec = self.evaluate(u);
            if with_band {
                let (lo, hi) = self.band(u, alpha_level)?;
                writeln!(out, "{u},{eec},{lo},{hi}").map_err(io)?;
            } else {
                writeln!(out, "{u},{eec},,").map_err(io)?;
            }
        }
        Ok(())
    }

    /// Largest root of `EEC(u) = alpha` in `search`, by a downward scan in
    /// steps of [`SCAN_STEP`] followed by bisection.
    pub fn solve_threshold(&self, alpha: f64, search: (f64, f64)) -> Result<ThresholdResult> {
        let (lo, hi) = search;
        if !(lo < hi) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad threshold search ({lo}, {hi}) for alpha {alpha}"
            )));
        }
        let g = |u: f64| self.evaluate(u) - alpha;
        let no_root = || Error::NoRoot { alpha, lo, hi };

        let mut b = hi;
        let mut gb = g(b);
        if gb == 0.0 {
            return Ok(self.threshold_at(alpha, b));
        }
        let mut a;
        loop {
            if b <= lo {
                return Err(no_root());
            }
            a = (b - SCAN_STEP).max(lo);
            let ga = g(a);
            if ga == 0.0 {
                return Ok(self.threshold_at(alpha, a));
            }
            if (ga > 0.0) != (gb > 0.0) {
                break;
            }
            (b, gb) = (a, ga);
        }
        // The root lies in (a, b); keep the sign of g at b.
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let gm = g(mid);
            if (gm > 0.0) == (gb > 0.0) {
                b = mid;
                gb = gm;
            } else {
                a = mid;
            }
        }
        let (ga, gb) = (g(a), g(b));
        let u = if ga.abs() <= gb.abs() { a } else { b };
        if g(u).abs() > ROOT_TOL {
            return Err(Error::NoRoot { alpha, lo, hi });
        }
        Ok(self.threshold_at(alpha, u))
    }

    fn threshold_at(&self, alpha: f64, u: f64) -> ThresholdResult {
        let slope = self.derivative(u);
        let se = match (self.cov(u, u), self.lkc.n_used) {
            (Ok(c), n) if n >= 1 && slope != 0.0 => {
                Some((c.max(0.0) / (n as f64 * slope * slope)).sqrt())
            }
            _ => None,
        };
        let warning = (slope.abs() < ILL_CONDITIONED)
            .then(|| format!("ill-conditioned: |EEC'(u)| = {:e}", slope.abs()));
        ThresholdResult {
            alpha,
            u_hat: u,
            se,
            ci95: se.map(|s| (u - 1.96 * s, u + 1.96 * s)),
            warning,
        }
    }
}

/// Per-field smoothed EC curve: the plug-in model of the field's HPE.
pub fn smoothed_ec(curve: &EcCurve, max_order: usize) -> Result<EecModel> {
    EecModel::new(hpe_single(curve, max_order)?)
}

/// `χ̄(u) ± z √(Var[χ(u)]/N)` from the raw EC curves.
pub fn nonparametric_band(curves: &[EcCurve], u: f64, alpha_level: f64) -> Result<(f64, f64)> {
    let n = curves.len();
    if n < 2 {
        return Err(Error::SampleSize { needed: 2, got: n });
    }
    let values: Vec<f64> = curves.iter().map(|c| c.evaluate(u) as f64).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = two_sided_z(alpha_level)? * (var / n as f64).sqrt();
    Ok((mean - half, mean + half))
}

/// `z_{1-α/2}`.
pub fn two_sided_z(alpha_level: f64) -> Result<f64> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level alpha must lie in (0, 1), got {alpha_level}"
        )));
    }
    Ok(upper_quantile(alpha_level / 2.0))
}

/// `z` with `Φ⁺(z) = p`, for `0 < p < 1`.
pub(crate) fn upper_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let mut z = Normal::standard().inverse_cdf(1.0 - p);
    // Newton polish against the accurate tail.
    for _ in 0..2 {
        z += (gauss_tail(z) - p) / gauss_density(z);
    }
    z
}

/// Result of [`EecModel::solve_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub alpha: f64,
    #[serde(rename = "u")]
    pub u_hat: f64,
    pub se: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Equispaced levels `lo, lo + step, ..., hi`, written `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for LevelGrid {
    fn default() -> Self {
        LevelGrid {
            lo: -5.0,
            hi: 5.0,
            step: 0.01,
        }
    }
}

impl LevelGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step > 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "bad level grid {lo}:{hi}:{step}"
            )));
        }
        Ok(LevelGrid { lo, hi, step })
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        // Rounded so that e.g. 0.01 steps print as short decimals.
        (0..self.len()).map(|i| {
            let u = self.lo + i as f64 * self.step;
            (u * 1e9).round() / 1e9
        })
    }
}

impl FromStr for LevelGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("grid {s:?} is not lo:hi:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        LevelGrid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}
