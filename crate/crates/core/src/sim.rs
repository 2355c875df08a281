//! Test fields with known LKCs: smoothed white noise on a square lattice and
//! the 1D Gaussian scale-space field.
//!
//! Both generators are discrete convolutions of iid unit-variance noise,
//! normalized pointwise by the `ℓ²` norm of the kernel weights so that every
//! value has variance exactly 1.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::LkcVector;
use crate::grid::{FieldSample, GridField};
use crate::rng::SeedStream;

/// Kernels are cut off at this many bandwidths.
pub const TRUNCATION: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Gaussian,
    /// `(χ²_3 - 3)/√6`.
    Chisq3,
}

impl Noise {
    fn fill(self, rng: &mut impl Rng, out: &mut [f64]) {
        match self {
            Noise::Gaussian => out.iter_mut().for_each(|w| *w = rng.sample(StandardNormal)),
            Noise::Chisq3 => {
                let chi = ChiSquared::new(3.0).expect("valid degrees of freedom");
                let scale = 6f64.sqrt();
                out.iter_mut().for_each(|w| *w = (chi.sample(rng) - 3.0) / scale);
            }
        }
    }
}

/// Where the white noise of the isotropic field lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    /// The lattice extended by the kernel reach on every side, so the field
    /// is stationary on `{1..L}²`.
    #[default]
    Padded,
    /// Only the sampled lattice `{1..L}²`. The field is then not stationary
    /// within a few bandwidths of the edges.
    Confined,
}

/// Smoothed white noise sampled on the `L × L` lattice `{1..L}²` with a
/// Gaussian kernel of bandwidth `ν`; covariance `≈ exp(-β|t|²)` with
/// `β = 1/(4ν²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicSpec {
    #[serde(rename = "L")]
    pub side: usize,
    pub nu: f64,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub support: Support,
}

impl IsotropicSpec {
    pub fn new(side: usize, nu: f64, noise: Noise) -> Result<Self> {
        let s = IsotropicSpec {
            side,
            nu,
            noise,
            support: Support::Padded,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 4 || !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "isotropic field needs L >= 4 and nu > 0, got L = {}, nu = {}",
                self.side, self.nu
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        1.0 / (4.0 * self.nu * self.nu)
    }
}

/// `L1 = 2√(2β)(L-1)`, `L2 = 2β(L-1)²`.
pub fn true_lkc_isotropic(spec: &IsotropicSpec) -> LkcVector {
    let beta = spec.beta();
    let len = spec.side.saturating_sub(1) as f64;
    LkcVector::exact(1, vec![2.0 * (2.0 * beta).sqrt() * len, 2.0 * beta * len * len])
}

/// Per-axis convolution weights, already divided by the square root of
/// their summed squares. Row `i` covers source indices `start..start+len`.
struct Kernel1d {
    rows: Vec<(usize, Vec<f64>)>,
}

impl Kernel1d {
    /// Gaussian weights `exp(-(x_i - s_k)²/(2h²))` from targets `x` onto
    /// sources `s_k = s0 + k·ds`, `k < n_src`.
    fn gaussian(targets: &[f64], h: f64, s0: f64, ds: f64, n_src: usize) -> Self {
        let reach = TRUNCATION * h;
        let rows = targets
            .iter()
            .map(|&x| {
                let first = (((x - reach - s0) / ds).ceil().max(0.0)) as usize;
                let last = (((x + reach - s0) / ds).floor() as isize).min(n_src as isize - 1);
                let mut w: Vec<f64> = (first as isize..=last)
                    .map(|k| {
                        let d = x - (s0 + k as f64 * ds);
                        (-d * d / (2.0 * h * h)).exp()
                    })
                    .collect();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                w.iter_mut().for_each(|v| *v /= norm);
                (first, w)
            })
            .collect();
        Kernel1d { rows }
    }

    fn apply(&self, i: usize, src: impl Fn(usize) -> f64) -> f64 {
        let (start, w) = &self.rows[i];
        w.iter().enumerate().map(|(k, wk)| wk * src(start + k)).sum()
    }
}

/// `n` independent isotropic fields; field `i` draws its noise from
/// `stream.rng(i)`.
pub fn simulate_isotropic(spec: &IsotropicSpec, n: usize, stream: &SeedStream) -> Result<FieldSample> {
    spec.validate()?;
    let l = spec.side;
    let pad = match spec.support {
        Support::Padded => (TRUNCATION * spec.nu).ceil() as usize,
        Support::Confined => 0,
    };
    let m = l + 2 * pad;
    let coords: Vec<f64> = (1..=l).map(|k| k as f64).collect();
    let kernel = Kernel1d::gaussian(&coords, spec.nu, 1.0 - pad as f64, 1.0, m);
    let fields = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut noise = vec![0.0; m * m];
            spec.noise.fill(&mut stream.rng(i as u64), &mut noise);
            // Separable: the 2D weights and their norm factor over the axes.
            let mut rows = vec![0.0; m * l];
            for r in 0..m {
                for c in 0..l {
                    rows[r * l + c] = kernel.apply(c, |k| noise[r * m + k]);
                }
            }
            let mut out = vec![0.0; l * l];
            for r in 0..l {
                for c in 0..l {
                    out[r * l + c] = kernel.apply(r, |k| rows[k * l + c]);
                }
            }
            GridField::new(vec![l, l], out)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSample::raw(fields)
}

/// The scale-space field `f(t, γ) ∝ γ^{-1/2} ∫ exp(-(t-s)²/(2γ²)) dW(s)` on
/// `[1, L] × [γ1, γ2]`, sampled on `n_t` equispaced `t` and `n_gamma`
/// log-uniform `γ`. Field shape is `[n_t, n_gamma]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpaceSpec {
    #[serde(rename = "L")]
    pub length: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_t: usize,
    pub n_gamma: usize,
    #[serde(default)]
    pub noise: Noise,
}

impl ScaleSpaceSpec {
    pub const DEFAULT_N_T: usize = 128;
    pub const DEFAULT_N_GAMMA: usize = 32;

    pub fn new(length: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        let s = ScaleSpaceSpec {
            length,
            gamma1,
            gamma2,
            n_t: Self::DEFAULT_N_T,
            n_gamma: Self::DEFAULT_N_GAMMA,
            noise: Noise::Gaussian,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length > 1.0
            && self.length.is_finite()
            && self.gamma1 > 0.0
            && self.gamma1 < self.gamma2
            && self.gamma2.is_finite()
            && self.n_t >= 2
            && self.n_gamma >= 2;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "scale-space field needs L > 1, 0 < gamma1 < gamma2 and at least 2 grid \
                 points per axis, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        let dt = (self.length - 1.0) / (self.n_t - 1) as f64;
        (0..self.n_t).map(|i| 1.0 + i as f64 * dt).collect()
    }

    pub fn gamma_grid(&self) -> Vec<f64> {
        let ratio = self.gamma2 / self.gamma1;
        (0..self.n_gamma)
            .map(|j| self.gamma1 * ratio.powf(j as f64 / (self.n_gamma - 1) as f64))
            .collect()
    }
}

/// `L1 = (L-1)/(2√2)(1/γ1 + 1/γ2) + log(γ2/γ1)/√2`,
/// `L2 = (L-1)/2 (1/γ1 - 1/γ2)`.
pub fn true_lkc_scale_space(spec: &ScaleSpaceSpec) -> LkcVector {
    let len = spec.length - 1.0;
    let (g1, g2) = (spec.gamma1, spec.gamma2);
    let l1 = len / (2.0 * SQRT_2) * (1.0 / g1 + 1.0 / g2) + (g2 / g1).ln() / SQRT_2;
    let l2 = len / 2.0 * (1.0 / g1 - 1.0 / g2);
    LkcVector::exact(1, vec![l1, l2])
}

/// `n` independent scale-space fields. The noise lattice shares the `t`
/// spacing and extends `6·γ2` past both ends of `[1, L]`.
pub fn simulate_scale_space(spec: &ScaleSpaceSpec, n: usize, stream: &SeedStream) -> Result<FieldSample> {
    spec.validate()?;
    let t = spec.t_grid();
    let dt = t[1] - t[0];
    let pad = (TRUNCATION * spec.gamma2 / dt).ceil() as usize;
    let s0 = t[0] - pad as f64 * dt;
    let n_src = spec.n_t + 2 * pad;
    let kernels: Vec<Kernel1d> = spec
        .gamma_grid()
        .iter()
        .map(|&g| Kernel1d::gaussian(&t, g, s0, dt, n_src))
        .collect();
    let (nt, ng) = (spec.n_t, spec.n_gamma);
    let fields = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut noise = vec![0.0; n_src];
            spec.noise.fill(&mut stream.rng(i as u64), &mut noise);
            let mut out = vec![0.0; nt * ng];
            for (j, kernel) in kernels.iter().enumerate() {
                for r in 0..nt {
                    out[r * ng + j] = kernel.apply(r, |k| noise[k]);
                }
            }
            GridField::new(vec![nt, ng], out)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSample::raw(fields)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Isotropic,
    Scalespace,
}

/// Field model as read from JSON, e.g.
/// `{"family":"isotropic","L":50,"nu":5,"noise":"gaussian"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub family: Family,
    #[serde(rename = "L")]
    pub side: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<[f64; 2]>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub support: Support,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_gamma: Option<usize>,
}

/// A field model plus sample size and seed, e.g.
/// `{"family":"isotropic","L":50,"nu":5,"noise":"gaussian","n":75,"seed":1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub field: FieldConfig,
    pub n: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::InvalidArgument(format!("config: {e}"));
        let mut map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(bad)?;
        let n = map
            .remove("n")
            .ok_or_else(|| Error::InvalidArgument("config: missing field `n`".into()))?;
        let n = serde_json::from_value(n).map_err(bad)?;
        let seed = match map.remove("seed") {
            Some(v) => serde_json::from_value(v).map_err(bad)?,
            None => 0,
        };
        let field = serde_json::from_value(serde_json::Value::Object(map)).map_err(bad)?;
        Ok(SimConfig { field, n, seed })
    }

    pub fn model(&self) -> Result<FieldModel> {
        self.field.model()
    }
}

/// A validated field model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldModel {
    Isotropic(IsotropicSpec),
    ScaleSpace(ScaleSpaceSpec),
}

impl FieldModel {
    pub fn simulate(&self, n: usize, stream: &SeedStream) -> Result<FieldSample> {
        match self {
            FieldModel::Isotropic(s) => simulate_isotropic(s, n, stream),
            FieldModel::ScaleSpace(s) => simulate_scale_space(s, n, stream),
        }
    }

    pub fn true_lkc(&self) -> LkcVector {
        match self {
            FieldModel::Isotropic(s) => true_lkc_isotropic(s),
            FieldModel::ScaleSpace(s) => true_lkc_scale_space(s),
        }
    }
}

impl FieldConfig {
    pub fn model(&self) -> Result<FieldModel> {
        match self.family {
            Family::Isotropic => {
                let nu = self
                    .nu
                    .ok_or_else(|| Error::InvalidArgument("isotropic config needs \"nu\"".into()))?;
                if self.side.fract() != 0.0 || self.side < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "isotropic L must be an integer, got {}",
                        self.side
                    )));
                }
                let spec = IsotropicSpec {
                    support: self.support,
                    ..IsotropicSpec::new(self.side as usize, nu, self.noise)?
                };
                Ok(FieldModel::Isotropic(spec))
            }
            Family::Scalespace => {
                let [g1, g2] = self.gamma.ok_or_else(|| {
                    Error::InvalidArgument("scale-space config needs \"gamma\": [g1, g2]".into())
                })?;
                let spec = ScaleSpaceSpec {
                    length: self.side,
                    gamma1: g1,
                    gamma2: g2,
                    n_t: self.n_t.unwrap_or(ScaleSpaceSpec::DEFAULT_N_T),
                    n_gamma: self.n_gamma.unwrap_or(ScaleSpaceSpec::DEFAULT_N_GAMMA),
                    noise: self.noise,
                };
                spec.validate()?;
                Ok(FieldModel::ScaleSpace(spec))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_truth() {
        let t = true_lkc_isotropic(&IsotropicSpec::new(50, 5.0, Noise::Gaussian).unwrap());
        assert!((t.lkc[0] - 13.86).abs() < 0.005, "{:?}", t.lkc);
        assert!((t.lkc[1] - 48.02).abs() < 0.005);
        assert_eq!(t.l0, 1);
        let wide = IsotropicSpec { side: 50, nu: 1e9, ..IsotropicSpec::new(50, 5.0, Noise::Gaussian).unwrap() };
        assert!(true_lkc_isotropic(&wide).lkc.iter().all(|&l| l < 1e-6));
        let point = IsotropicSpec { side: 1, ..IsotropicSpec::new(50, 5.0, Noise::Gaussian).unwrap() };
        assert_eq!(true_lkc_isotropic(&point).lkc, vec![0.0, 0.0]);
        assert!(IsotropicSpec::new(3, 5.0, Noise::Gaussian).is_err());
        assert!(IsotropicSpec::new(10, 0.0, Noise::Gaussian).is_err());
    }

    #[test]
    fn scale_space_truth() {
        let t = true_lkc_scale_space(&ScaleSpaceSpec::new(50.0, 4.0, 15.0).unwrap());
        assert!((t.lkc[0] - 6.42).abs() < 0.005, "{:?}", t.lkc);
        assert!((t.lkc[1] - 4.49).abs() < 0.005);
        let mut flat = ScaleSpaceSpec::new(50.0, 4.0, 15.0).unwrap();
        flat.gamma2 = 4.0;
        let f = true_lkc_scale_space(&flat);
        assert_eq!(f.lkc[1], 0.0);
        assert!((f.lkc[0] - 49.0 / (SQRT_2 * 4.0)).abs() < 1e-12);
        let mut unit = ScaleSpaceSpec::new(50.0, 4.0, 15.0).unwrap();
        unit.length = 1.0;
        let u = true_lkc_scale_space(&unit);
        assert!((u.lkc[0] - (15.0f64 / 4.0).ln() / SQRT_2).abs() < 1e-15);
        assert_eq!(u.lkc[1], 0.0);
        assert!(ScaleSpaceSpec::new(50.0, 15.0, 4.0).is_err());
    }

    /// Exact covariance of the discrete isotropic field between two points.
    fn exact_cov(spec: &IsotropicSpec, a: (usize, usize), b: (usize, usize)) -> f64 {
        let pad = match spec.support {
            Support::Padded => (TRUNCATION * spec.nu).ceil() as usize,
            Support::Confined => 0,
        };
        let coords: Vec<f64> = (1..=spec.side).map(|k| k as f64).collect();
        let k = Kernel1d::gaussian(&coords, spec.nu, 1.0 - pad as f64, 1.0, spec.side + 2 * pad);
        let dot = |i: usize, j: usize| {
            let (si, wi) = &k.rows[i];
            let (sj, wj) = &k.rows[j];
            (0..spec.side + 2 * pad)
                .map(|x| {
                    let vi = x.checked_sub(*si).and_then(|o| wi.get(o)).copied().unwrap_or(0.0);
                    let vj = x.checked_sub(*sj).and_then(|o| wj.get(o)).copied().unwrap_or(0.0);
                    vi * vj
                })
                .sum::<f64>()
        };
        dot(a.0, b.0) * dot(a.1, b.1)
    }

    #[test]
    fn isotropic_moments() {
        let spec = IsotropicSpec::new(50, 5.0, Noise::Gaussian).unwrap();
        let reps = 5000;
        let sample = simulate_isotropic(&spec, reps, &SeedStream::new(11).child("sim")).unwrap();
        let points = [(3, 7), (25, 25), (49, 0), (12, 40), (20, 25)];
        for &(r, c) in &points {
            let xs: Vec<f64> = sample.iter().map(|f| f.values()[r * 50 + c]).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            assert!(mean.abs() < 0.03 * 2.0, "mean {mean} at {r},{c}");
            assert!((var - 1.0).abs() < 0.05, "var {var} at {r},{c}");
        }
        // Lag 10 in the interior: exp(-β·100) = exp(-1).
        let (a, b) = ((20, 25), (30, 25));
        let xs: Vec<(f64, f64)> = sample
            .iter()
            .map(|f| (f.values()[a.0 * 50 + a.1], f.values()[b.0 * 50 + b.1]))
            .collect();
        let corr = xs.iter().map(|(x, y)| x * y).sum::<f64>() / reps as f64;
        let exact = exact_cov(&spec, a, b);
        assert!((exact - (-1f64).exp()).abs() < 1e-3, "discrete {exact}");
        assert!((corr - exact).abs() < 0.04, "MC {corr} vs {exact}");
        assert!((exact_cov(&spec, (0, 0), (0, 0)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn confined_support_still_has_unit_variance() {
        let spec = IsotropicSpec {
            support: Support::Confined,
            ..IsotropicSpec::new(20, 3.0, Noise::Gaussian).unwrap()
        };
        for (a, b) in [((0, 0), (0, 0)), ((10, 3), (10, 3)), ((19, 19), (19, 19))] {
            assert!((exact_cov(&spec, a, b) - 1.0).abs() < 1e-14);
        }
        let sample = simulate_isotropic(&spec, 3000, &SeedStream::new(4)).unwrap();
        let var = sample.iter().map(|f| f.values()[0].powi(2)).sum::<f64>() / 3000.0;
        assert!((var - 1.0).abs() < 0.08, "corner variance {var}");
    }

    #[test]
    fn chisq_noise_is_standardized() {
        let spec = IsotropicSpec::new(8, 0.3, Noise::Chisq3).unwrap();
        // Tiny bandwidth: each value is essentially one noise variable.
        let sample = simulate_isotropic(&spec, 4000, &SeedStream::new(5)).unwrap();
        let xs: Vec<f64> = sample.iter().map(|f| f.values()[27]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let skew = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(mean.abs() < 0.06 && (var - 1.0).abs() < 0.08, "{mean} {var}");
        // Skewness of χ²_3 is √(8/3) ≈ 1.63.
        assert!(skew > 1.2, "skew {skew}");
    }

    #[test]
    fn scale_space_variance_and_smoothness() {
        let spec = ScaleSpaceSpec::new(50.0, 4.0, 15.0).unwrap();
        let sample = simulate_scale_space(&spec, 2000, &SeedStream::new(2)).unwrap();
        assert_eq!(sample.shape(), &[128, 32]);
        for &(r, c) in &[(0, 0), (64, 16), (127, 31), (5, 30)] {
            let var = sample.iter().map(|f| f.values()[r * 32 + c].powi(2)).sum::<f64>() / 2000.0;
            assert!((var - 1.0).abs() < 0.1, "var {var} at {r},{c}");
        }
        let sign_changes = |j: usize| -> f64 {
            sample
                .iter()
                .map(|f| {
                    (1..128)
                        .filter(|&r| (f.values()[r * 32 + j] > 0.0) != (f.values()[(r - 1) * 32 + j] > 0.0))
                        .count() as f64
                })
                .sum::<f64>()
                / 2000.0
        };
        assert!(sign_changes(31) < sign_changes(0));
    }

    #[test]
    fn deterministic_streams() {
        let spec = ScaleSpaceSpec::new(20.0, 2.0, 5.0).unwrap();
        let a = simulate_scale_space(&spec, 3, &SeedStream::new(1)).unwrap();
        let b = simulate_scale_space(&spec, 3, &SeedStream::new(1)).unwrap();
        assert_eq!(a, b);
        let c = simulate_scale_space(&spec, 3, &SeedStream::new(2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_parsing() {
        let c = SimConfig::from_json(
            r#"{"family":"isotropic","L":50,"nu":5,"noise":"chisq3","n":3,"seed":9}"#,
        )
        .unwrap();
        assert!(matches!(c.model().unwrap(), FieldModel::Isotropic(s) if s.noise == Noise::Chisq3));
        let s = SimConfig::from_json(r#"{"family":"scalespace","L":50,"gamma":[4,15],"n":2}"#).unwrap();
        let m = s.model().unwrap();
        assert!((m.true_lkc().lkc[0] - 6.42).abs() < 0.005);
        assert!(SimConfig::from_json(r#"{"family":"warped","L":50,"n":2}"#).is_err());
        let missing = SimConfig::from_json(r#"{"family":"isotropic","L":50,"n":2}"#).unwrap();
        assert!(missing.model().is_err());
        assert_eq!((c.n, c.seed, missing.seed), (3, 9, 0));
        assert!(SimConfig::from_json(r#"{"family":"isotropic","L":50,"nu":5}"#).is_err());
        assert!(SimConfig::from_json(r#"{"family":"isotropic","L":50,"nu":5,"n":2,"sigma":1}"#).is_err());
    }
}
