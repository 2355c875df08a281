//! LKC estimators: the Hermite projection estimator (HPE) for single fields
//! and samples, its bootstrapped version (bHPE) on standardized residuals,
//! and the least-squares regression estimator kept for comparison.

mod bootstrap;
mod hpe;
mod regression;
pub(crate) mod residuals;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bootstrap::{bhpe, bhpe_with_multipliers, gmf_combine, gmf_draw};
pub use hpe::{hpe_sample, hpe_single, hpe_step, hpe_values};
pub use regression::lkc_regression;
pub use residuals::{normalize_known_mean, standardize, ResidualSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Hpe,
    Bhpe,
    Regression,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Hpe => "hpe",
            Estimator::Bhpe => "bhpe",
            Estimator::Regression => "regression",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hpe" => Ok(Estimator::Hpe),
            "bhpe" => Ok(Estimator::Bhpe),
            "regression" => Ok(Estimator::Regression),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Estimated LKCs `(L_1, ..., L_D)` together with the known `L_0`.
///
/// `cov` is the across-field covariance of per-field estimates (so the
/// covariance of the mean is `cov / n`). `se` is the Monte Carlo standard
/// error of a bootstrap mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LkcVector {
    pub l0: i64,
    pub lkc: Vec<f64>,
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(rename = "n")]
    pub n_used: usize,
    pub estimator: Estimator,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<f64>>,
}

impl LkcVector {
    /// Known LKCs, e.g. the closed-form values of a simulation model.
    pub fn exact(l0: i64, lkc: Vec<f64>) -> Self {
        LkcVector {
            l0,
            lkc,
            cov: None,
            n_used: 0,
            estimator: Estimator::Hpe,
            m: None,
            seed: None,
            se: None,
        }
    }

    pub fn max_order(&self) -> usize {
        self.lkc.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("LKC vector serializes")
    }
}

/// Pairwise (cascade) summation. Fixed shape, so the result depends only on
/// the order of `xs`.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Column-wise mean and unbiased covariance of the rows of `rows`.
pub(crate) fn mean_and_cov(rows: &[Vec<f64>]) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..d)
        .map(|j| pairwise_sum(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()) / n as f64)
        .collect();
    if n < 2 {
        return (mean, None);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let prods: Vec<f64> = rows
                .iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .collect();
            let c = pairwise_sum(&prods) / (n - 1) as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    (mean, Some(cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout() {
        let v = LkcVector {
            l0: 1,
            lkc: vec![1.5, 2.0],
            cov: None,
            n_used: 10,
            estimator: Estimator::Bhpe,
            m: Some(500),
            seed: Some(3),
            se: Some(vec![0.1, 0.2]),
        };
        let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        for key in ["l0", "lkc", "cov", "n", "estimator", "M", "seed", "se"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["estimator"], "bhpe");
        assert_eq!(json["M"], 500);
        let back: LkcVector = serde_json::from_value(json).unwrap();
        assert_eq!(back, v);
        assert_eq!("regression".parse::<Estimator>().unwrap(), Estimator::Regression);
        assert!("warp".parse::<Estimator>().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn two_row_covariance() {
        let (mean, cov) = mean_and_cov(&[vec![1.0, 2.0], vec![3.0, -2.0]]);
        assert_eq!(mean, vec![2.0, 0.0]);
        // Half the outer product of the difference (2, -4).
        assert_eq!(cov.unwrap(), vec![vec![2.0, -4.0], vec![-4.0, 8.0]]);
    }
}
