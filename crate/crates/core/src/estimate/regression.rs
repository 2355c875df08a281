use nalgebra::{DMatrix, DVector};

use crate::ec::StepCurve;
use crate::error::{Error, Result};
use crate::hermite::{density_unchecked, gauss_tail};

use super::{Estimator, LkcVector};

/// Relative singular-value cutoff below which the design counts as singular.
const RANK_TOL: f64 = 1e-12;

/// Ordinary least squares of the pinned average curve on the EC densities:
/// `ȳ(u_l) = χ̄(u_l) - L0 Φ⁺(u_l) ≈ Σ_d L_d ρ_d(u_l)`.
pub fn lkc_regression(avg: &StepCurve, levels: &[f64], max_order: usize) -> Result<LkcVector> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("max order D must be at least 1".into()));
    }
    if levels.len() < max_order {
        return Err(Error::RankDeficient(format!(
            "{} levels for {max_order} unknowns",
            levels.len()
        )));
    }
    let y = DVector::from_iterator(
        levels.len(),
        levels.iter().map(|&u| avg.evaluate(u) - avg.l0 * gauss_tail(u)),
    );
    let lkc = solve(levels, &y, max_order, |_| 1.0)?;
    Ok(LkcVector {
        estimator: Estimator::Regression,
        ..LkcVector::exact(avg.l0.round() as i64, lkc)
    })
}

/// Weighted least squares with row weights `w(l)`, via an SVD of the
/// row-scaled design.
fn solve(
    levels: &[f64],
    y: &DVector<f64>,
    max_order: usize,
    w: impl Fn(usize) -> f64,
) -> Result<Vec<f64>> {
    let p = levels.len();
    let x = DMatrix::from_fn(p, max_order, |l, d| w(l).sqrt() * density_unchecked(d + 1, levels[l]));
    let y = DVector::from_fn(p, |l, _| w(l).sqrt() * y[l]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient(format!(
            "design singular values span [{smin:e}, {smax:e}]"
        )));
    }
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(beta.iter().copied().collect())
}
