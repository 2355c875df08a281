use std::f64::consts::PI;

use crate::ec::{EcCurve, StepCurve};
use crate::error::{Error, Result};
use crate::hermite::factorial;

use super::{mean_and_cov, Estimator, LkcVector};

fn check_order(max_order: usize) -> Result<()> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("max order D must be at least 1".into()));
    }
    Ok(())
}

/// The closed-form HPE over breakpoints `(u_m, jump_m)`:
/// `L_d = -(2π)^{d/2}/d! Σ_m jump_m H_d(u_m)`.
///
/// `jump_m` is the change of the curve when `u` crosses `u_m` upwards, i.e.
/// `a_{m+1} - a_m`.
pub fn hpe_values(breakpoints: impl IntoIterator<Item = (f64, f64)>, max_order: usize) -> Vec<f64> {
    let mut sums = vec![0.0; max_order];
    for (u, jump) in breakpoints {
        // H_1(u), ..., H_D(u) by the recurrence.
        let (mut prev, mut cur) = (1.0, u);
        for (k, s) in sums.iter_mut().enumerate() {
            *s += jump * cur;
            (prev, cur) = (cur, u * cur - (k + 1) as f64 * prev);
        }
    }
    sums.iter()
        .enumerate()
        .map(|(k, s)| {
            let d = k + 1;
            -(2.0 * PI).powf(0.5 * d as f64) / factorial(d) * s
        })
        .collect()
}

/// HPE of a single EC curve. No integral is evaluated.
pub fn hpe_single(curve: &EcCurve, max_order: usize) -> Result<LkcVector> {
    check_order(max_order)?;
    let lkc = hpe_values(curve.breakpoints().map(|(u, j)| (u, j as f64)), max_order);
    Ok(LkcVector {
        l0: curve.l0(),
        n_used: 1,
        ..LkcVector::exact(curve.l0(), lkc)
    })
}

/// HPE of a real-valued step curve, e.g. an average of EC curves.
pub fn hpe_step(curve: &StepCurve, max_order: usize) -> Result<Vec<f64>> {
    check_order(max_order)?;
    Ok(hpe_values(curve.breakpoints(), max_order))
}

/// Mean of per-curve HPEs, with the unbiased across-curve covariance when
/// `with_cov` is set.
pub fn hpe_sample(curves: &[EcCurve], max_order: usize, with_cov: bool) -> Result<LkcVector> {
    check_order(max_order)?;
    let first = curves.first().ok_or(Error::SampleSize { needed: 1, got: 0 })?;
    if with_cov && curves.len() < 2 {
        return Err(Error::SampleSize {
            needed: 2,
            got: curves.len(),
        });
    }
    if let Some(c) = curves.iter().find(|c| c.l0() != first.l0()) {
        return Err(Error::InconsistentSample(format!(
            "curves disagree on L0 ({} vs {})",
            first.l0(),
            c.l0()
        )));
    }
    let rows: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| hpe_values(c.breakpoints().map(|(u, j)| (u, j as f64)), max_order))
        .collect();
    let (lkc, cov) = mean_and_cov(&rows);
    Ok(LkcVector {
        l0: first.l0(),
        lkc,
        cov: if with_cov { cov } else { None },
        n_used: curves.len(),
        estimator: Estimator::Hpe,
        m: None,
        seed: None,
        se: None,
    })
}
