use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ec::{ec_curve, ConnectivityRule};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::rng::SeedStream;

use super::hpe::hpe_values;
use super::{pairwise_sum, Estimator, LkcVector, ResidualSample};

/// `Σ_n g_n R_n` for given multipliers.
pub fn gmf_combine(residuals: &ResidualSample, g: &[f64]) -> Result<GridField> {
    if g.len() != residuals.len() {
        return Err(Error::LengthMismatch {
            expected: residuals.len(),
            found: g.len(),
        });
    }
    let t = residuals.sample().template();
    let mut values = vec![0.0; t.len()];
    for (field, &gn) in residuals.fields().iter().zip(g) {
        for (v, r) in values.iter_mut().zip(field.values()) {
            *v += gn * r;
        }
    }
    Ok(GridField::from_parts_unchecked(
        t.shape().to_vec(),
        values,
        t.mask().map(<[bool]>::to_vec),
    ))
}

/// One Gaussian multiplier field with `g ~ N(0, I_N)` drawn from `rng`.
pub fn gmf_draw(residuals: &ResidualSample, rng: &mut impl Rng) -> GridField {
    let g: Vec<f64> = (0..residuals.len()).map(|_| rng.sample(StandardNormal)).collect();
    gmf_combine(residuals, &g).expect("multiplier count matches")
}

/// The bootstrapped HPE: the mean of HPEs over `m` multiplier fields, where
/// replicate `i` draws its multipliers from `stream.rng(i)`. The Monte Carlo
/// standard error of the mean is returned in `se`.
pub fn bhpe(
    residuals: &ResidualSample,
    m: usize,
    max_order: usize,
    rule: ConnectivityRule,
    stream: &SeedStream,
) -> Result<LkcVector> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {m}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let field = gmf_draw(residuals, &mut stream.rng(i as u64));
            replicate(&field, max_order, rule)
        })
        .collect::<Result<_>>()?;
    summarize(residuals, rows, max_order, rule)
}

/// [`bhpe`] with explicit multiplier vectors, one per replicate.
pub fn bhpe_with_multipliers(
    residuals: &ResidualSample,
    multipliers: &[Vec<f64>],
    max_order: usize,
    rule: ConnectivityRule,
) -> Result<LkcVector> {
    if multipliers.is_empty() {
        return Err(Error::InvalidArgument("no multiplier vectors".into()));
    }
    let rows: Vec<Vec<f64>> = multipliers
        .par_iter()
        .map(|g| replicate(&gmf_combine(residuals, g)?, max_order, rule))
        .collect::<Result<_>>()?;
    summarize(residuals, rows, max_order, rule)
}

fn replicate(field: &GridField, max_order: usize, rule: ConnectivityRule) -> Result<Vec<f64>> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("max order D must be at least 1".into()));
    }
    let curve = ec_curve(field, rule)?;
    Ok(hpe_values(
        curve.breakpoints().map(|(u, j)| (u, j as f64)),
        max_order,
    ))
}

fn summarize(
    residuals: &ResidualSample,
    rows: Vec<Vec<f64>>,
    max_order: usize,
    rule: ConnectivityRule,
) -> Result<LkcVector> {
    let m = rows.len();
    let column = |d: usize| rows.iter().map(|r| r[d]).collect::<Vec<f64>>();
    let lkc: Vec<f64> = (0..max_order).map(|d| pairwise_sum(&column(d)) / m as f64).collect();
    let se = (m >= 2).then(|| {
        (0..max_order)
            .map(|d| {
                let dev: Vec<f64> = column(d).iter().map(|x| (x - lkc[d]).powi(2)).collect();
                (pairwise_sum(&dev) / ((m - 1) * m) as f64).sqrt()
            })
            .collect()
    });
    let l0 = residuals.sample().template().domain_ec(rule)?.l0;
    Ok(LkcVector {
        l0,
        lkc,
        cov: None,
        n_used: residuals.len(),
        estimator: Estimator::Bhpe,
        m: Some(m),
        seed: None,
        se,
    })
}
