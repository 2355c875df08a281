//! Pointwise general linear models `Y(s) = X β(s) + ε(s)` over a sample of
//! fields: coefficient fields, contrast z-fields and standardized residuals.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::residuals::normalize_pointwise;
use crate::estimate::ResidualSample;
use crate::grid::{FieldSample, GridField, Provenance};

/// Relative cutoff on the diagonal of `R` for rank deficiency.
const RANK_TOL: f64 = 1e-10;

/// An `N × P` design with `N > P` and full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
}

impl DesignMatrix {
    /// From rows (one per observation).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::InvalidArgument("empty design matrix".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::InvalidArgument(format!(
                "design row {i} has {} entries, expected {p}",
                r.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design matrix has non-finite entries".into()));
        }
        if n <= p {
            return Err(Error::RankDeficient(format!(
                "{n} observations for {p} regressors"
            )));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let qr = x.clone().qr();
        check_rank(qr.r().diagonal().as_slice())?;
        Ok(DesignMatrix { x })
    }

    /// The `N × 1` column of ones.
    pub fn intercept(n: usize) -> Result<Self> {
        Self::from_rows(&vec![vec![1.0]; n])
    }

    /// Reads a CSV with one row per observation. A first line that does not
    /// parse as numbers is taken as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidArgument(format!("design csv: {e}")))?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidArgument(format!(
                        "design csv line {}: {e}",
                        i + 1
                    )))
                }
            }
        }
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Index of a column of exact ones, if any.
    pub fn intercept_column(&self) -> Option<usize> {
        (0..self.cols()).find(|&j| self.x.column(j).iter().all(|&v| v == 1.0))
    }
}

/// Reads a contrast from JSON: either `[c1, ..., cP]` or `{"c": [...]}`.
pub fn parse_contrast(json: &str) -> Result<Vec<f64>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Contrast {
        Plain(Vec<f64>),
        Keyed { c: Vec<f64> },
    }
    let c: Contrast = serde_json::from_str(json)
        .map_err(|e| Error::InvalidArgument(format!("contrast: {e}")))?;
    Ok(match c {
        Contrast::Plain(c) | Contrast::Keyed { c } => c,
    })
}

fn check_rank(diag: &[f64]) -> Result<()> {
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(j) = diag.iter().position(|v| !(v.abs() > RANK_TOL * max)) {
        return Err(Error::RankDeficient(format!("design column {j} is dependent")));
    }
    Ok(())
}

/// Result of [`fit_pointwise`].
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// One field per design column.
    pub beta: Vec<GridField>,
    /// `e(s) = Y(s) - X β̂(s)`, one field per observation.
    pub residuals: FieldSample,
    has_intercept: bool,
    raw_scale: Vec<f64>,
}

impl GlmFit {
    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// The same fit with every residual field smoothed by [`gaussian_smooth`].
    /// Smoothing is linear, so residuals still sum to zero across fields.
    pub fn smoothed(&self, sd: f64) -> Result<GlmFit> {
        let fields = self
            .residuals
            .iter()
            .map(|e| gaussian_smooth(e, sd))
            .collect::<Result<Vec<_>>>()?;
        Ok(GlmFit {
            residuals: FieldSample::new(fields, Provenance::Raw)?,
            ..self.clone()
        })
    }
}

/// Least-squares fit at every in-domain location, by orthogonalization.
///
/// With a column of ones the fit is done on centered data (Frisch–Waugh),
/// so that for the intercept-only design the residuals are exactly the
/// centered sample.
pub fn fit_pointwise(sample: &FieldSample, design: &DesignMatrix) -> Result<GlmFit> {
    let n = design.rows();
    let p = design.cols();
    if sample.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: sample.len(),
        });
    }
    let intercept = design.intercept_column();
    let others: Vec<usize> = (0..p).filter(|&j| Some(j) != intercept).collect();

    // Regressors entering the QR: centered non-intercept columns, or all.
    let col_means: Vec<f64> = others
        .iter()
        .map(|&j| design.x.column(j).iter().sum::<f64>() / n as f64)
        .collect();
    let xr = DMatrix::from_fn(n, others.len(), |i, k| {
        let v = design.x[(i, others[k])];
        if intercept.is_some() {
            v - col_means[k]
        } else {
            v
        }
    });
    let factor = (!others.is_empty()).then(|| {
        let qr = xr.qr();
        (qr.q(), qr.r())
    });
    if let Some((_, r)) = &factor {
        check_rank(r.diagonal().as_slice())?;
    }

    let t = sample.template();
    let fields = sample.fields();
    let per_location: Vec<(Vec<f64>, Vec<f64>)> = (0..t.len())
        .into_par_iter()
        .map(|s| {
            if !t.in_domain(s) {
                return (vec![0.0; n], vec![0.0; p]);
            }
            let mut y: Vec<f64> = fields.iter().map(|f| f.values()[s]).collect();
            let mean = if intercept.is_some() {
                let mean = fields.iter().map(|f| f.values()[s]).sum::<f64>() / n as f64;
                for (k, f) in fields.iter().enumerate() {
                    y[k] = f.values()[s] - mean;
                }
                mean
            } else {
                0.0
            };
            let mut beta = vec![0.0; p];
            if let Some((q, r)) = &factor {
                let yv = DVector::from_column_slice(&y);
                let qty = q.tr_mul(&yv);
                let fitted = q * &qty;
                let b = r
                    .solve_upper_triangular(&qty)
                    .expect("rank checked above");
                for (k, &j) in others.iter().enumerate() {
                    beta[j] = b[k];
                }
                for (yi, fi) in y.iter_mut().zip(fitted.iter()) {
                    *yi -= fi;
                }
            }
            if let Some(j) = intercept {
                beta[j] = mean
                    - others
                        .iter()
                        .zip(&col_means)
                        .map(|(&o, m)| m * beta[o])
                        .sum::<f64>();
            }
            (y, beta)
        })
        .collect();

    let geometry = |values: Vec<f64>| {
        GridField::from_parts_unchecked(t.shape().to_vec(), values, t.mask().map(<[bool]>::to_vec))
    };
    let mut res_cols = vec![vec![0.0; t.len()]; n];
    let mut beta_cols = vec![vec![0.0; t.len()]; p];
    for (s, (e, b)) in per_location.into_iter().enumerate() {
        for k in 0..n {
            res_cols[k][s] = e[k];
        }
        for j in 0..p {
            beta_cols[j][s] = b[j];
        }
    }
    let raw_scale = (0..t.len())
        .map(|s| fields.iter().map(|f| f.values()[s].abs()).fold(0.0, f64::max))
        .collect();
    Ok(GlmFit {
        beta: beta_cols.into_iter().map(geometry).collect(),
        residuals: FieldSample::new(res_cols.into_iter().map(geometry).collect(), Provenance::Raw)?,
        has_intercept: intercept.is_some(),
        raw_scale,
    })
}

/// `z(s) = cᵀβ̂(s) / sqrt(σ̂²(s) cᵀ(XᵀX)⁻¹c)` with `σ̂² = |e(s)|²/(N-P)`.
pub fn zscore_field(fit: &GlmFit, design: &DesignMatrix, contrast: &[f64]) -> Result<GridField> {
    let p = design.cols();
    if contrast.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            found: contrast.len(),
        });
    }
    let dof = (design.rows() - p) as f64;
    // cᵀ(XᵀX)⁻¹c = |R⁻ᵀc|² for X = QR.
    let r = design.x.clone().qr().r();
    let v = r
        .tr_solve_upper_triangular(&DVector::from_column_slice(contrast))
        .ok_or_else(|| Error::RankDeficient("singular R".into()))?;
    let quad = v.norm_squared();
    let t = fit.residuals.template();
    let mut z = vec![0.0; t.len()];
    for (s, zs) in z.iter_mut().enumerate().filter(|(s, _)| t.in_domain(*s)) {
        let ss: f64 = fit.residuals.iter().map(|f| f.values()[s].powi(2)).sum();
        if ss == 0.0 {
            return Err(Error::DegenerateLocation(s));
        }
        let eta: f64 = contrast.iter().zip(&fit.beta).map(|(c, b)| c * b.values()[s]).sum();
        *zs = eta / (ss / dof * quad).sqrt();
    }
    Ok(GridField::from_parts_unchecked(
        t.shape().to_vec(),
        z,
        t.mask().map(<[bool]>::to_vec),
    ))
}

/// `R_n(s) = e_n(s)/|e(s)|`. The zero-sum identity is part of the result's
/// contract only when the design has an intercept; see
/// [`ResidualSample::zero_sum`].
pub fn glm_standardized_residuals(fit: &GlmFit) -> Result<ResidualSample> {
    let columns: Vec<Vec<f64>> = fit.residuals.iter().map(|f| f.values().to_vec()).collect();
    normalize_pointwise(&fit.residuals, columns, &fit.raw_scale, fit.has_intercept)
}

/// Gaussian smoothing with standard deviation `sd` grid units, separably
/// along every axis. Kernel weights are renormalized over in-domain
/// neighbours, so masked-out values never leak in.
pub fn gaussian_smooth(field: &GridField, sd: f64) -> Result<GridField> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing sd must be positive, got {sd}")));
    }
    let reach = (crate::sim::TRUNCATION * sd).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| (-(k * k) as f64 / (2.0 * sd * sd)).exp())
        .collect();
    let shape = field.shape().to_vec();
    let strides = crate::grid::strides(&shape);
    let domain = field.domain();
    let mut values: Vec<f64> = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| if domain[i] { v } else { 0.0 })
        .collect();
    let mut weight: Vec<f64> = domain.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    for axis in 0..shape.len() {
        let (len, stride) = (shape[axis] as isize, strides[axis]);
        let mut next_v = vec![0.0; values.len()];
        let mut next_w = vec![0.0; values.len()];
        for i in 0..values.len() {
            let pos = ((i / stride) % shape[axis]) as isize;
            for (k, w) in kernel.iter().enumerate() {
                let q = pos + k as isize - reach;
                if (0..len).contains(&q) {
                    let j = (i as isize + (q - pos) * stride as isize) as usize;
                    next_v[i] += w * values[j];
                    next_w[i] += w * weight[j];
                }
            }
        }
        values = next_v;
        weight = next_w;
    }
    let out = values
        .iter()
        .zip(&weight)
        .enumerate()
        .map(|(i, (v, w))| if domain[i] { v / w } else { field.values()[i] })
        .collect();
    field.with_values(out)
}
