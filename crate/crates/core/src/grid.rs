//! Scalar fields sampled on regular 1D/2D/3D grids with an optional domain
//! mask, samples of such fields, and the Euler characteristic of the domain.
//!
//! Values are stored flat in row-major order (the last axis varies fastest).
//! Grid spacing is always one: only the order structure of the lattice is
//! used by the topology code, and the simulated ground truths are stated on
//! integer lattices.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::ec::{euler_characteristic, ConnectivityRule};
use crate::error::{Error, Result};

/// Value substituted for masked-out grid points by [`GridField::padded_values`].
///
/// Masked points never enter a superlevel set, so the concrete value only has
/// to sort below every in-domain value.
pub const OUTSIDE: f64 = f64::MIN;

/// A scalar field on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    shape: Vec<usize>,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl GridField {
    /// Field on the full rectangular grid.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::build(shape, values, None)
    }

    /// Field restricted to the points where `mask` is true.
    pub fn with_mask(shape: Vec<usize>, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        Self::build(shape, values, Some(mask))
    }

    fn build(shape: Vec<usize>, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if let Some(mask) = &mask {
            if mask.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: mask.len(),
                });
            }
            if !mask.iter().any(|&m| m) {
                return Err(Error::EmptyDomain);
            }
        }
        for (index, &value) in values.iter().enumerate() {
            let inside = mask.as_ref().map_or(true, |m| m[index]);
            if inside && !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(GridField {
            shape,
            values,
            mask,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Number of grid points, inside or outside the domain.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn in_domain(&self, index: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[index])
    }

    /// The domain as a boolean grid (all true without a mask).
    pub fn domain(&self) -> Cow<'_, [bool]> {
        match &self.mask {
            Some(m) => Cow::Borrowed(m),
            None => Cow::Owned(vec![true; self.values.len()]),
        }
    }

    /// Number of in-domain grid points.
    pub fn domain_size(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.values.len(), |m| m.iter().filter(|&&b| b).count())
    }

    /// Values with every masked-out point replaced by [`OUTSIDE`].
    pub fn padded_values(&self) -> Vec<f64> {
        match &self.mask {
            None => self.values.clone(),
            Some(m) => self
                .values
                .iter()
                .zip(m)
                .map(|(&v, &inside)| if inside { v } else { OUTSIDE })
                .collect(),
        }
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        flatten(&self.shape, index)
    }

    pub fn unflatten(&self, linear: usize) -> Vec<usize> {
        unflatten(&self.shape, linear)
    }

    /// Applies `f` to every value. Masked-out values are passed through too;
    /// the result is revalidated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridField> {
        Self::build(
            self.shape.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
            self.mask.clone(),
        )
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<GridField> {
        Self::build(self.shape.clone(), values, self.mask.clone())
    }

    pub(crate) fn from_parts_unchecked(
        shape: Vec<usize>,
        values: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        GridField {
            shape,
            values,
            mask,
        }
    }

    /// Writes a 2D field as CSV, one line per index of the first axis.
    /// Masked-out points are left empty.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.dim() != 2 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "csv export is only defined for 2D fields",
            ));
        }
        let cols = self.shape[1];
        for (r, row) in self.values.chunks(cols).enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if self.in_domain(r * cols + c) {
                        format!("{v:?}")
                    } else {
                        String::new()
                    }
                })
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 3 || shape.contains(&0) {
        return Err(Error::Shape(shape.to_vec()));
    }
    Ok(())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

pub fn flatten(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    index
        .iter()
        .zip(shape)
        .fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn unflatten(shape: &[usize], mut linear: usize) -> Vec<usize> {
    let mut index = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        index[k] = linear % shape[k];
        linear /= shape[k];
    }
    index
}

/// Where a [`FieldSample`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    StandardizedResidual,
    BootstrapReplicate,
}

/// `N >= 1` fields sharing one grid and one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    fields: Vec<GridField>,
    provenance: Provenance,
}

impl FieldSample {
    pub fn new(fields: Vec<GridField>, provenance: Provenance) -> Result<Self> {
        let first = fields.first().ok_or(Error::SampleSize { needed: 1, got: 0 })?;
        for (n, f) in fields.iter().enumerate().skip(1) {
            if f.shape != first.shape {
                return Err(Error::InconsistentSample(format!(
                    "field {n} has shape {:?}, field 0 has {:?}",
                    f.shape, first.shape
                )));
            }
            if f.mask != first.mask {
                return Err(Error::InconsistentSample(format!(
                    "field {n} has a different domain mask than field 0"
                )));
            }
        }
        Ok(FieldSample { fields, provenance })
    }

    pub fn raw(fields: Vec<GridField>) -> Result<Self> {
        Self::new(fields, Provenance::Raw)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<GridField> {
        self.fields
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn shape(&self) -> &[usize] {
        self.fields[0].shape()
    }

    pub fn dim(&self) -> usize {
        self.fields[0].dim()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.fields[0].mask()
    }

    pub fn template(&self) -> &GridField {
        &self.fields[0]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GridField> {
        self.fields.iter()
    }
}

/// Euler characteristic of the domain, the known coefficient of `Φ⁺` in the
/// Gaussian kinematic formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEc {
    pub l0: i64,
}

/// Euler characteristic of the complex spanned by the true cells of `mask`.
pub fn domain_ec(shape: &[usize], mask: &[bool], rule: ConnectivityRule) -> Result<DomainEc> {
    validate_shape(shape)?;
    rule.check(shape.len())?;
    let n: usize = shape.iter().product();
    if mask.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: mask.len(),
        });
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptyDomain);
    }
    Ok(DomainEc {
        l0: euler_characteristic(shape, mask, rule),
    })
}

impl GridField {
    pub fn domain_ec(&self, rule: ConnectivityRule) -> Result<DomainEc> {
        domain_ec(&self.shape, &self.domain(), rule)
    }
}
