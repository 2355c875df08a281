//! Euler characteristic curves of superlevel sets.
//!
//! For a field `f` the EC curve is `u ↦ χ({s : f(s) ≥ u})`. On a grid it is
//! a left-continuous step function: it equals the domain EC `l0` for `u` at or
//! below the first critical value, drops to 0 above the global maximum and
//! only changes at field values.
//!
//! [`ec_curve`] computes the curve exactly from local topology changes: the
//! points are swept from the highest value down, and adding a point changes
//! the EC of the current superlevel set by an amount that only depends on its
//! 3^D neighbourhood. Equal field values are ordered by linear index, and the
//! changes at equal values are merged into a single breakpoint afterwards.
//! [`ec_oracle`] recomputes a single curve value from scratch and serves as
//! the reference the sweep is tested against.

mod complex;

pub use complex::{euler_characteristic, local_ec, ConnectivityRule};

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{strides, FieldSample, GridField};

/// Exact Euler characteristic curve of one field.
///
/// Stored as the domain EC `l0`, the strictly increasing breakpoints `crit`
/// and the integer `jumps`: `jumps[m]` is the change of the curve as `u`
/// moves upward past `crit[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcCurve {
    l0: i64,
    crit: Vec<f64>,
    jumps: Vec<i64>,
}

impl EcCurve {
    /// Builds a curve from its breakpoints, checking the invariants: finite
    /// strictly increasing breakpoints, nonzero jumps summing to `-l0`.
    pub fn from_parts(l0: i64, crit: Vec<f64>, jumps: Vec<i64>) -> Result<Self> {
        if crit.len() != jumps.len() {
            return Err(Error::LengthMismatch {
                expected: crit.len(),
                found: jumps.len(),
            });
        }
        if crit.iter().any(|c| !c.is_finite()) || crit.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if jumps.contains(&0) {
            return Err(Error::InvalidArgument("zero jump in EC curve".into()));
        }
        let total: i64 = jumps.iter().sum();
        if total != -l0 {
            return Err(Error::InvalidArgument(format!(
                "jumps sum to {total}, curve starting at {l0} must end at 0"
            )));
        }
        Ok(EcCurve {
            l0,
            crit,
            jumps,
        })
    }

    pub fn l0(&self) -> i64 {
        self.l0
    }

    /// Number of breakpoints.
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn crit_values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.crit.iter().copied()
    }

    pub fn jumps(&self) -> &[i64] {
        &self.jumps
    }

    /// `(crit[m], jumps[m])` pairs in increasing order.
    pub fn breakpoints(&self) -> impl ExactSizeIterator<Item = (f64, i64)> + '_ {
        self.crit.iter().copied().zip(self.jumps.iter().copied())
    }

    /// `χ(u)`, the EC of `{f ≥ u}`.
    pub fn evaluate(&self, u: f64) -> i64 {
        let passed = self.crit.partition_point(|&c| c < u);
        self.l0 + self.jumps[..passed].iter().sum::<i64>()
    }

    /// Curve values on each interval: `levels()[m]` is the value on
    /// `(crit[m-1], crit[m]]`, with `levels()[0] = l0` and a final 0.
    pub fn levels(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut a = self.l0;
        out.push(a);
        for j in &self.jumps {
            a += j;
            out.push(a);
        }
        out
    }

    pub fn to_step(&self) -> StepCurve {
        StepCurve {
            l0: self.l0 as f64,
            crit: self.crit_values().collect(),
            jumps: self.jumps.iter().map(|&j| j as f64).collect(),
        }
    }

    /// Writes the `u,delta,chi_after` table, one row per breakpoint.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,delta,chi_after")?;
        let mut chi = self.l0;
        for (u, d) in self.breakpoints() {
            chi += d;
            writeln!(out, "{u:?},{d},{chi}")?;
        }
        Ok(())
    }

    /// JSON sidecar `{"l0":…,"m":…}` accompanying the CSV table.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({ "l0": self.l0, "m": self.len() })
    }
}

/// A step function with real-valued jumps, used for averages of EC curves.
///
/// Same conventions as [`EcCurve`]: value `l0` up to and including the first
/// breakpoint, `l0 + Σ_{k<m} jumps[k]` on `(crit[m-1], crit[m]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub l0: f64,
    pub crit: Vec<f64>,
    pub jumps: Vec<f64>,
}

impl StepCurve {
    pub fn evaluate(&self, u: f64) -> f64 {
        let passed = self.crit.partition_point(|&c| c < u);
        self.l0 + self.jumps[..passed].iter().sum::<f64>()
    }

    pub fn breakpoints(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.crit.iter().copied().zip(self.jumps.iter().copied())
    }

    /// Pointwise mean of `curves`, represented exactly on the union of their
    /// breakpoints.
    pub fn mean<'a>(curves: impl IntoIterator<Item = &'a StepCurve>) -> Result<StepCurve> {
        let curves: Vec<&StepCurve> = curves.into_iter().collect();
        if curves.is_empty() {
            return Err(Error::SampleSize { needed: 1, got: 0 });
        }
        let n = curves.len() as f64;
        let l0 = curves.iter().map(|c| c.l0).sum::<f64>() / n;
        let mut all: Vec<(f64, f64)> = curves
            .iter()
            .flat_map(|c| c.breakpoints())
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (crit, jumps) = merge_sorted(all.into_iter().map(|(u, j)| (u, j / n)), |j| j != 0.0);
        Ok(StepCurve { l0, crit, jumps })
    }
}

fn merge_sorted<J: Copy + std::ops::AddAssign>(
    sorted: impl Iterator<Item = (f64, J)>,
    keep: impl Fn(J) -> bool,
) -> (Vec<f64>, Vec<J>) {
    let mut crit: Vec<f64> = Vec::new();
    let mut jumps: Vec<J> = Vec::new();
    for (u, j) in sorted {
        match crit.last() {
            Some(&last) if last == u => *jumps.last_mut().expect("parallel vectors") += j,
            _ => {
                crit.push(u);
                jumps.push(j);
            }
        }
    }
    let (crit, jumps) = crit
        .into_iter()
        .zip(jumps)
        .filter(|&(_, j)| keep(j))
        .unzip();
    (crit, jumps)
}

/// Strict total order used by the sweep: by value, then by linear index.
#[inline]
fn precedes(values: &[f64], a: usize, b: usize) -> bool {
    match values[a].total_cmp(&values[b]) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a < b,
    }
}

/// Topology change at `index`: the EC of its 3^D neighbourhood restricted to
/// points at or above it, minus the same without the point itself.
///
/// "Above" is the sweep order (value, then linear index), so this is the
/// change of the superlevel-set EC when the sweep level passes `f(index)`
/// going downward. An isolated local maximum gives +1.
pub fn ec_delta_at(field: &GridField, index: &[usize], rule: ConnectivityRule) -> Result<i64> {
    rule.check(field.dim())?;
    if index.len() != field.dim() || index.iter().zip(field.shape()).any(|(i, n)| i >= n) {
        return Err(Error::InvalidArgument(format!(
            "index {index:?} outside grid {:?}",
            field.shape()
        )));
    }
    let center = field.flatten(index);
    if !field.in_domain(center) {
        return Err(Error::OutsideDomain(center));
    }
    let dim = field.dim();
    let size = 3usize.pow(dim as u32);
    let mut above = vec![false; size];
    for (slot, is_above) in above.iter_mut().enumerate() {
        let offset = crate::grid::unflatten(&vec![3; dim], slot);
        let mut neighbour = Vec::with_capacity(dim);
        for k in 0..dim {
            let coord = index[k] as isize + offset[k] as isize - 1;
            if coord < 0 || coord as usize >= field.shape()[k] {
                break;
            }
            neighbour.push(coord as usize);
        }
        if neighbour.len() < dim {
            // padding: below everything
            continue;
        }
        let linear = field.flatten(&neighbour);
        *is_above = field.in_domain(linear) && precedes(field.values(), center, linear);
    }
    let without = local_ec(&above, rule)?;
    above[size / 2] = true;
    let with = local_ec(&above, rule)?;
    Ok(with - without)
}

/// Exact EC curve of the superlevel sets of `field`.
pub fn ec_curve(field: &GridField, rule: ConnectivityRule) -> Result<EcCurve> {
    rule.check(field.dim())?;
    let shape = field.shape();
    let strides = strides(shape);
    let values = field.values();
    let mask = field.mask();
    let inside = |i: usize| mask.map_or(true, |m| m[i]);

    let mut events: Vec<(f64, usize, i64)> = Vec::new();
    let mut index = vec![0usize; shape.len()];
    let mut l0 = 0i64;
    let mut any = false;
    for center in 0..values.len() {
        if inside(center) {
            any = true;
            let delta = complex::center_contribution(shape, &strides, &index, rule, |i| {
                inside(i) && precedes(values, center, i)
            });
            l0 += delta;
            if delta != 0 {
                events.push((values[center], center, delta));
            }
        }
        complex::advance(&mut index, shape);
    }
    if !any {
        return Err(Error::EmptyDomain);
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // The curve moves opposite to the downward-sweep topology change.
    let (crit, jumps) = merge_sorted(events.into_iter().map(|(u, _, d)| (u, -d)), |j| j != 0);
    Ok(EcCurve {
        l0,
        crit,
        jumps,
    })
}

/// `χ({f ≥ u})` computed directly from the thresholded grid.
pub fn ec_oracle(field: &GridField, u: f64, rule: ConnectivityRule) -> Result<i64> {
    rule.check(field.dim())?;
    let active: Vec<bool> = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| field.in_domain(i) && v >= u)
        .collect();
    Ok(euler_characteristic(field.shape(), &active, rule))
}

/// EC curves of every field of a sample, in sample order.
pub fn ec_curves(sample: &FieldSample, rule: ConnectivityRule) -> Result<Vec<EcCurve>> {
    sample
        .fields()
        .par_iter()
        .map(|f| ec_curve(f, rule))
        .collect()
}

/// Pointwise average of the EC curves of a sample.
pub fn ec_curve_average(sample: &FieldSample, rule: ConnectivityRule) -> Result<StepCurve> {
    let steps: Vec<StepCurve> = ec_curves(sample, rule)?.iter().map(EcCurve::to_step).collect();
    StepCurve::mean(&steps)
}
