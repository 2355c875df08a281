//! Euler characteristics of binary grids.
//!
//! Active grid points are the vertices of a cell complex. Two families of
//! complexes are supported:
//!
//! * minimal connectivity ([`ConnectivityRule::Line`], `Vertex4`, `Face6`):
//!   the cubical complex whose edges join axis neighbours, whose squares and
//!   cubes are present when all their corners are active;
//! * full connectivity (`Vertex8`, `Full26`): the clique complex of the graph
//!   joining every pair of points at Chebyshev distance one. All its cliques
//!   live inside one unit block of the lattice.
//!
//! In both cases every cell lies in a unit block `v + {0,1}^D`, so the Euler
//! characteristic is a sum over block anchors `v` of a contribution that only
//! depends on which corners of the block are active. Those contributions are
//! tabulated once per dimension and rule.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjacency used to build the complex on active grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityRule {
    /// 1D: consecutive points are joined.
    Line,
    /// 2D: horizontal and vertical neighbours.
    Vertex4,
    /// 2D: also diagonal neighbours.
    Vertex8,
    /// 3D: the six face neighbours.
    Face6,
    /// 3D: all 26 neighbours.
    Full26,
}

impl ConnectivityRule {
    pub fn dim(self) -> usize {
        match self {
            ConnectivityRule::Line => 1,
            ConnectivityRule::Vertex4 | ConnectivityRule::Vertex8 => 2,
            ConnectivityRule::Face6 | ConnectivityRule::Full26 => 3,
        }
    }

    /// The minimal rule for `dim`: 1D line, 2D 4-connectivity, 3D 6-connectivity.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(ConnectivityRule::Line),
            2 => Ok(ConnectivityRule::Vertex4),
            3 => Ok(ConnectivityRule::Face6),
            _ => Err(Error::InvalidArgument(format!("no connectivity for {dim}D"))),
        }
    }

    /// Parses a neighbour count (`4`, `8`, `6`, `26`) for a field of dimension
    /// `dim`. One-dimensional fields have a single rule and accept any code.
    pub fn from_code(code: u32, dim: usize) -> Result<Self> {
        let rule = match (dim, code) {
            (1, _) => ConnectivityRule::Line,
            (2, 4) => ConnectivityRule::Vertex4,
            (2, 8) => ConnectivityRule::Vertex8,
            (3, 6) => ConnectivityRule::Face6,
            (3, 26) => ConnectivityRule::Full26,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "connectivity {code} is not available for {dim}D fields"
                )))
            }
        };
        Ok(rule)
    }

    pub fn code(self) -> u32 {
        match self {
            ConnectivityRule::Line => 2,
            ConnectivityRule::Vertex4 => 4,
            ConnectivityRule::Vertex8 => 8,
            ConnectivityRule::Face6 => 6,
            ConnectivityRule::Full26 => 26,
        }
    }

    /// Whether diagonal neighbours are connected (clique complex).
    pub fn is_full(self) -> bool {
        matches!(self, ConnectivityRule::Vertex8 | ConnectivityRule::Full26)
    }

    pub fn check(self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::Connectivity { rule: self, dim })
        }
    }
}

/// Contribution of one block anchor, indexed by the bit pattern of active
/// block corners. Corner `o` has offset `(o >> k) & 1` along axis `k`.
fn block_table(dim: usize, full: bool) -> &'static [i8] {
    static TABLES: [OnceLock<Vec<i8>>; 6] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let slot = (dim - 1) * 2 + full as usize;
    TABLES[slot].get_or_init(|| build_block_table(dim, full))
}

fn build_block_table(dim: usize, full: bool) -> Vec<i8> {
    let corners = 1usize << dim;
    let patterns = 1usize << corners;
    (0..patterns)
        .map(|pattern| {
            let mut chi = 0i32;
            if full {
                // Nonempty corner subsets whose bounding box starts at the
                // anchor along every axis; each clique is counted once.
                for subset in 1..patterns {
                    if subset & !pattern != 0 {
                        continue;
                    }
                    let anchored = (0..dim).all(|k| {
                        (0..corners).any(|o| subset >> o & 1 == 1 && (o >> k) & 1 == 0)
                    });
                    if anchored {
                        let size = subset.count_ones() as i32;
                        chi += if size % 2 == 1 { 1 } else { -1 };
                    }
                }
            } else {
                // Cube spanned from the anchor along the axes in `axes`.
                for axes in 0..corners {
                    let complete = (0..corners)
                        .filter(|&o| o & !axes == 0)
                        .all(|o| pattern >> o & 1 == 1);
                    if complete {
                        chi += if axes.count_ones() % 2 == 0 { 1 } else { -1 };
                    }
                }
            }
            chi as i8
        })
        .collect()
}

/// Pattern of active corners of the block anchored at `anchor`, looking up
/// activity through `is_active(linear_index)`. Corners outside the grid are
/// inactive.
#[inline]
pub(crate) fn block_pattern(
    shape: &[usize],
    strides: &[usize],
    anchor: &[usize],
    mut is_active: impl FnMut(usize) -> bool,
) -> usize {
    let dim = shape.len();
    let base: usize = anchor.iter().zip(strides).map(|(a, s)| a * s).sum();
    let mut pattern = 0;
    'corner: for o in 0..(1usize << dim) {
        let mut linear = base;
        for k in 0..dim {
            if (o >> k) & 1 == 1 {
                if anchor[k] + 1 >= shape[k] {
                    continue 'corner;
                }
                linear += strides[k];
            }
        }
        if is_active(linear) {
            pattern |= 1 << o;
        }
    }
    pattern
}

/// Euler characteristic of the complex on the active points of a binary grid.
pub fn euler_characteristic(shape: &[usize], active: &[bool], rule: ConnectivityRule) -> i64 {
    debug_assert_eq!(rule.dim(), shape.len());
    debug_assert_eq!(active.len(), shape.iter().product::<usize>());
    let table = block_table(shape.len(), rule.is_full());
    let strides = crate::grid::strides(shape);
    let mut anchor = vec![0usize; shape.len()];
    let mut chi = 0i64;
    for _ in 0..active.len() {
        let pattern = block_pattern(shape, &strides, &anchor, |i| active[i]);
        chi += table[pattern] as i64;
        advance(&mut anchor, shape);
    }
    chi
}

/// Increments a row-major multi-index in place.
#[inline]
pub(crate) fn advance(index: &mut [usize], shape: &[usize]) {
    for k in (0..shape.len()).rev() {
        index[k] += 1;
        if index[k] < shape[k] {
            return;
        }
        index[k] = 0;
    }
}

/// Euler characteristic of a `3 × … × 3` binary neighbourhood (row-major,
/// `3^D` entries).
pub fn local_ec(neighborhood: &[bool], rule: ConnectivityRule) -> Result<i64> {
    let dim = rule.dim();
    let expected = 3usize.pow(dim as u32);
    if neighborhood.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: neighborhood.len(),
        });
    }
    Ok(euler_characteristic(&vec![3; dim], neighborhood, rule))
}

/// Change in Euler characteristic caused by activating the point at
/// `center`, given the activity of its neighbours.
///
/// Only cells containing `center` change, and those lie in the `2^D` blocks
/// that have `center` as a corner. The result equals the difference of
/// [`local_ec`] on the 3^D neighbourhood with and without its centre.
#[inline]
pub(crate) fn center_contribution(
    shape: &[usize],
    strides: &[usize],
    center: &[usize],
    rule: ConnectivityRule,
    mut is_active: impl FnMut(usize) -> bool,
) -> i64 {
    let dim = shape.len();
    let table = block_table(dim, rule.is_full());
    let center_linear: usize = center.iter().zip(strides).map(|(a, s)| a * s).sum();
    let mut anchor = [0usize; 3];
    let mut delta = 0i64;
    'block: for o in 0..(1usize << dim) {
        // The block whose corner `o` is the centre.
        for k in 0..dim {
            if (o >> k) & 1 == 1 {
                if center[k] == 0 {
                    continue 'block;
                }
                anchor[k] = center[k] - 1;
            } else {
                anchor[k] = center[k];
            }
        }
        let without = block_pattern(shape, strides, &anchor[..dim], |i| {
            i != center_linear && is_active(i)
        });
        let with = without | (1 << o);
        delta += (table[with] - table[without]) as i64;
    }
    delta
}
