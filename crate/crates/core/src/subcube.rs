//! Subcubes of `{-1, +1}^d` and best-fit subcube search.
//!
//! A subcube is a center point together with a set of restricted coordinates;
//! it contains every point that agrees with the center on all restricted
//! coordinates. The remaining (free) coordinates are never materialized as a
//! list, only as the complement of the restriction mask.

use std::fmt;

use crate::bitcube::{iter_ones, masked_xor_popcount, BinaryMatrix, BitVecRef, BitVector};
use crate::error::{check_dim, Error, Result};

/// A set of points: either every column of a matrix or a listed subset.
#[derive(Clone, Copy, Debug)]
pub struct Points<'a> {
    matrix: &'a BinaryMatrix,
    members: Option<&'a [usize]>,
}

impl<'a> Points<'a> {
    pub fn all(matrix: &'a BinaryMatrix) -> Self {
        Points {
            matrix,
            members: None,
        }
    }

    /// The columns listed in `members`. Indices are not bounds-checked until used.
    pub fn subset(matrix: &'a BinaryMatrix, members: &'a [usize]) -> Self {
        Points {
            matrix,
            members: Some(members),
        }
    }

    pub fn matrix(&self) -> &'a BinaryMatrix {
        self.matrix
    }

    pub fn d(&self) -> usize {
        self.matrix.d()
    }

    pub fn len(&self) -> usize {
        self.members.map_or(self.matrix.n(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column index in the underlying matrix of the `i`-th point.
    #[inline]
    pub fn index(&self, i: usize) -> usize {
        self.members.map_or(i, |m| m[i])
    }

    #[inline]
    pub fn get(&self, i: usize) -> BitVecRef<'a> {
        self.matrix.column(self.index(i))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = BitVecRef<'a>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// A subcube `C(c, I)`: all points `b` with `b_s = c_s` for every `s` in `I`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Subcube {
    center: BitVector,
    restricted: Vec<usize>,
    mask: BitVector,
}

impl Subcube {
    /// Builds a subcube; `restricted` is sorted and must hold unique, in-range indices.
    pub fn new(center: BitVector, mut restricted: Vec<usize>) -> Result<Self> {
        restricted.sort_unstable();
        if restricted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("restricted coordinates must be unique"));
        }
        let mask = BitVector::from_indices(center.len(), &restricted)?;
        Ok(Subcube {
            center,
            restricted,
            mask,
        })
    }

    /// The whole cube: nothing restricted.
    pub fn whole(center: BitVector) -> Self {
        let mask = BitVector::filled(center.len(), false);
        Subcube {
            center,
            restricted: Vec::new(),
            mask,
        }
    }

    pub fn d(&self) -> usize {
        self.center.len()
    }

    /// Dimension of the cube, `d - |restricted|`.
    pub fn dim(&self) -> usize {
        self.d() - self.restricted.len()
    }

    pub fn center(&self) -> &BitVector {
        &self.center
    }

    pub fn restricted(&self) -> &[usize] {
        &self.restricted
    }

    /// Restricted coordinates as a mask.
    pub fn mask(&self) -> &BitVector {
        &self.mask
    }

    pub fn is_restricted(&self, s: usize) -> bool {
        self.mask.get(s)
    }

    #[inline]
    pub(crate) fn distance_unchecked(&self, x: &[u64]) -> usize {
        masked_xor_popcount(x, self.center.as_words(), self.mask.as_words())
    }

    pub fn contains(&self, x: BitVecRef<'_>) -> Result<bool> {
        Ok(distance_to_subcube(x, self)? == 0)
    }
}

impl fmt::Debug for Subcube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pattern: String = (0..self.d())
            .map(|s| match (self.mask.get(s), self.center.get(s)) {
                (false, _) => '.',
                (true, true) => '+',
                (true, false) => '-',
            })
            .collect();
        f.debug_struct("Subcube")
            .field("pattern", &pattern)
            .finish()
    }
}

/// Number of restricted coordinates on which `x` disagrees with the center.
pub fn distance_to_subcube(x: BitVecRef<'_>, cube: &Subcube) -> Result<usize> {
    check_dim(cube.d(), x.len())?;
    Ok(cube.distance_unchecked(x.as_words()))
}

/// Sum of [`distance_to_subcube`] over a point set.
pub fn fit_error(points: Points<'_>, cube: &Subcube) -> Result<usize> {
    check_dim(cube.d(), points.d())?;
    Ok(points
        .iter()
        .map(|x| cube.distance_unchecked(x.as_words()))
        .sum())
}

/// Per-coordinate majority values and disagreement rates over a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateStats {
    /// Majority value per coordinate; an even split resolves to `+1`.
    pub mode: BitVector,
    /// Number of points disagreeing with the mode, for every coordinate.
    pub mismatches: Vec<usize>,
    /// Disagreement fraction in `[0, 0.5]`; `None` marks an excluded coordinate.
    pub discrepancy: Vec<Option<f64>>,
    pub support: usize,
    pub active: BitVector,
}

impl CoordinateStats {
    /// Sum of discrepancies over the active coordinates.
    pub fn energy(&self) -> f64 {
        self.discrepancy.iter().flatten().sum()
    }

    fn mismatch_energy(&self) -> usize {
        self.active.ones().map(|s| self.mismatches[s]).sum()
    }

    /// Active coordinates in restriction order: fewest mismatches first, lower index on ties.
    pub fn restriction_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = self.active.ones().collect();
        order.sort_by_key(|&s| (self.mismatches[s], s));
        order
    }

    /// Restricts the first `r` coordinates of [`Self::restriction_order`].
    pub fn restrict(&self, r: usize) -> Result<Subcube> {
        let order = self.restriction_order();
        if r > order.len() {
            return Err(Error::param(format!(
                "cannot restrict {r} coordinates with only {} active",
                order.len()
            )));
        }
        Subcube::new(self.mode.clone(), order[..r].to_vec())
    }

    /// How many active coordinates stay restricted when the free set must
    /// carry at least `keep_fraction` of the energy.
    ///
    /// Coordinates are freed in decreasing-discrepancy order (the reverse of
    /// the restriction order) until the freed energy reaches the target.
    pub fn adaptive_count(&self, keep_fraction: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&keep_fraction) {
            return Err(Error::param(format!(
                "keep fraction {keep_fraction} outside [0, 1]"
            )));
        }
        let order = self.restriction_order();
        let target = keep_fraction * self.mismatch_energy() as f64;
        let mut freed = 0;
        let mut kept = 0usize;
        while (kept as f64) < target && freed < order.len() {
            kept += self.mismatches[order[order.len() - 1 - freed]];
            freed += 1;
        }
        Ok(order.len() - freed)
    }
}

/// Coordinate-wise modes and discrepancies of `points` over the `active` coordinates.
pub fn coordinate_stats(points: Points<'_>, active: &BitVector) -> Result<CoordinateStats> {
    let d = points.d();
    check_dim(d, active.len())?;
    if points.is_empty() {
        return Err(Error::EmptyInput(
            "coordinate statistics of an empty point set",
        ));
    }
    let support = points.len();
    let mut ones = vec![0usize; d];
    for x in points.iter() {
        for s in iter_ones(x.as_words()) {
            ones[s] += 1;
        }
    }
    let mode = BitVector::from_fn(d, |s| 2 * ones[s] >= support);
    let mismatches: Vec<usize> = ones.iter().map(|&c| c.min(support - c)).collect();
    let discrepancy = (0..d)
        .map(|s| active.get(s).then(|| mismatches[s] as f64 / support as f64))
        .collect();
    Ok(CoordinateStats {
        mode,
        mismatches,
        discrepancy,
        support,
        active: active.clone(),
    })
}

/// The subcube restricting exactly `r` active coordinates with least total mismatch.
///
/// The restricted coordinates are the `r` active ones with the smallest
/// discrepancy (lower index first on ties); the center is the coordinate-wise
/// mode. Center entries on free coordinates also hold the mode.
pub fn best_fit_subcube(points: Points<'_>, active: &BitVector, r: usize) -> Result<Subcube> {
    let stats = coordinate_stats(points, active)?;
    stats.restrict(r)
}

/// Restricts the active coordinates that remain once the free ones carry at
/// least `keep_fraction` of the discrepancy energy.
pub fn adaptive_restriction(
    points: Points<'_>,
    active: &BitVector,
    keep_fraction: f64,
) -> Result<Subcube> {
    let stats = coordinate_stats(points, active)?;
    let r = stats.adaptive_count(keep_fraction)?;
    stats.restrict(r)
}
