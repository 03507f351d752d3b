//! Two-means clustering of binary points on a subset of coordinates.
//!
//! Centroids are real-valued means, but every quantity is kept as an exact
//! integer: a centroid is stored as the coordinate sum `S` of its members
//! together with the member count `c`, and the squared Euclidean distance
//! from a `±1` point `x` to `S / c` is compared across clusters by
//! cross-multiplying `|S|^2 - 2 c (x . S)` with the other cluster's `c^2`.
//! Assignments therefore never depend on floating-point rounding or on the
//! order in which points are visited.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bitcube::{masked_xor_popcount, BitVector};
use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::subcube::Points;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each point, in the order of the input point set. The
    /// cluster holding point 0 is always labelled 0.
    pub labels: Vec<u8>,
    /// Sum of squared Euclidean distances to the cluster means.
    pub inertia: f64,
    /// Lloyd iterations performed.
    pub iterations: usize,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

/// k-means++ seeding with Hamming weights.
///
/// The first center is uniform over the points; each later center is drawn
/// with probability proportional to the squared Euclidean distance to the
/// nearest chosen center, which on `±1` data is `4 x` the Hamming distance
/// over the active coordinates. Returns positions within `points`.
pub fn farthest_insertion_init(
    points: Points<'_>,
    active: &BitVector,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    farthest_insertion_init_with(points, active, k, &mut seed::rng(seed))
}

pub(crate) fn farthest_insertion_init_with(
    points: Points<'_>,
    active: &BitVector,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    check_dim(points.d(), active.len())?;
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput(
            "cannot seed clusters from an empty point set",
        ));
    }
    let mask = active.as_words();
    let first = rng.random_range(0..n);
    let mut centers = vec![first];
    let mut nearest: Vec<u64> = (0..n)
        .map(|i| {
            masked_xor_popcount(points.get(i).as_words(), points.get(first).as_words(), mask) as u64
        })
        .collect();
    while centers.len() < k {
        let total: u64 = nearest.iter().sum();
        if total == 0 {
            return Err(Error::Degenerate { needed: k });
        }
        let mut target = rng.random_range(0..total);
        let next = nearest
            .iter()
            .position(|&w| {
                if target < w {
                    true
                } else {
                    target -= w;
                    false
                }
            })
            .expect("target lies below the total weight");
        centers.push(next);
        let c = points.get(next).as_words();
        for (i, w) in nearest.iter_mut().enumerate() {
            let dist = masked_xor_popcount(points.get(i).as_words(), c, mask) as u64;
            *w = (*w).min(dist);
        }
    }
    Ok(centers)
}

/// Points gathered onto the active coordinates as dense `±1` rows.
struct Dense {
    dim: usize,
    rows: Vec<i8>,
}

impl Dense {
    fn gather(points: Points<'_>, active: &BitVector) -> Self {
        let coords: Vec<usize> = active.ones().collect();
        let dim = coords.len();
        let mut rows = Vec::with_capacity(points.len() * dim);
        for x in points.iter() {
            let words = x.as_words();
            rows.extend(coords.iter().map(|&s| {
                if words[s / 64] >> (s % 64) & 1 == 1 {
                    1i8
                } else {
                    -1
                }
            }));
        }
        Dense { dim, rows }
    }

    #[inline]
    fn row(&self, i: usize) -> &[i8] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }
}

#[inline]
fn dot(x: &[i8], sum: &[i32]) -> i64 {
    x.iter()
        .zip(sum)
        .map(|(&a, &b)| i64::from(a) * i64::from(b))
        .sum()
}

fn norm2(sum: &[i32]) -> i128 {
    sum.iter().map(|&v| i128::from(v) * i128::from(v)).sum()
}

/// Cluster sums and counts recomputed from labels.
fn accumulate(data: &Dense, labels: &[u8]) -> ([Vec<i32>; 2], [i64; 2]) {
    let mut sums = [vec![0i32; data.dim], vec![0i32; data.dim]];
    let mut counts = [0i64; 2];
    for (i, &l) in labels.iter().enumerate() {
        let l = usize::from(l);
        counts[l] += 1;
        for (acc, &v) in sums[l].iter_mut().zip(data.row(i)) {
            *acc += i32::from(v);
        }
    }
    (sums, counts)
}

/// `sum_k |S_k|^2 / c_k` as an exact fraction `(numerator, denominator)`.
fn explained(norms: [i128; 2], counts: [i64; 2]) -> (i128, i128) {
    let (c0, c1) = (i128::from(counts[0]), i128::from(counts[1]));
    (norms[0] * c1 + norms[1] * c0, c0 * c1)
}

/// Lloyd's algorithm with `K = 2` on the active coordinates.
///
/// Seeds with [`farthest_insertion_init`], then alternates nearest-centroid
/// assignment (ties go to cluster 0) and mean updates until the labels stop
/// changing or `max_iter` iterations have run. An emptied cluster takes the
/// point farthest from the other centroid. Inertia is checked to be
/// non-increasing at every iteration.
pub fn two_means(
    points: Points<'_>,
    active: &BitVector,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    two_means_with(points, active, &mut seed::rng(seed), max_iter)
}

pub(crate) fn two_means_with(
    points: Points<'_>,
    active: &BitVector,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    if max_iter == 0 {
        return Err(Error::param("max_iter must be positive"));
    }
    let init = farthest_insertion_init_with(points, active, 2, rng)?;
    let data = Dense::gather(points, active);
    let n = data.len();
    let dim = data.dim as i64;

    let mut sums: [Vec<i32>; 2] = [
        data.row(init[0]).iter().map(|&v| i32::from(v)).collect(),
        data.row(init[1]).iter().map(|&v| i32::from(v)).collect(),
    ];
    let mut counts = [1i64, 1];
    let mut labels = vec![u8::MAX; n];
    let mut previous: Option<(i128, i128)> = None;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let norms = [norm2(&sums[0]), norm2(&sums[1])];
        let (c0, c1) = (i128::from(counts[0]), i128::from(counts[1]));
        // score_k(x) = |S_k|^2 - 2 c_k (x . S_k), compared after scaling by the other c^2
        let mut changed = false;
        let mut dots0 = vec![0i64; n];
        for i in 0..n {
            let row = data.row(i);
            let d0 = dot(row, &sums[0]);
            let d1 = dot(row, &sums[1]);
            dots0[i] = d0;
            let s0 = (norms[0] - 2 * c0 * i128::from(d0)) * c1 * c1;
            let s1 = (norms[1] - 2 * c1 * i128::from(d1)) * c0 * c0;
            let label = u8::from(s1 < s0);
            if labels[i] != label {
                labels[i] = label;
                changed = true;
            }
        }

        let size1 = labels.iter().filter(|&&l| l == 1).count();
        if size1 == 0 || size1 == n {
            // every point sits in `full`; move the one farthest from its centroid
            let full = usize::from(size1 == n);
            let dots: Vec<i64> = if full == 0 {
                dots0
            } else {
                (0..n).map(|i| dot(data.row(i), &sums[1])).collect()
            };
            let far = (0..n)
                .min_by_key(|&i| (dots[i], i))
                .expect("at least two points");
            labels[far] = 1 - full as u8;
            changed = true;
        }

        let (new_sums, new_counts) = accumulate(&data, &labels);
        sums = new_sums;
        counts = new_counts;
        let current = explained([norm2(&sums[0]), norm2(&sums[1])], counts);
        if let Some((pn, pd)) = previous {
            assert!(
                current.0 * pd >= pn * current.1,
                "two-means inertia increased at iteration {iterations}"
            );
        }
        previous = Some(current);
        if !changed {
            break;
        }
    }

    let (num, den) = previous.expect("at least one iteration");
    let inertia = (n as i64 * dim) as f64 - num as f64 / den as f64;
    if labels[0] == 1 {
        for l in labels.iter_mut() {
            *l = 1 - *l;
        }
    }
    Ok(ClusterAssignment {
        labels,
        inertia,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcube::{hamming_distance, BinaryMatrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn all(d: usize) -> BitVector {
        BitVector::filled(d, true)
    }

    #[test]
    fn two_distinct_points_are_both_chosen() {
        let x = BinaryMatrix::from_signs(3, 2, &[1, 1, 1, -1, 1, -1]).unwrap();
        for seed in 0..50 {
            let mut c = farthest_insertion_init(Points::all(&x), &all(3), 2, seed).unwrap();
            c.sort();
            assert_eq!(c, vec![0, 1]);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let x = BinaryMatrix::filled(5, 4, true).unwrap();
        assert!(matches!(
            farthest_insertion_init(Points::all(&x), &all(5), 2, 0),
            Err(Error::Degenerate { needed: 2 })
        ));
        assert!(matches!(
            two_means(Points::all(&x), &all(5), 0, 10),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn distinct_only_on_inactive_coordinates_is_degenerate() {
        let x = BinaryMatrix::from_signs(2, 2, &[1, 1, -1, 1]).unwrap();
        let active = BitVector::from_indices(2, &[1]).unwrap();
        assert!(two_means(Points::all(&x), &active, 0, 10).is_err());
    }

    #[test]
    fn zero_iterations_rejected() {
        let x = BinaryMatrix::from_signs(1, 2, &[1, -1]).unwrap();
        assert!(matches!(
            two_means(Points::all(&x), &all(1), 0, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn duplicated_point_forces_the_other() {
        // {A, A, B}: once A is drawn first, B carries all the D^2 mass
        let x = BinaryMatrix::from_signs(2, 3, &[1, 1, 1, 1, -1, -1]).unwrap();
        let (mut a_first, mut b_second) = (0, 0);
        for seed in 0..10_000 {
            let c = farthest_insertion_init(Points::all(&x), &all(2), 2, seed).unwrap();
            if c[0] != 2 {
                a_first += 1;
                b_second += usize::from(c[1] == 2);
            }
        }
        assert!(a_first > 6000, "first draw should be uniform");
        assert_eq!(a_first, b_second);
    }

    #[test]
    fn two_point_mixture_separates() {
        let u = [1i8, -1, 1, 1, -1, -1, 1, 1];
        let v = [-1i8, -1, 1, -1, 1, 1, -1, 1];
        let mut signs = Vec::new();
        for j in 0..12 {
            signs.extend_from_slice(if j % 2 == 0 { &u } else { &v });
        }
        let x = BinaryMatrix::from_signs(8, 12, &signs).unwrap();
        for seed in 0..20 {
            let a = two_means(Points::all(&x), &all(8), seed, 100).unwrap();
            let expect: Vec<u8> = (0..12).map(|j| (j % 2) as u8).collect();
            assert_eq!(a.labels, expect);
            assert_eq!(a.inertia, 0.0);
        }
    }

    fn inertia_of(signs: &[i8], d: usize, labels: &[u8]) -> f64 {
        let mut total = 0.0;
        for k in 0..2u8 {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            if members.is_empty() {
                continue;
            }
            for s in 0..d {
                let mean = members
                    .iter()
                    .map(|&i| f64::from(signs[i * d + s]))
                    .sum::<f64>()
                    / members.len() as f64;
                total += members
                    .iter()
                    .map(|&i| (f64::from(signs[i * d + s]) - mean).powi(2))
                    .sum::<f64>();
            }
        }
        total
    }

    #[test]
    fn planted_pair_is_the_global_minimizer_and_is_recovered() {
        // 10 copies of +1^6 and 10 of -1^6, each with one flipped coordinate
        let (d, n) = (6, 20);
        let mut signs = Vec::new();
        for j in 0..n {
            let base: i8 = if j < 10 { 1 } else { -1 };
            for s in 0..d {
                signs.push(if s == j % d { -base } else { base });
            }
        }
        let planted: Vec<u8> = (0..n).map(|j| u8::from(j >= 10)).collect();

        // oracle: every labelling with point 0 in cluster 0, both clusters nonempty
        let mut best = (f64::INFINITY, 0u32);
        for code in 1u32..(1 << (n - 1)) {
            let labels: Vec<u8> = (0..n)
                .map(|j| {
                    if j == 0 {
                        0
                    } else {
                        (code >> (j - 1) & 1) as u8
                    }
                })
                .collect();
            let e = inertia_of(&signs, d, &labels);
            if e < best.0 - 1e-9 {
                best = (e, code);
            }
        }
        let oracle: Vec<u8> = (0..n)
            .map(|j| {
                if j == 0 {
                    0
                } else {
                    (best.1 >> (j - 1) & 1) as u8
                }
            })
            .collect();
        assert_eq!(oracle, planted);

        // a single seeding can settle in a local optimum (both seeds drawn
        // from one cluster); most seeds reach the planted split
        let x = BinaryMatrix::from_signs(d, n, &signs).unwrap();
        let mut recovered = 0;
        for seed in 0..50 {
            let a = two_means(Points::all(&x), &all(d), seed, 100).unwrap();
            assert!((a.inertia - inertia_of(&signs, d, &a.labels)).abs() < 1e-9);
            if a.labels == planted {
                recovered += 1;
                assert!((a.inertia - best.0).abs() < 1e-9);
            } else {
                assert!(a.inertia > best.0);
            }
        }
        assert!(recovered >= 30, "recovered {recovered}/50");
    }

    #[test]
    fn subset_and_mask_are_respected() {
        // coordinate 0 separates the members; coordinate 1 is noise and inactive
        let x =
            BinaryMatrix::from_signs(2, 6, &[1, 1, 1, -1, -1, 1, -1, -1, 1, 1, -1, -1]).unwrap();
        let members = [1usize, 2, 3, 4];
        let active = BitVector::from_indices(2, &[0]).unwrap();
        let a = two_means(Points::subset(&x, &members), &active, 3, 100).unwrap();
        assert_eq!(a.labels, vec![0, 1, 1, 0]);
        assert_eq!(a.cluster_sizes(), [2, 2]);
    }

    proptest! {
        #[test]
        fn squared_euclidean_is_four_hamming(d in 1usize..100, seed in any::<u64>()) {
            let mut rng = seed::rng(seed);
            let a = BitVector::from_fn(d, |_| rng.random());
            let b = BitVector::from_fn(d, |_| rng.random());
            let sq: i32 = a.to_signs().iter().zip(b.to_signs())
                .map(|(&x, y)| i32::from(x - y).pow(2)).sum();
            prop_assert_eq!(sq as usize, 4 * hamming_distance(a.view(), b.view()).unwrap());
        }

        #[test]
        fn both_clusters_nonempty_and_inertia_exact(
            d in 1usize..20, n in 2usize..60, seed in any::<u64>()
        ) {
            let mut rng = seed::rng(seed);
            let x = BinaryMatrix::from_fn(d, n, |_, _| rng.random()).unwrap();
            match two_means(Points::all(&x), &all(d), seed, 50) {
                Ok(a) => {
                    let [z, o] = a.cluster_sizes();
                    prop_assert!(z > 0 && o > 0);
                    prop_assert_eq!(a.labels[0], 0);
                    let direct = inertia_of(&x.to_signs(), d, &a.labels);
                    prop_assert!((direct - a.inertia).abs() < 1e-6 * (1.0 + direct));
                }
                Err(Error::Degenerate { .. }) => {
                    prop_assert!(x.columns().all(|c| c == x.column(0)));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
