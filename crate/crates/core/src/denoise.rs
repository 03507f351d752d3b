//! Ensemble denoising over randomly initialized trees.
//!
//! Each spin grows a tree from the same noisy data under a different
//! clustering seed and reconstructs every column. Reconstructions are
//! accumulated as integer `+1` vote counts, so the average is exact and does
//! not depend on the order in which spins finish.

use rayon::prelude::*;
use serde::Serialize;

use crate::bitcube::{bit_error_rate, iter_ones, BinaryMatrix, RealMatrix};
use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::tree::{build_tree, reconstruct_matrix, refine, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseResult {
    /// Entrywise mean of the spin reconstructions, in `[-1, 1]`.
    pub average: RealMatrix,
    /// `average` thresholded at zero, with ties going to `+1`.
    pub binary: BinaryMatrix,
    /// Number of spins that reconstructed each entry as `+1`, column-major.
    pub votes: Vec<u32>,
    pub spins: usize,
    /// Clustering seed of each spin.
    pub seeds: Vec<u64>,
}

/// Seed of spin `k` is `seed::split(master_seed, k)`.
pub fn spin_seeds(master_seed: u64, spins: usize) -> Vec<u64> {
    (0..spins as u64)
        .map(|k| seed::split(master_seed, k))
        .collect()
}

/// Denoises `x_noisy` by averaging `spins` tree reconstructions.
///
/// Every spin trains on the same data with `config`, its seed replaced by the
/// spin seed, and runs `config.refine_iters` refinement rounds.
pub fn cycle_spin_denoise(
    x_noisy: &BinaryMatrix,
    config: &TrainConfig,
    spins: usize,
    master_seed: u64,
) -> Result<DenoiseResult> {
    if spins == 0 {
        return Err(Error::param("at least one spin is required"));
    }
    cycle_spin_denoise_with_seeds(x_noisy, config, &spin_seeds(master_seed, spins))
}

/// [`cycle_spin_denoise`] with explicit per-spin seeds.
pub fn cycle_spin_denoise_with_seeds(
    x_noisy: &BinaryMatrix,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<DenoiseResult> {
    if seeds.is_empty() {
        return Err(Error::param("at least one spin is required"));
    }
    config.validate()?;
    let (d, n) = (x_noisy.d(), x_noisy.n());
    let mut votes = vec![0u32; d * n];
    // at most one pending reconstruction per worker thread
    let batch = rayon::current_num_threads().max(1);
    for chunk in seeds.chunks(batch) {
        let recons = chunk
            .par_iter()
            .map(|&s| spin(x_noisy, config, s))
            .collect::<Result<Vec<_>>>()?;
        for r in &recons {
            for j in 0..n {
                let col = &mut votes[j * d..(j + 1) * d];
                for s in iter_ones(r.column(j).as_words()) {
                    col[s] += 1;
                }
            }
        }
    }
    let spins = seeds.len();
    let average = average_from_votes(d, n, &votes, spins)?;
    let binary = BinaryMatrix::from_fn(d, n, |s, j| 2 * votes[j * d + s] as usize >= spins)?;
    Ok(DenoiseResult {
        average,
        binary,
        votes,
        spins,
        seeds: seeds.to_vec(),
    })
}

fn spin(x: &BinaryMatrix, config: &TrainConfig, spin_seed: u64) -> Result<BinaryMatrix> {
    let config = config.clone().with_seed(spin_seed);
    let mut tree = build_tree(x, &config)?;
    if config.refine_iters > 0 {
        tree = refine(&tree, x, config.refine_iters)?;
    }
    reconstruct_matrix(&tree, x)
}

/// `(2 * votes - spins) / spins` entrywise.
pub fn average_from_votes(d: usize, n: usize, votes: &[u32], spins: usize) -> Result<RealMatrix> {
    check_dim(d * n, votes.len())?;
    let spins_f = spins as f64;
    let values = votes
        .iter()
        .map(|&v| ((2.0 * f64::from(v) - spins_f) / spins_f) as f32)
        .collect();
    RealMatrix::new(d, n, values)
}

/// Entrywise sign, with `0` mapped to `+1`.
pub fn threshold(avg: &RealMatrix) -> BinaryMatrix {
    BinaryMatrix::from_fn(avg.d(), avg.n(), |s, j| avg.get(s, j) >= 0.0)
        .expect("a real matrix has d >= 1")
}

/// Bit error rates of a candidate (and optionally the noisy input) against the truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub ber_candidate: f64,
    pub ber_noisy: Option<f64>,
    /// `(ber_noisy - ber_candidate) / ber_noisy`; 0 when the noisy input is already exact.
    pub improvement: Option<f64>,
}

pub fn evaluate(
    truth: &BinaryMatrix,
    candidate: &BinaryMatrix,
    noisy: Option<&BinaryMatrix>,
) -> Result<Metrics> {
    let ber_candidate = bit_error_rate(candidate, truth)?;
    let ber_noisy = noisy.map(|x| bit_error_rate(x, truth)).transpose()?;
    let improvement = ber_noisy.map(|b| {
        if b > 0.0 {
            (b - ber_candidate) / b
        } else {
            0.0
        }
    });
    Ok(Metrics {
        ber_candidate,
        ber_noisy,
        improvement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcube::inject_noise;
    use crate::tree::reconstruct_matrix;

    fn striped(d: usize, n: usize) -> BinaryMatrix {
        BinaryMatrix::from_fn(d, n, |s, j| (s + j % 3) % 4 < 2).unwrap()
    }

    #[test]
    fn zero_spins_rejected() {
        let x = striped(8, 10);
        assert!(matches!(
            cycle_spin_denoise(&x, &TrainConfig::fixed(2, 3), 0, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn one_spin_is_the_single_reconstruction() {
        let x = inject_noise(&striped(12, 30), 0.3, 4).unwrap();
        let config = TrainConfig::fixed(3, 4);
        let r = cycle_spin_denoise(&x, &config, 1, 77).unwrap();
        let tree = build_tree(&x, &config.clone().with_seed(r.seeds[0])).unwrap();
        let single = reconstruct_matrix(&tree, &x).unwrap();
        assert_eq!(r.binary, single);
        assert_eq!(r.average, RealMatrix::from(&single));
        assert!(r.average.values().iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn identical_seeds_collapse_to_one_spin() {
        let x = inject_noise(&striped(10, 25), 0.4, 8).unwrap();
        let config = TrainConfig::fixed(2, 5);
        let many = cycle_spin_denoise_with_seeds(&x, &config, &[5; 6]).unwrap();
        let one = cycle_spin_denoise_with_seeds(&x, &config, &[5]).unwrap();
        assert_eq!(many.average, one.average);
        assert_eq!(many.binary, one.binary);
    }

    #[test]
    fn spin_order_does_not_matter() {
        let x = inject_noise(&striped(10, 25), 0.5, 2).unwrap();
        let config = TrainConfig::fixed(2, 4);
        let seeds = spin_seeds(9, 5);
        let mut reversed = seeds.clone();
        reversed.reverse();
        let a = cycle_spin_denoise_with_seeds(&x, &config, &seeds).unwrap();
        let b = cycle_spin_denoise_with_seeds(&x, &config, &reversed).unwrap();
        assert_eq!(a.votes, b.votes);
        assert_eq!(a.binary, b.binary);
    }

    #[test]
    fn averages_are_multiples_of_one_over_spins() {
        let x = inject_noise(&striped(9, 20), 0.6, 3).unwrap();
        let r = cycle_spin_denoise(&x, &TrainConfig::fixed(3, 3), 7, 0).unwrap();
        for (&v, &a) in r.votes.iter().zip(r.average.values()) {
            assert!(v <= 7);
            assert_eq!(a, ((2.0 * f64::from(v) - 7.0) / 7.0) as f32);
        }
        assert_eq!(r.binary, threshold(&r.average));
    }

    #[test]
    fn threshold_examples() {
        let pos = RealMatrix::new(2, 1, vec![0.2, 0.2]).unwrap();
        assert_eq!(threshold(&pos), BinaryMatrix::filled(2, 1, true).unwrap());
        let neg = RealMatrix::new(2, 1, vec![-1.0, -1.0]).unwrap();
        assert_eq!(threshold(&neg), BinaryMatrix::filled(2, 1, false).unwrap());
        let tie = RealMatrix::new(1, 1, vec![0.0]).unwrap();
        assert!(threshold(&tie).get(0, 0));
    }

    #[test]
    fn metrics() {
        let truth = striped(8, 10);
        let noisy = inject_noise(&truth, 0.5, 1).unwrap();
        let m = evaluate(&truth, &truth, Some(&noisy)).unwrap();
        assert_eq!(m.ber_candidate, 0.0);
        assert_eq!(m.improvement, Some(1.0));
        let same = evaluate(&truth, &noisy, Some(&noisy)).unwrap();
        assert_eq!(same.improvement, Some(0.0));
    }
}
