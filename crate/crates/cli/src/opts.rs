//! Command line flags, and the JSON config files that can supply them.
//!
//! A config file is a JSON object keyed by long flag names with `_` in place
//! of `-`. A run manifest is accepted as well: its `config` object holds the
//! fully resolved options of the run that wrote it. Flags given on the
//! command line always win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "cubetree",
    version,
    about = "Subcube tree dictionaries and denoising for binary images"
)]
pub struct Cli {
    /// Worker threads; defaults to the machine's parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON config file or run manifest supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tree dictionary on a binarized image set.
    Train(TrainOpts),
    /// Corrupt a data set with uniform noise and denoise it by averaging trees.
    Denoise(DenoiseOpts),
    /// Bit error rates of a candidate (and a noisy input) against the truth.
    Eval(EvalOpts),
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    /// IDX image file (optionally gzipped) or CUBEBITS matrix.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Pixels at or above this value become +1 [default: 128].
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Use only the first N data points.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
    /// Coordinates restricted per level [default: 90].
    #[arg(long, conflicts_with = "keep_fraction")]
    pub q: Option<usize>,
    /// Choose restrictions to keep this fraction of discrepancy energy free.
    #[arg(long, value_name = "TAU")]
    pub keep_fraction: Option<f64>,
    /// Tree depth; the root is depth 1 [default: 9].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Clustering seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refinement rounds after growing [default: 0].
    #[arg(long)]
    pub refine_iters: Option<usize>,
    /// Nodes with fewer points are not split [default: 2].
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// Lloyd iteration cap per split [default: 100].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Dictionary output file.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Also write the tree as JSON.
    #[arg(long, value_name = "PATH")]
    pub json_out: Option<PathBuf>,
    /// Manifest path [default: <out>.manifest.json].
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseOpts {
    /// IDX image file (optionally gzipped) or CUBEBITS matrix of clean data.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Pixels at or above this value become +1 [default: 128].
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Use only the first N data points.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
    /// Fraction of entries replaced by fair coin flips [default: 0.7].
    #[arg(long, value_name = "P")]
    pub noise_frac: Option<f64>,
    /// Seed of the noise realization [default: 0].
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Number of trees averaged [default: 100].
    #[arg(long)]
    pub spins: Option<usize>,
    /// Coordinates restricted per level [default: 90].
    #[arg(long, conflicts_with = "keep_fraction")]
    pub q: Option<usize>,
    /// Choose restrictions to keep this fraction of discrepancy energy free.
    #[arg(long, value_name = "TAU")]
    pub keep_fraction: Option<f64>,
    /// Tree depth [default: 9].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Master seed; spin k uses a seed derived from it and k [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refinement rounds per spin [default: 0].
    #[arg(long)]
    pub refine_iters: Option<usize>,
    /// Nodes with fewer points are not split [default: 2].
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// Lloyd iteration cap per split [default: 100].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Averaged reconstruction (CUBEREAL).
    #[arg(long, value_name = "PATH")]
    pub avg_out: Option<PathBuf>,
    /// Thresholded reconstruction (CUBEBITS).
    #[arg(long, value_name = "PATH")]
    pub bin_out: Option<PathBuf>,
    /// Noisy input (CUBEBITS).
    #[arg(long, value_name = "PATH")]
    pub noisy_out: Option<PathBuf>,
    /// Clean binarized input (CUBEBITS).
    #[arg(long, value_name = "PATH")]
    pub truth_out: Option<PathBuf>,
    /// Render the first N images of each panel as PGM grids.
    #[arg(long, value_name = "N")]
    pub render: Option<usize>,
    /// Tiles per grid row [default: ceil(sqrt(N))].
    #[arg(long)]
    pub render_cols: Option<usize>,
    /// Grid files are <prefix>-noisy.pgm, -average.pgm, -binary.pgm, -truth.pgm [default: manifest path stem].
    #[arg(long, value_name = "PATH")]
    pub render_prefix: Option<PathBuf>,
    /// Manifest path [default: <bin-out or avg-out>.manifest.json].
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOpts {
    /// Clean data: CUBEBITS, or IDX binarized at --threshold.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    /// Candidate reconstruction: CUBEBITS, CUBEREAL (signs taken) or IDX.
    #[arg(long, value_name = "PATH")]
    pub candidate: Option<PathBuf>,
    /// Noisy input the candidate was recovered from.
    #[arg(long, value_name = "PATH")]
    pub noisy: Option<PathBuf>,
    /// Threshold for IDX inputs [default: 128].
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Print the manifest as JSON instead of the text report.
    #[arg(long)]
    #[serde(skip)]
    pub json: bool,
    /// Also write the manifest to this path.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

/// Fills every unset field of `$flags` from `$file`.
macro_rules! fill {
    ($flags:expr, $file:expr; $($f:ident),* $(,)?) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f.take(); } )*
    };
}

/// A restriction flag on the command line overrides both restriction keys of the file.
macro_rules! fill_restriction {
    ($flags:expr, $file:expr) => {
        if $flags.q.is_none() && $flags.keep_fraction.is_none() {
            $flags.q = $file.q.take();
            $flags.keep_fraction = $file.keep_fraction.take();
        }
    };
}

impl TrainOpts {
    pub fn merge(mut self, mut file: TrainOpts) -> Self {
        fill_restriction!(self, file);
        fill!(self, file; input, threshold, limit, depth, seed, refine_iters, min_node_size, max_iter, out, json_out, manifest);
        self
    }
}

impl DenoiseOpts {
    pub fn merge(mut self, mut file: DenoiseOpts) -> Self {
        fill_restriction!(self, file);
        fill!(self, file; input, threshold, limit, noise_frac, noise_seed, spins, depth, seed, refine_iters,
            min_node_size, max_iter, avg_out, bin_out, noisy_out, truth_out, render, render_cols, render_prefix, manifest);
        self
    }
}

impl EvalOpts {
    pub fn merge(mut self, mut file: EvalOpts) -> Self {
        fill!(self, file; truth, candidate, noisy, threshold, manifest);
        self
    }
}

/// Reads a config file, unwrapping a manifest's `config` object.
pub fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if value.get("format").and_then(|f| f.as_str()) == Some(crate::manifest::FORMAT) {
        value = value
            .get_mut("config")
            .map(serde_json::Value::take)
            .ok_or_else(|| {
                CliError::usage(format!("{}: manifest has no config", path.display()))
            })?;
    }
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
