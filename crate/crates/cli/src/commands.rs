use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cubetree::bitcube::{bit_error_rate, inject_noise, BinaryMatrix};
use cubetree::denoise::{cycle_spin_denoise, evaluate, threshold};
use cubetree::io::{
    binarize, parse_idx, read_binary_matrix, read_real_matrix, render_grid_file, PixelSource,
};
use cubetree::tree::{
    self, build_tree, reconstruction_error, refine_with_history, validate, Restriction, TrainConfig,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{self, FileRecord, Manifest};
use crate::opts::{DenoiseOpts, EvalOpts, TrainOpts};

pub const DEFAULT_THRESHOLD: u8 = 128;
pub const DEFAULT_Q: usize = 90;
pub const DEFAULT_DEPTH: usize = 9;
pub const DEFAULT_SPINS: usize = 100;
pub const DEFAULT_NOISE_FRAC: f64 = 0.7;

/// Data points plus the image geometry when the source has one.
struct Dataset {
    x: BinaryMatrix,
    image: Option<(usize, usize)>,
}

/// Loads a CUBEBITS or CUBEREAL matrix (signs), or an IDX image file binarized at `threshold`.
fn load_points(
    path: &Path,
    threshold_value: u8,
    limit: Option<usize>,
) -> CliResult<(Dataset, FileRecord)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::at(path, e))?;
    let record = FileRecord::of_bytes(path, &bytes);
    let (x, image) = if bytes.starts_with(b"CUBEBITS") {
        let x = read_binary_matrix(&bytes[..]).map_err(|e| CliError::at(path, e))?;
        (x, None)
    } else if bytes.starts_with(b"CUBEREAL") {
        let m = read_real_matrix(&bytes[..]).map_err(|e| CliError::at(path, e))?;
        (threshold(&m), None)
    } else {
        let images = parse_idx(&bytes[..]).map_err(|e| CliError::at(path, e))?;
        let geometry = (images.rows, images.cols);
        (binarize(&images, threshold_value)?, Some(geometry))
    };
    let x = match limit {
        Some(0) => return Err(CliError::validation("--limit must be at least 1")),
        Some(k) => x.head(k),
        None => x,
    };
    if x.n() == 0 {
        return Err(CliError::validation(format!(
            "{}: no data points",
            path.display()
        )));
    }
    // square dimensions are taken as square images
    let image = image.or_else(|| {
        let side = (x.d() as f64).sqrt().round() as usize;
        (side * side == x.d()).then_some((side, side))
    });
    Ok((Dataset { x, image }, record))
}

fn required(value: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    value.ok_or_else(|| CliError::usage(format!("missing required --{flag}")))
}

fn restriction(q: Option<usize>, keep_fraction: Option<f64>) -> CliResult<Restriction> {
    match (q, keep_fraction) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "--q and --keep-fraction are mutually exclusive",
        )),
        (None, Some(tau)) => Ok(Restriction::KeepFraction { tau }),
        (q, None) => Ok(Restriction::Fixed {
            q: q.unwrap_or(DEFAULT_Q),
        }),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::at(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> cubetree::Result<()>,
) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::at(path, e))?;
    w.flush().map_err(|e| CliError::at(path, e))
}

pub fn train(opts: TrainOpts) -> CliResult<()> {
    let input = required(opts.input.clone(), "input")?;
    let out = required(opts.out.clone(), "out")?;
    let restriction = restriction(opts.q, opts.keep_fraction)?;
    let mut config = TrainConfig::fixed(1, opts.depth.unwrap_or(DEFAULT_DEPTH));
    config.restriction = restriction;
    config.seed = opts.seed.unwrap_or(0);
    config.refine_iters = opts.refine_iters.unwrap_or(0);
    if let Some(m) = opts.min_node_size {
        config.min_node_size = m;
    }
    if let Some(m) = opts.max_iter {
        config.max_iter = m;
    }
    config.validate()?;
    let threshold_value = opts.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let manifest_path = opts
        .manifest
        .clone()
        .unwrap_or_else(|| manifest::default_path(&out));

    let resolved = TrainOpts {
        input: Some(input.clone()),
        threshold: Some(threshold_value),
        limit: opts.limit,
        q: match restriction {
            Restriction::Fixed { q } => Some(q),
            Restriction::KeepFraction { .. } => None,
        },
        keep_fraction: opts.keep_fraction,
        depth: Some(config.depth),
        seed: Some(config.seed),
        refine_iters: Some(config.refine_iters),
        min_node_size: Some(config.min_node_size),
        max_iter: Some(config.max_iter),
        out: Some(out.clone()),
        json_out: opts.json_out.clone(),
        manifest: Some(manifest_path.clone()),
    };
    let mut m = Manifest::new("train", &resolved);
    m.seed("seed", config.seed);

    let (data, record) = m.timed("load", || load_points(&input, threshold_value, opts.limit))?;
    m.inputs.push(record);
    let x = data.x;
    let mut tree = m.timed("build", || build_tree(&x, &config))?;
    if config.refine_iters > 0 {
        let (refined, history) = m.timed("refine", || {
            refine_with_history(&tree, &x, config.refine_iters)
        })?;
        tree = refined;
        m.metric("refine_error_history", history);
    }
    let violations = validate(&tree);
    if let Some(v) = violations.first() {
        return Err(CliError::validation(format!(
            "trained tree failed validation ({} violations, first: {v})",
            violations.len()
        )));
    }
    let error = reconstruction_error(&tree, &x)?;

    m.timed("write", || -> CliResult<()> {
        write_with(&out, |w| tree::save(&tree, w))?;
        if let Some(path) = &opts.json_out {
            write_with(path, |w| tree::write_json(&tree, w))?;
        }
        Ok(())
    })?;
    m.output(&out)?;
    if let Some(path) = &opts.json_out {
        m.output(path)?;
    }
    m.metric("d", x.d());
    m.metric("n", x.n());
    m.metric("nodes", tree.len());
    m.metric("leaves", tree.leaves().len());
    m.metric("height", tree.height());
    m.metric("reconstruction_error", error);
    m.metric("reconstruction_ber", error as f64 / (x.d() * x.n()) as f64);
    m.write(&manifest_path)?;

    println!(
        "trained {} nodes ({} leaves, height {}) on {} points of dimension {}",
        tree.len(),
        tree.leaves().len(),
        tree.height(),
        x.n(),
        x.d()
    );
    println!("reconstruction error {error} bits");
    println!("dictionary: {}", out.display());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

pub fn denoise(opts: DenoiseOpts) -> CliResult<()> {
    let input = required(opts.input.clone(), "input")?;
    let manifest_path = match (&opts.manifest, &opts.bin_out, &opts.avg_out) {
        (Some(p), _, _) => p.clone(),
        (None, Some(p), _) | (None, None, Some(p)) => manifest::default_path(p),
        (None, None, None) => {
            return Err(CliError::usage(
                "need at least one of --bin-out, --avg-out or --manifest",
            ))
        }
    };
    let restriction = restriction(opts.q, opts.keep_fraction)?;
    let mut config = TrainConfig::fixed(1, opts.depth.unwrap_or(DEFAULT_DEPTH));
    config.restriction = restriction;
    config.refine_iters = opts.refine_iters.unwrap_or(0);
    if let Some(v) = opts.min_node_size {
        config.min_node_size = v;
    }
    if let Some(v) = opts.max_iter {
        config.max_iter = v;
    }
    config.validate()?;
    let p = opts.noise_frac.unwrap_or(DEFAULT_NOISE_FRAC);
    if !(0.0..=1.0).contains(&p) {
        return Err(CliError::validation(format!(
            "--noise-frac {p} outside [0, 1]"
        )));
    }
    let spins = opts.spins.unwrap_or(DEFAULT_SPINS);
    if spins == 0 {
        return Err(CliError::validation("--spins must be at least 1"));
    }
    let seed = opts.seed.unwrap_or(0);
    let noise_seed = opts.noise_seed.unwrap_or(0);
    let threshold_value = opts.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let render_prefix = opts.render.map(|_| {
        opts.render_prefix.clone().unwrap_or_else(|| {
            let s = manifest_path.to_string_lossy();
            PathBuf::from(s.strip_suffix(".manifest.json").unwrap_or(&s).to_string())
                .with_extension("")
        })
    });

    let resolved = DenoiseOpts {
        input: Some(input.clone()),
        threshold: Some(threshold_value),
        noise_frac: Some(p),
        noise_seed: Some(noise_seed),
        spins: Some(spins),
        q: match restriction {
            Restriction::Fixed { q } => Some(q),
            Restriction::KeepFraction { .. } => None,
        },
        depth: Some(config.depth),
        seed: Some(seed),
        refine_iters: Some(config.refine_iters),
        min_node_size: Some(config.min_node_size),
        max_iter: Some(config.max_iter),
        render_prefix: render_prefix.clone(),
        manifest: Some(manifest_path.clone()),
        ..opts.clone()
    };
    let mut m = Manifest::new("denoise", &resolved);
    m.seed("seed", seed);
    m.seed("noise_seed", noise_seed);

    let (data, record) = m.timed("load", || load_points(&input, threshold_value, opts.limit))?;
    m.inputs.push(record);
    let truth = data.x;
    let (rows_cols, tiles) = match opts.render {
        Some(count) => {
            let geometry = data.image.ok_or_else(|| {
                CliError::validation("--render needs image geometry (IDX input or square d)")
            })?;
            let cols = opts
                .render_cols
                .unwrap_or((count as f64).sqrt().ceil() as usize)
                .max(1);
            if count == 0 || count % cols != 0 {
                return Err(CliError::validation(format!(
                    "--render {count} does not fill a grid {cols} tiles wide; set --render-cols"
                )));
            }
            if count > truth.n() {
                return Err(CliError::validation(format!(
                    "--render {count} exceeds the {} data points",
                    truth.n()
                )));
            }
            (Some(geometry), Some((cols, count / cols)))
        }
        None => (None, None),
    };

    let noisy = m.timed("noise", || inject_noise(&truth, p, noise_seed))?;
    let result = m.timed("denoise", || {
        cycle_spin_denoise(&noisy, &config, spins, seed)
    })?;
    m.seed("spin_seeds", &result.seeds);
    let metrics = evaluate(&truth, &result.binary, Some(&noisy))?;
    let total = (truth.d() * truth.n()) as f64;
    let replaced = (p * total).round();

    let start = std::time::Instant::now();
    let mut outputs = Vec::new();
    if let Some(path) = &opts.avg_out {
        write_with(path, |w| {
            cubetree::io::write_real_matrix(&result.average, w)
        })?;
        outputs.push(path.clone());
    }
    for (path, mat) in [
        (&opts.bin_out, &result.binary),
        (&opts.noisy_out, &noisy),
        (&opts.truth_out, &truth),
    ] {
        if let Some(path) = path {
            write_with(path, |w| cubetree::io::write_binary_matrix(mat, w))?;
            outputs.push(path.clone());
        }
    }
    if let (Some(prefix), Some((rows, cols)), Some((gw, gh))) = (&render_prefix, rows_cols, tiles) {
        let panels: [(&str, &dyn Render); 4] = [
            ("noisy", &noisy),
            ("average", &result.average),
            ("binary", &result.binary),
            ("truth", &truth),
        ];
        for (name, panel) in panels {
            let mut s = prefix.as_os_str().to_owned();
            s.push(format!("-{name}.pgm"));
            let path = PathBuf::from(s);
            panel.render(rows, cols, gw, gh, &path)?;
            outputs.push(path);
        }
    }
    m.timings.insert("write", start.elapsed().as_secs_f64());
    for path in &outputs {
        m.output(path)?;
    }

    m.metric("d", truth.d());
    m.metric("n", truth.n());
    m.metric("spins", spins);
    m.metric("noise_frac", p);
    m.metric("ber_noisy", metrics.ber_noisy);
    m.metric("ber_noisy_expected", p / 2.0);
    // each replaced entry flips with probability 1/2
    m.metric("ber_noisy_sigma", (replaced / 4.0).sqrt() / total);
    m.metric("ber_binary", metrics.ber_candidate);
    m.metric("improvement", metrics.improvement);
    m.write(&manifest_path)?;

    println!(
        "denoised {} points of dimension {} with {spins} spins",
        truth.n(),
        truth.d()
    );
    println!("noisy BER {:.6}", metrics.ber_noisy.unwrap_or(0.0));
    println!("denoised BER {:.6}", metrics.ber_candidate);
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

/// Object-safe front for [`render_grid_file`].
trait Render {
    fn render(&self, rows: usize, cols: usize, gw: usize, gh: usize, path: &Path) -> CliResult<()>;
}

impl<T: PixelSource> Render for T {
    fn render(&self, rows: usize, cols: usize, gw: usize, gh: usize, path: &Path) -> CliResult<()> {
        render_grid_file(self, rows, cols, gw, gh, path).map_err(|e| CliError::at(path, e))
    }
}

pub fn eval(opts: EvalOpts) -> CliResult<()> {
    let truth_path = required(opts.truth.clone(), "truth")?;
    let candidate_path = required(opts.candidate.clone(), "candidate")?;
    let threshold_value = opts.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let resolved = EvalOpts {
        threshold: Some(threshold_value),
        ..opts.clone()
    };
    let mut m = Manifest::new("eval", &resolved);

    let (truth, r) = load_points(&truth_path, threshold_value, None)?;
    m.inputs.push(r);
    let (candidate, r) = load_points(&candidate_path, threshold_value, None)?;
    m.inputs.push(r);
    let noisy = match &opts.noisy {
        Some(path) => {
            let (noisy, r) = load_points(path, threshold_value, None)?;
            m.inputs.push(r);
            Some(noisy.x)
        }
        None => None,
    };
    let metrics = evaluate(&truth.x, &candidate.x, noisy.as_ref())?;
    m.metric("d", truth.x.d());
    m.metric("n", truth.x.n());
    m.metric("ber_candidate", metrics.ber_candidate);
    m.metric("ber_noisy", metrics.ber_noisy);
    m.metric("improvement", metrics.improvement);
    if let Some(noisy) = &noisy {
        m.metric(
            "ber_candidate_vs_noisy",
            bit_error_rate(&candidate.x, noisy)?,
        );
    }
    if let Some(path) = &opts.manifest {
        m.write(path)?;
    }

    if opts.json {
        println!("{}", m.to_json());
    } else {
        println!("ber_candidate {:.6}", metrics.ber_candidate);
        if let (Some(b), Some(i)) = (metrics.ber_noisy, metrics.improvement) {
            println!("ber_noisy {b:.6}");
            println!("improvement {i:.6}");
        }
    }
    Ok(())
}
