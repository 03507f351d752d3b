use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cubetree::io::{binarize, read_binary_matrix, read_idx_file, read_real_matrix};
use cubetree::seed::split;
use cubetree::tree::{build_tree, load, reconstruct_matrix, validate, TrainConfig};
use serde_json::Value;

fn digits() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/digits-8x8-idx3-ubyte.gz")
}

fn cubetree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubetree"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// The diagnostic is a single line.
fn one_line_stderr(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_a_valid_dictionary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    let out = cubetree(
        &[
            "train",
            "--input",
            input.to_str().unwrap(),
            "--limit",
            "300",
            "--q",
            "8",
            "--depth",
            "6",
            "--out",
            "d.ctree",
            "--json-out",
            "d.json",
        ],
        dir.path(),
    );
    ok(&out);
    let tree = load(std::fs::File::open(dir.path().join("d.ctree")).unwrap()).unwrap();
    assert!(validate(&tree).is_empty());
    assert_eq!(tree.d(), 64);
    assert_eq!(tree.n_points(), 300);

    let m = manifest(&dir.path().join("d.ctree.manifest.json"));
    assert_eq!(m["format"], "cubetree-manifest");
    assert_eq!(m["command"], "train");
    assert_eq!(m["config"]["q"], 8);
    assert_eq!(m["config"]["threshold"], 128);
    assert_eq!(m["metrics"]["nodes"], tree.len());
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["d.ctree", "d.json"]);

    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(json["nodes"].as_array().unwrap().len(), tree.len());
}

#[test]
fn depth_one_trains_the_root_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    let out = cubetree(
        &[
            "train",
            "--input",
            input.to_str().unwrap(),
            "--limit",
            "50",
            "--q",
            "10",
            "--depth",
            "1",
            "--out",
            "root.ctree",
        ],
        dir.path(),
    );
    ok(&out);
    let tree = load(std::fs::File::open(dir.path().join("root.ctree")).unwrap()).unwrap();
    assert_eq!(tree.len(), 1);
}

#[test]
fn manifest_as_config_reproduces_the_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    ok(&cubetree(
        &[
            "train",
            "--input",
            input.to_str().unwrap(),
            "--limit",
            "200",
            "--q",
            "5",
            "--depth",
            "5",
            "--seed",
            "9",
            "--refine-iters",
            "2",
            "--out",
            "a.ctree",
        ],
        dir.path(),
    ));
    // the manifest supplies every option; the flags redirect the outputs
    ok(&cubetree(
        &[
            "train",
            "--config",
            "a.ctree.manifest.json",
            "--out",
            "b.ctree",
            "--manifest",
            "b.json",
        ],
        dir.path(),
    ));
    let a = std::fs::read(dir.path().join("a.ctree")).unwrap();
    let b = std::fs::read(dir.path().join("b.ctree")).unwrap();
    assert_eq!(a, b);
    let (ma, mb) = (
        manifest(&dir.path().join("a.ctree.manifest.json")),
        manifest(&dir.path().join("b.json")),
    );
    assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    std::fs::write(
        dir.path().join("cfg.json"),
        format!(
            r#"{{"input": {:?}, "limit": 60, "q": 4, "depth": 3}}"#,
            input.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(&cubetree(
        &[
            "train", "--config", "cfg.json", "--depth", "2", "--out", "t.ctree",
        ],
        dir.path(),
    ));
    let m = manifest(&dir.path().join("t.ctree.manifest.json"));
    assert_eq!(m["config"]["depth"], 2);
    assert_eq!(m["config"]["q"], 4);
    assert_eq!(m["metrics"]["n"], 60);

    // a restriction flag replaces the file's restriction entirely
    ok(&cubetree(
        &[
            "train",
            "--config",
            "cfg.json",
            "--keep-fraction",
            "0.5",
            "--out",
            "k.ctree",
        ],
        dir.path(),
    ));
    let m = manifest(&dir.path().join("k.ctree.manifest.json"));
    assert_eq!(m["config"]["keep_fraction"], 0.5);
    assert!(m["config"]["q"].is_null());
}

#[test]
fn single_clean_spin_equals_the_tree_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    ok(&cubetree(
        &[
            "denoise",
            "--input",
            input.to_str().unwrap(),
            "--limit",
            "150",
            "--noise-frac",
            "0",
            "--spins",
            "1",
            "--q",
            "6",
            "--depth",
            "4",
            "--seed",
            "3",
            "--bin-out",
            "b.bits",
            "--avg-out",
            "a.real",
        ],
        dir.path(),
    ));
    let binary =
        read_binary_matrix(std::fs::File::open(dir.path().join("b.bits")).unwrap()).unwrap();
    let average =
        read_real_matrix(std::fs::File::open(dir.path().join("a.real")).unwrap()).unwrap();

    let x = binarize(&read_idx_file(input).unwrap().take(150), 128).unwrap();
    let tree = build_tree(&x, &TrainConfig::fixed(6, 4).with_seed(split(3, 0))).unwrap();
    let expected = reconstruct_matrix(&tree, &x).unwrap();
    assert_eq!(binary, expected);
    assert!(average.values().iter().all(|&v| v == 1.0 || v == -1.0));
}

#[test]
fn denoise_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    for (threads, name) in [("1", "one"), ("3", "three")] {
        ok(&cubetree(
            &[
                "denoise",
                "--threads",
                threads,
                "--input",
                input.to_str().unwrap(),
                "--limit",
                "200",
                "--noise-frac",
                "0.3",
                "--spins",
                "5",
                "--q",
                "8",
                "--depth",
                "5",
                "--avg-out",
                &format!("{name}.real"),
            ],
            dir.path(),
        ));
    }
    let one = std::fs::read(dir.path().join("one.real")).unwrap();
    let three = std::fs::read(dir.path().join("three.real")).unwrap();
    assert_eq!(one, three);
}

#[test]
fn denoise_renders_grids_and_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    ok(&cubetree(
        &[
            "denoise",
            "--input",
            input.to_str().unwrap(),
            "--limit",
            "300",
            "--noise-frac",
            "0.7",
            "--spins",
            "4",
            "--q",
            "8",
            "--depth",
            "8",
            "--bin-out",
            "out.bits",
            "--noisy-out",
            "noisy.bits",
            "--truth-out",
            "truth.bits",
            "--render",
            "16",
        ],
        dir.path(),
    ));
    for panel in ["noisy", "average", "binary", "truth"] {
        let pgm = std::fs::read(dir.path().join(format!("out-{panel}.pgm"))).unwrap();
        let header = b"P5\n32 32\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 32 * 32);
    }
    let m = manifest(&dir.path().join("out.bits.manifest.json"));
    let ber_noisy = m["metrics"]["ber_noisy"].as_f64().unwrap();
    let sigma = m["metrics"]["ber_noisy_sigma"].as_f64().unwrap();
    assert!(
        (ber_noisy - 0.35).abs() <= 3.0 * sigma,
        "{ber_noisy} {sigma}"
    );
    assert_eq!(m["seeds"]["spin_seeds"].as_array().unwrap().len(), 4);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 7);

    let out = cubetree(
        &[
            "eval",
            "--truth",
            "truth.bits",
            "--candidate",
            "out.bits",
            "--noisy",
            "noisy.bits",
            "--json",
        ],
        dir.path(),
    );
    ok(&out);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["metrics"]["ber_noisy"].as_f64().unwrap(), ber_noisy);
    assert_eq!(
        report["metrics"]["ber_candidate"],
        m["metrics"]["ber_binary"]
    );

    let out = cubetree(
        &["eval", "--truth", "truth.bits", "--candidate", "truth.bits"],
        dir.path(),
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ber_candidate 0.000000"));

    let out = cubetree(
        &[
            "eval",
            "--truth",
            "truth.bits",
            "--candidate",
            "noisy.bits",
            "--noisy",
            "noisy.bits",
            "--json",
            "--manifest",
            "e.json",
        ],
        dir.path(),
    );
    ok(&out);
    assert_eq!(
        manifest(&dir.path().join("e.json"))["metrics"]["improvement"],
        0.0
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--out", "x.ctree"][..],
        &[
            "train",
            "--input",
            "in",
            "--q",
            "3",
            "--keep-fraction",
            "0.5",
            "--out",
            "x",
        ],
        &["denoise", "--input", "in"],
        &["eval", "--truth", "t"],
        &["nonsense"],
        &["train", "--depth", "many"],
    ] {
        let out = cubetree(args, dir.path());
        assert_eq!(exit_code(&out), 2, "{args:?}");
        one_line_stderr(&out);
    }
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.idx"), [0u8, 0, 8, 1, 0, 0, 0, 1, 5]).unwrap();
    std::fs::write(
        dir.path().join("short.idx"),
        [0u8, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2],
    )
    .unwrap();
    for input in ["missing.idx", "bad.idx", "short.idx"] {
        let out = cubetree(&["train", "--input", input, "--out", "x.ctree"], dir.path());
        assert_eq!(exit_code(&out), 3, "{input}");
        let err = one_line_stderr(&out);
        assert!(err.contains(input), "{err}");
    }
    let out = cubetree(
        &["train", "--input", "short.idx", "--out", "x.ctree"],
        dir.path(),
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

#[test]
fn validation_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = digits();
    let input = input.to_str().unwrap();
    for args in [
        &[
            "denoise",
            "--input",
            input,
            "--noise-frac",
            "1.5",
            "--bin-out",
            "b",
        ][..],
        &[
            "denoise",
            "--input",
            input,
            "--spins",
            "0",
            "--bin-out",
            "b",
        ],
        &["train", "--input", input, "--q", "0", "--out", "x"],
        &["train", "--input", input, "--depth", "0", "--out", "x"],
        &[
            "denoise",
            "--input",
            input,
            "--limit",
            "10",
            "--spins",
            "1",
            "--render",
            "12",
            "--bin-out",
            "b",
        ],
    ] {
        let out = cubetree(args, dir.path());
        assert_eq!(exit_code(&out), 4, "{args:?}");
        one_line_stderr(&out);
    }
}
