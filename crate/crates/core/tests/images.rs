use std::path::PathBuf;

use cubetree::io::{binarize, parse_idx, read_idx_file, render_grid, write_idx};
use cubetree::tree::{build_tree, validate, TrainConfig};

fn digits_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/digits-8x8-idx3-ubyte.gz")
}

#[test]
fn gzipped_fixture_parses() {
    let images = read_idx_file(digits_path()).unwrap();
    assert_eq!((images.count, images.rows, images.cols), (1797, 8, 8));
    assert_eq!(images.pixels.len(), 1797 * 64);

    let mut plain = Vec::new();
    write_idx(&images, &mut plain).unwrap();
    assert_eq!(parse_idx(plain.as_slice()).unwrap(), images);
}

#[test]
fn parse_binarize_render_geometry() {
    let images = read_idx_file(digits_path()).unwrap();
    let x = binarize(&images, 128).unwrap();
    assert_eq!((x.d(), x.n()), (64, 1797));
    let mut pgm = Vec::new();
    render_grid(&x, 8, 8, 8, 8, &mut pgm).unwrap();
    let header = b"P5\n64 64\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 64 * 64);
    // only black and white tiles from a binary matrix
    assert!(pgm[header.len()..].iter().all(|&v| v == 0 || v == 255));
    // tile (0, 0) is image 0
    for r in 0..8 {
        for c in 0..8 {
            let expected = if images.image(0)[r * 8 + c] >= 128 {
                255
            } else {
                0
            };
            assert_eq!(pgm[header.len() + r * 64 + c], expected);
        }
    }
}

#[test]
fn fully_restricted_tree_on_real_images() {
    let x = binarize(&read_idx_file(digits_path()).unwrap(), 128).unwrap();
    let tree = build_tree(&x, &TrainConfig::fixed(8, 8).with_seed(1)).unwrap();
    assert!(validate(&tree).is_empty());
    assert!(tree
        .leaves()
        .iter()
        .all(|&l| tree.node(l).depth < 8 || tree.node(l).cube.dim() == 0));
}
