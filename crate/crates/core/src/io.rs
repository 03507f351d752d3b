//! Images in, images out: IDX parsing, binarization, planted test data,
//! PGM grids and the raw matrix files used by the command line tool.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::index::sample;
use rand::Rng;

use crate::bitcube::{words_for, BinaryMatrix, BitVector, RealMatrix};
use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::subcube::Subcube;
use crate::tree::{CubeNode, CubeTree, TrainConfig};

const IDX_UBYTE_3D: u32 = 0x0000_0803;

/// A stack of 8-bit grayscale images, each stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl ImageSet {
    pub fn image(&self, k: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[k * size..(k + 1) * size]
    }

    /// The first `count` images.
    pub fn take(&self, count: usize) -> ImageSet {
        let count = count.min(self.count);
        ImageSet {
            count,
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..count * self.rows * self.cols].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::parse(at as u64, "truncated IDX header"))
}

/// Parses an IDX file of unsigned-byte images (magic `0x00000803`).
/// Gzip-compressed input is detected and inflated; byte offsets in errors
/// refer to the inflated stream.
pub fn parse_idx(mut source: impl Read) -> Result<ImageSet> {
    let mut raw = Vec::new();
    source.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut inflated)
            .map_err(|e| Error::parse(0, format!("bad gzip stream: {e}")))?;
        raw = inflated;
    }
    let magic = be_u32(&raw, 0)?;
    if magic >> 16 != 0 {
        return Err(Error::parse(0, format!("bad IDX magic {magic:#010x}")));
    }
    if magic != IDX_UBYTE_3D {
        return Err(Error::UnsupportedIdxType(magic));
    }
    let count = be_u32(&raw, 4)? as usize;
    let rows = be_u32(&raw, 8)? as usize;
    let cols = be_u32(&raw, 12)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse(4, "image dimensions overflow"))?;
    let body = raw.len() - 16;
    if body < expected {
        return Err(Error::parse(
            raw.len() as u64,
            format!("truncated IDX data: {expected} pixel bytes declared, {body} present"),
        ));
    }
    if body > expected {
        return Err(Error::parse(
            (16 + expected) as u64,
            "trailing bytes after IDX data",
        ));
    }
    raw.drain(..16);
    Ok(ImageSet {
        count,
        rows,
        cols,
        pixels: raw,
    })
}

pub fn read_idx_file(path: impl AsRef<Path>) -> Result<ImageSet> {
    parse_idx(File::open(path)?)
}

/// Writes an uncompressed IDX3 unsigned-byte file.
pub fn write_idx(images: &ImageSet, mut sink: impl Write) -> Result<()> {
    check_dim(
        images.count * images.rows * images.cols,
        images.pixels.len(),
    )?;
    let mut header = Vec::with_capacity(16);
    for v in [
        IDX_UBYTE_3D,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        header.extend_from_slice(&v.to_be_bytes());
    }
    sink.write_all(&header)?;
    sink.write_all(&images.pixels)?;
    Ok(())
}

/// One column per image: pixel `>= threshold` maps to `+1`, anything darker to `-1`.
pub fn binarize(images: &ImageSet, threshold: u8) -> Result<BinaryMatrix> {
    let d = images.rows * images.cols;
    if d == 0 {
        return Err(Error::param("images have no pixels"));
    }
    BinaryMatrix::from_fn(d, images.count, |s, j| {
        images.pixels[j * d + s] >= threshold
    })
}

/// Samples data from a random tree of nested subcubes.
///
/// The tree is complete to depth `l` (or until no free coordinates remain).
/// The root restricts `min(q, d)` random coordinates to random values; the
/// two children of a node restrict the same `min(q, free)` random free
/// coordinates, with opposite values, so siblings are always disjoint cubes.
/// Each point picks a leaf uniformly, copies the leaf center on restricted
/// coordinates, draws free coordinates uniformly, and finally has every entry
/// flipped independently with probability `flip_rate`.
///
/// Returns the data and the generating tree, whose member sets record which
/// points were drawn below each node.
pub fn generate_planted(
    d: usize,
    n: usize,
    q: usize,
    l: usize,
    flip_rate: f64,
    seed: u64,
) -> Result<(BinaryMatrix, CubeTree)> {
    if d == 0 || n == 0 {
        return Err(Error::param("planted data needs d >= 1 and n >= 1"));
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::param(format!(
            "flip rate {flip_rate} outside [0, 1]"
        )));
    }
    let config = TrainConfig::fixed(q, l).with_seed(seed);
    config.validate()?;
    let mut rng = seed::rng(seed);

    let random_center = |rng: &mut rand_chacha::ChaCha8Rng| BitVector::from_fn(d, |_| rng.random());
    let root_local = pick(&mut rng, &(0..d).collect::<Vec<_>>(), q);
    let root_cube = Subcube::new(random_center(&mut rng), root_local.clone())?;
    let mut nodes = vec![CubeNode {
        id: 0,
        depth: 1,
        parent: None,
        children: Vec::new(),
        cube: root_cube,
        local_restricted: root_local,
        members: Vec::new(),
    }];
    let mut stack = vec![0usize];
    // preorder: expand the most recently created node first
    while let Some(id) = stack.pop() {
        let (depth, cube) = (nodes[id].depth, nodes[id].cube.clone());
        if depth >= l || cube.dim() == 0 {
            continue;
        }
        let free: Vec<usize> = (0..d).filter(|&s| !cube.is_restricted(s)).collect();
        let local = pick(&mut rng, &free, q);
        let values: Vec<bool> = local.iter().map(|_| rng.random()).collect();
        let mut child_ids = Vec::new();
        for side in [false, true] {
            let mut center = random_center(&mut rng);
            for &s in cube.restricted() {
                center.set(s, cube.center().get(s));
            }
            for (&s, &v) in local.iter().zip(&values) {
                center.set(s, v != side);
            }
            let mut restricted = cube.restricted().to_vec();
            restricted.extend_from_slice(&local);
            child_ids.push(nodes.len());
            nodes.push(CubeNode {
                id: nodes.len(),
                depth: depth + 1,
                parent: Some(id),
                children: Vec::new(),
                cube: Subcube::new(center, restricted)?,
                local_restricted: local.clone(),
                members: Vec::new(),
            });
        }
        nodes[id].children = child_ids.clone();
        stack.extend(child_ids.into_iter().rev());
    }
    let nodes = renumber_preorder(nodes);
    let leaves: Vec<usize> = nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();

    let mut x = BinaryMatrix::filled(d, n, false)?;
    let mut nodes = nodes;
    for j in 0..n {
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let cube = nodes[leaf].cube.clone();
        for s in 0..d {
            let v = if cube.is_restricted(s) {
                cube.center().get(s)
            } else {
                rng.random()
            };
            let flip = flip_rate > 0.0 && rng.random_bool(flip_rate);
            x.set(s, j, v != flip);
        }
        let mut at = Some(leaf);
        while let Some(id) = at {
            nodes[id].members.push(j);
            at = nodes[id].parent;
        }
    }
    let tree = CubeTree::from_nodes(d, config, nodes, n)?;
    Ok((x, tree))
}

/// `min(q, pool.len())` distinct entries of `pool`, sorted.
fn pick(rng: &mut rand_chacha::ChaCha8Rng, pool: &[usize], q: usize) -> Vec<usize> {
    let k = q.min(pool.len());
    let mut out: Vec<usize> = sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    out.sort_unstable();
    out
}

/// Reorders nodes built in creation order into preorder ids.
fn renumber_preorder(nodes: Vec<CubeNode>) -> Vec<CubeNode> {
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        order.push(id);
        stack.extend(nodes[id].children.iter().rev());
    }
    let mut new_id = vec![0usize; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    let mut slots: Vec<Option<CubeNode>> = nodes.into_iter().map(Some).collect();
    order
        .iter()
        .map(|&old| {
            let mut node = slots[old].take().expect("each node visited once");
            node.id = new_id[old];
            node.parent = node.parent.map(|p| new_id[p]);
            node.children = node.children.iter().map(|&c| new_id[c]).collect();
            node
        })
        .collect()
}

/// Anything that can be shown as a grid of grayscale tiles, one tile per column.
pub trait PixelSource {
    fn d(&self) -> usize;
    fn n(&self) -> usize;
    /// Entry in `[-1, 1]`.
    fn value(&self, s: usize, j: usize) -> f32;
}

impl PixelSource for BinaryMatrix {
    fn d(&self) -> usize {
        BinaryMatrix::d(self)
    }
    fn n(&self) -> usize {
        BinaryMatrix::n(self)
    }
    fn value(&self, s: usize, j: usize) -> f32 {
        f32::from(self.sign(s, j))
    }
}

impl PixelSource for RealMatrix {
    fn d(&self) -> usize {
        RealMatrix::d(self)
    }
    fn n(&self) -> usize {
        RealMatrix::n(self)
    }
    fn value(&self, s: usize, j: usize) -> f32 {
        self.get(s, j)
    }
}

/// Maps `[-1, 1]` linearly onto `[0, 255]`.
pub fn to_gray(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Tiles the first `grid_w * grid_h` columns, each a `rows x cols` image,
/// row by row into a binary PGM (P5).
pub fn render_grid(
    m: &impl PixelSource,
    rows: usize,
    cols: usize,
    grid_w: usize,
    grid_h: usize,
    mut sink: impl Write,
) -> Result<()> {
    check_dim(m.d(), rows * cols)?;
    let tiles = grid_w * grid_h;
    if tiles == 0 {
        return Err(Error::param("grid must hold at least one tile"));
    }
    if m.n() < tiles {
        return Err(Error::param(format!(
            "{tiles} tiles requested but only {} columns available",
            m.n()
        )));
    }
    let (width, height) = (grid_w * cols, grid_h * rows);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for y in 0..height {
        let (tile_row, r) = (y / rows, y % rows);
        for x in 0..width {
            let (tile_col, c) = (x / cols, x % cols);
            let j = tile_row * grid_w + tile_col;
            out.push(to_gray(m.value(r * cols + c, j)));
        }
    }
    sink.write_all(&out)?;
    Ok(())
}

pub fn render_grid_file(
    m: &impl PixelSource,
    rows: usize,
    cols: usize,
    grid_w: usize,
    grid_h: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    render_grid(m, rows, cols, grid_w, grid_h, &mut w)?;
    w.flush()?;
    Ok(())
}

const BITS_MAGIC: &[u8; 8] = b"CUBEBITS";
const REAL_MAGIC: &[u8; 8] = b"CUBEREAL";
const MATRIX_VERSION: u16 = 1;

fn matrix_header(magic: &[u8; 8], d: usize, n: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(22);
    h.extend_from_slice(magic);
    h.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    h.extend_from_slice(&(d as u32).to_le_bytes());
    h.extend_from_slice(&(n as u64).to_le_bytes());
    h
}

fn read_matrix_header(buf: &[u8], magic: &[u8; 8]) -> Result<(usize, usize)> {
    if buf.len() < 22 {
        return Err(Error::parse(buf.len() as u64, "truncated matrix header"));
    }
    if &buf[..8] != magic {
        return Err(Error::parse(
            0,
            format!("expected {} file", String::from_utf8_lossy(magic)),
        ));
    }
    let version = u16::from_le_bytes([buf[8], buf[9]]);
    if version != MATRIX_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version.into(),
            supported: MATRIX_VERSION.into(),
        });
    }
    let d = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(buf[14..22].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::parse(10, "d must be at least 1"));
    }
    Ok((d, n))
}

fn check_body(buf: &[u8], expected: usize) -> Result<()> {
    let body = buf.len() - 22;
    if body < expected {
        Err(Error::parse(buf.len() as u64, "truncated matrix data"))
    } else if body > expected {
        Err(Error::parse(
            (22 + expected) as u64,
            "trailing bytes after matrix data",
        ))
    } else {
        Ok(())
    }
}

/// `CUBEBITS` file: magic, u16 version, u32 d, u64 n, then the packed
/// column words as little-endian u64.
pub fn write_binary_matrix(m: &BinaryMatrix, mut sink: impl Write) -> Result<()> {
    let mut buf = matrix_header(BITS_MAGIC, m.d(), m.n());
    buf.reserve(m.as_words().len() * 8);
    for w in m.as_words() {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_binary_matrix(mut source: impl Read) -> Result<BinaryMatrix> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let (d, n) = read_matrix_header(&buf, BITS_MAGIC)?;
    let words = words_for(d) * n;
    check_body(&buf, words * 8)?;
    let bits: Vec<u64> = buf[22..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tail = d % 64;
    if tail != 0
        && bits
            .chunks(words_for(d))
            .any(|col| col[col.len() - 1] >> tail != 0)
    {
        return Err(Error::parse(22, "padding bits set past d"));
    }
    Ok(BinaryMatrix::from_raw(d, n, bits))
}

/// `CUBEREAL` file: same header as `CUBEBITS`, then `d * n` little-endian f32
/// values in column-major order.
pub fn write_real_matrix(m: &RealMatrix, mut sink: impl Write) -> Result<()> {
    let mut buf = matrix_header(REAL_MAGIC, m.d(), m.n());
    buf.reserve(m.values().len() * 4);
    for v in m.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_real_matrix(mut source: impl Read) -> Result<RealMatrix> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let (d, n) = read_matrix_header(&buf, REAL_MAGIC)?;
    check_body(&buf, d * n * 4)?;
    let values = buf[22..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RealMatrix::new(d, n, values)
}
