//! Dictionary file format.
//!
//! All integers are little-endian; `varint` is unsigned LEB128.
//!
//! ```text
//! magic          8 bytes  "CUBETREE"
//! version        u16      FORMAT_VERSION
//! flags          u16      bit 0: member sets present
//! d              u32
//! n_points       u64      training points covered by the member sets (0 without)
//! restriction    u8       0 = fixed q, 1 = keep fraction
//! value          u64      q, or the keep fraction as f64 bits
//! depth          u32
//! seed           u64
//! refine_iters   u32
//! min_node_size  u32
//! max_iter       u32
//! node_count     u32
//! node_count nodes, preorder:
//!   depth        varint
//!   children     u8       0 or 2
//!   restricted   varint count, then sorted deltas (first absolute, then gap - 1)
//!   center       ceil(d / 64) u64 words, bit s = coordinate s, 1 = +1
//!   members      (flag bit 0 only) varint count, then sorted deltas
//! ```
//!
//! Parent links and local restrictions are not stored: parents follow from
//! the preorder layout and the child counts, local restrictions from the
//! difference between a node's restricted set and its parent's.

use std::io::{Read, Write};

use serde::Serialize;

use crate::bitcube::{words_for, BitVector};
use crate::error::{Error, Result};
use crate::subcube::Subcube;

use super::{CubeNode, CubeTree, Restriction, TrainConfig};

pub const MAGIC: &[u8; 8] = b"CUBETREE";
pub const FORMAT_VERSION: u16 = 1;
const FLAG_MEMBERS: u16 = 1;

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::param(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn varint(&mut self, mut v: u64) {
        while v >= 0x80 {
            self.buf.push((v as u8) | 0x80);
            v >>= 7;
        }
        self.buf.push(v as u8);
    }
    fn sorted_set(&mut self, set: &[usize]) {
        self.varint(set.len() as u64);
        let mut prev: Option<usize> = None;
        for &v in set {
            let delta = match prev {
                None => v,
                Some(p) => v - p - 1,
            };
            self.varint(delta as u64);
            prev = Some(v);
        }
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.pos as u64, msg)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(self.err(format!("truncated input while reading {what}")));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn varint(&mut self, what: &str) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.u8(what)?;
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(self.err(format!("varint overflow in {what}")))
    }
    fn sorted_set(&mut self, bound: usize, what: &str) -> Result<Vec<usize>> {
        let start = self.pos;
        let len = self.varint(what)? as usize;
        if len > bound {
            return Err(Error::parse(
                start as u64,
                format!("{what}: {len} entries exceed bound {bound}"),
            ));
        }
        let mut out = Vec::with_capacity(len);
        let mut next = 0u64;
        for _ in 0..len {
            let v = next
                .checked_add(self.varint(what)?)
                .filter(|&v| v < bound as u64)
                .ok_or_else(|| self.err(format!("{what}: index out of range")))?;
            out.push(v as usize);
            next = v + 1;
        }
        Ok(out)
    }
}

/// Writes `tree` in the dictionary format.
pub fn save(tree: &CubeTree, mut sink: impl Write) -> Result<()> {
    let mut e = Encoder { buf: Vec::new() };
    e.buf.extend_from_slice(MAGIC);
    e.u16(FORMAT_VERSION);
    e.u16(if tree.has_members() { FLAG_MEMBERS } else { 0 });
    e.u32(tree.d)?;
    e.u64(tree.n_points as u64);
    let c = &tree.config;
    match c.restriction {
        Restriction::Fixed { q } => {
            e.u8(0);
            e.u64(q as u64);
        }
        Restriction::KeepFraction { tau } => {
            e.u8(1);
            e.u64(tau.to_bits());
        }
    }
    e.u32(c.depth)?;
    e.u64(c.seed);
    e.u32(c.refine_iters)?;
    e.u32(c.min_node_size)?;
    e.u32(c.max_iter)?;
    e.u32(tree.nodes.len())?;
    for node in &tree.nodes {
        e.varint(node.depth as u64);
        e.u8(node.children.len() as u8);
        e.sorted_set(node.cube.restricted());
        for &w in node.cube.center().as_words() {
            e.u64(w);
        }
        if tree.has_members() {
            e.sorted_set(&node.members);
        }
    }
    sink.write_all(&e.buf)?;
    Ok(())
}

/// Reads a tree written by [`save`].
pub fn load(mut source: impl Read) -> Result<CubeTree> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let mut r = Decoder { buf: &buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::parse(0, "not a CUBETREE dictionary (bad magic)"));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version.into(),
            supported: FORMAT_VERSION.into(),
        });
    }
    let flags = r.u16("flags")?;
    if flags & !FLAG_MEMBERS != 0 {
        return Err(r.err(format!("unknown flags {flags:#06x}")));
    }
    let with_members = flags & FLAG_MEMBERS != 0;
    let d = r.u32("d")?;
    if d == 0 {
        return Err(r.err("d must be at least 1"));
    }
    let n_points = r.u64("n_points")? as usize;
    let restriction = match r.u8("restriction")? {
        0 => Restriction::Fixed {
            q: r.u64("q")? as usize,
        },
        1 => Restriction::KeepFraction {
            tau: f64::from_bits(r.u64("keep fraction")?),
        },
        other => return Err(r.err(format!("unknown restriction kind {other}"))),
    };
    let config = TrainConfig {
        restriction,
        depth: r.u32("depth")?,
        seed: r.u64("seed")?,
        refine_iters: r.u32("refine_iters")?,
        min_node_size: r.u32("min_node_size")?,
        max_iter: r.u32("max_iter")?,
    };
    let count = r.u32("node count")?;
    if count == 0 {
        return Err(r.err("a tree needs at least one node"));
    }

    let words = words_for(d);
    let mut nodes: Vec<CubeNode> = Vec::with_capacity(count.min(1 << 20));
    // (node id, children still to attach)
    let mut open: Vec<(usize, u8)> = Vec::new();
    for id in 0..count {
        let at = r.pos;
        let parent = loop {
            match open.last_mut() {
                None if id == 0 => break None,
                None => {
                    return Err(Error::parse(
                        at as u64,
                        format!("node {id} is not reachable from the root"),
                    ))
                }
                Some((_, 0)) => {
                    open.pop();
                }
                Some((p, left)) => {
                    *left -= 1;
                    break Some(*p);
                }
            }
        };
        let depth = r.varint("node depth")? as usize;
        let children = r.u8("child count")?;
        if children != 0 && children != 2 {
            return Err(r.err(format!("node {id} has {children} children")));
        }
        let restricted = r.sorted_set(d, "restricted set")?;
        let mut center = Vec::with_capacity(words);
        for _ in 0..words {
            center.push(r.u64("center")?);
        }
        if words_for(d) > 0 && d % 64 != 0 && center[words - 1] >> (d % 64) != 0 {
            return Err(r.err("center has bits set past d"));
        }
        let members = if with_members {
            r.sorted_set(n_points, "member set")?
        } else {
            Vec::new()
        };
        let cube = Subcube::new(BitVector::from_words(d, center), restricted)?;
        let local_restricted = match parent {
            None => cube.restricted().to_vec(),
            Some(p) => {
                let pc: &Subcube = &nodes[p].cube;
                cube.restricted()
                    .iter()
                    .copied()
                    .filter(|&s| !pc.is_restricted(s))
                    .collect()
            }
        };
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        nodes.push(CubeNode {
            id,
            depth,
            parent,
            children: Vec::new(),
            cube,
            local_restricted,
            members,
        });
        if children > 0 {
            open.push((id, children));
        }
    }
    if open.iter().any(|&(_, left)| left > 0) {
        return Err(r.err("node list ends before every child was read"));
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after the last node"));
    }
    CubeTree::from_nodes(d, config, nodes, if with_members { n_points } else { 0 })
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    depth: usize,
    parent: Option<usize>,
    children: &'a [usize],
    dim: usize,
    restricted: &'a [usize],
    local_restricted: &'a [usize],
    /// One character per coordinate: '+' / '-' restricted, '.' free.
    pattern: String,
    member_count: usize,
}

#[derive(Serialize)]
struct JsonTree<'a> {
    format: &'static str,
    version: u16,
    d: usize,
    n_points: usize,
    config: &'a TrainConfig,
    leaves: &'a [usize],
    nodes: Vec<JsonNode<'a>>,
}

/// Debug view of a tree as a JSON value.
pub fn to_json(tree: &CubeTree) -> serde_json::Value {
    let nodes = tree
        .nodes
        .iter()
        .map(|n| JsonNode {
            id: n.id,
            depth: n.depth,
            parent: n.parent,
            children: &n.children,
            dim: n.cube.dim(),
            restricted: n.cube.restricted(),
            local_restricted: &n.local_restricted,
            pattern: (0..tree.d)
                .map(
                    |s| match (n.cube.is_restricted(s), n.cube.center().get(s)) {
                        (false, _) => '.',
                        (true, true) => '+',
                        (true, false) => '-',
                    },
                )
                .collect(),
            member_count: n.members.len(),
        })
        .collect();
    serde_json::to_value(JsonTree {
        format: "cubetree-json",
        version: FORMAT_VERSION,
        d: tree.d,
        n_points: tree.n_points,
        config: &tree.config,
        leaves: &tree.leaves,
        nodes,
    })
    .expect("tree serializes to JSON")
}

pub fn write_json(tree: &CubeTree, sink: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(sink, &to_json(tree))?;
    Ok(())
}
