//! Index file serialization.
//!
//! Layout: magic `TEMB`, format version, the flat config block, build inputs
//! (ε, seed), the terminal set, the certified sketch, and the partition tree
//! in preorder with explicit child offsets. Everything else (projections,
//! ladders, hashing pools, the ensemble) re-derives deterministically from
//! those, so loading rebuilds a structure that answers every query exactly
//! like the original. A CRC64 trailer covers all preceding bytes.

use crate::config::Params;
use crate::dataio::{read_exact_buf, read_f64, read_u32, read_u64, DataIoError};
use crate::embed::{MultiScale, TermLadder, TerminalIndex};
use crate::geom::{norm2, Partition, PointSet};
use crate::rng::{self, LBL_MULTISCALE};
use crate::sketch::Sketch;
use crate::tree::{PartitionTree, TreeNode};
use crate::{ann, config, embed, medjl};
use std::io::{self, Read, Write};
use thiserror::Error;

pub const INDEX_MAGIC: &[u8; 4] = b"TEMB";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Data(#[from] DataIoError),
    #[error("bad index magic")]
    BadMagic,
    #[error("unsupported index version {0}")]
    BadVersion(u32),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("config block: {0}")]
    Config(#[from] config::ConfigError),
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error("rebuild failed: {0}")]
    Rebuild(String),
}

// CRC-64/ECMA-182, table-driven.
const CRC64_POLY: u64 = 0x42F0_E1EB_A9EA_3693;

fn crc64_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u64) << 56;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & (1 << 63) != 0 { (crc << 1) ^ CRC64_POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc64(data: &[u8]) -> u64 {
    let table = crc64_table();
    let mut crc = 0u64;
    for &b in data {
        crc = table[(((crc >> 56) as u8) ^ b) as usize] ^ (crc << 8);
    }
    crc
}

struct Counter<W: Write> {
    inner: W,
    buf: Vec<u8>,
}

impl<W: Write> Counter<W> {
    fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn put_bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
    fn put_ids(&mut self, ids: &[u32]) {
        self.put_u64(ids.len() as u64);
        for &i in ids {
            self.put_u64(i as u64);
        }
    }
    fn put_partition(&mut self, p: &Partition) {
        self.put_u64(p.ground_size() as u64);
        self.put_u64(p.num_blocks() as u64);
        for b in p.blocks() {
            self.put_ids(b);
        }
    }
    fn finish(mut self) -> Result<(), IndexIoError> {
        let crc = crc64(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.inner.write_all(&self.buf)?;
        Ok(())
    }
}

/// Serializes the index. Byte-deterministic for a fixed build.
pub fn write_index<W: Write>(w: W, ix: &TerminalIndex) -> Result<(), IndexIoError> {
    let mut c = Counter { inner: w, buf: Vec::new() };
    c.put_bytes(INDEX_MAGIC);
    c.put_u32(INDEX_VERSION);

    let cfg = ix.params.to_config_string();
    c.put_u64(cfg.len() as u64);
    c.put_bytes(cfg.as_bytes());
    c.put_f64(ix.eps);
    c.put_f64(ix.eps_cert);
    c.put_u64(ix.seed);

    // terminal set (original, duplicates included)
    c.put_u64(ix.points.n() as u64);
    c.put_u64(ix.points.d() as u64);
    for v in ix.points.as_slice() {
        c.put_f64(*v);
    }

    // sketch: identity flag, dims, seed, then the matrix unless identity
    c.put_u32(ix.sketch.is_identity() as u32);
    c.put_u64(ix.sketch.k() as u64);
    c.put_u64(ix.sketch.d() as u64);
    c.put_u64(ix.sketch.seed());
    if !ix.sketch.is_identity() {
        for v in ix.sketch.matrix() {
            c.put_f64(*v);
        }
    }

    // the arena is already in canonical preorder; write it verbatim
    c.put_u64(ix.tree.nodes.len() as u64);
    c.put_u64(ix.tree.root as u64);
    c.put_u64(ix.tree.total_size as u64);
    c.put_u64(ix.tree.build_seed);
    c.put_f64(ix.tree.delta);
    c.put_u64(ix.tree.n as u64);
    for node in &ix.tree.nodes {
        c.put_ids(&node.points);
        c.put_f64(node.r_apx);
        c.put_partition(&node.c_low);
        c.put_partition(&node.c_high);
        c.put_ids(&node.c_rep);
        c.put_ids(&node.children_low);
        c.put_u64(node.child_rep.map_or(u64::MAX, |ch| ch as u64));
    }

    c.finish()
}

fn get_ids<R: Read>(r: &mut R) -> Result<Vec<u32>, IndexIoError> {
    let len = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_u64(r)? as u32);
    }
    Ok(out)
}

fn get_partition<R: Read>(r: &mut R) -> Result<Partition, IndexIoError> {
    let ground = read_u64(r)? as usize;
    let blocks = read_u64(r)? as usize;
    let mut bs = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        bs.push(get_ids(r)?);
    }
    Partition::from_blocks(bs, ground)
        .map_err(|e| IndexIoError::Malformed(format!("partition: {e}")))
}

/// Deserializes and rebuilds an index.
pub fn read_index<R: Read>(mut r: R) -> Result<TerminalIndex, IndexIoError> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    if all.len() < 8 {
        return Err(IndexIoError::Malformed("file too short".into()));
    }
    let (body, tail) = all.split_at(all.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = crc64(body);
    if stored != computed {
        return Err(IndexIoError::ChecksumMismatch { stored, computed });
    }
    let mut r = body;
    let magic = read_exact_buf(&mut r, 4)?;
    if magic != INDEX_MAGIC {
        return Err(IndexIoError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != INDEX_VERSION {
        return Err(IndexIoError::BadVersion(version));
    }
    let cfg_len = read_u64(&mut r)? as usize;
    let cfg_text = String::from_utf8(read_exact_buf(&mut r, cfg_len)?)
        .map_err(|e| IndexIoError::Malformed(format!("config utf8: {e}")))?;
    let params = Params::from_config_string(&cfg_text)?;
    let eps = read_f64(&mut r)?;
    let eps_cert = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;

    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(read_f64(&mut r)?);
    }
    let points = PointSet::new(data, d)
        .map_err(|e| IndexIoError::Malformed(format!("points: {e}")))?;

    let identity = read_u32(&mut r)? != 0;
    let sk_k = read_u64(&mut r)? as usize;
    let sk_d = read_u64(&mut r)? as usize;
    let _sk_seed = read_u64(&mut r)?;
    let sketch = if identity {
        if sk_k != sk_d {
            return Err(IndexIoError::Malformed("identity sketch must be square".into()));
        }
        Sketch::identity(sk_d)
    } else {
        let mut mat = Vec::with_capacity(sk_k * sk_d);
        for _ in 0..sk_k * sk_d {
            mat.push(read_f64(&mut r)?);
        }
        Sketch::from_matrix(mat, sk_k, sk_d)
    };

    let node_count = read_u64(&mut r)? as usize;
    let root = read_u64(&mut r)? as u32;
    let total_size = read_u64(&mut r)? as usize;
    let build_seed = read_u64(&mut r)?;
    let delta = read_f64(&mut r)?;
    let tree_n = read_u64(&mut r)? as usize;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let pts = get_ids(&mut r)?;
        let r_apx = read_f64(&mut r)?;
        let c_low = get_partition(&mut r)?;
        let c_high = get_partition(&mut r)?;
        let c_rep = get_ids(&mut r)?;
        let children_low = get_ids(&mut r)?;
        let rep_raw = read_u64(&mut r)?;
        nodes.push(TreeNode {
            points: pts,
            children_low,
            child_rep: (rep_raw != u64::MAX).then_some(rep_raw as u32),
            c_low,
            c_high,
            c_rep,
            r_apx,
        });
    }
    let tree = PartitionTree { nodes, root, total_size, build_seed, delta, n: tree_n };

    rebuild(points, sketch, tree, params, eps, eps_cert, seed)
        .map_err(|e| IndexIoError::Rebuild(e.to_string()))
}

/// Re-derives every structure the file omits; mirrors `embed::build` after
/// the tree/sketch stage.
fn rebuild(
    points: PointSet,
    sketch: Sketch,
    tree: PartitionTree,
    params: Params,
    eps: f64,
    eps_cert: f64,
    seed: u64,
) -> Result<TerminalIndex, embed::EmbedError> {
    let (unique, kept, remap) = points.dedup();
    let proj = sketch.project_all(&unique);
    let k = sketch.k();
    let n_u = unique.n();
    let xnorm2: Vec<f64> = (0..n_u).map(|i| norm2(unique.point(i))).collect();
    let pnorm2: Vec<f64> = (0..n_u).map(|i| norm2(&proj[i * k..(i + 1) * k])).collect();
    let aann = ann::build_aann(&tree, &unique, &params, rng::derive(seed, &[rng::LBL_AANN]))?;

    let nd = (tree.n.max(2) as f64) * (unique.d() as f64);
    let span_term = nd.powf(params.beta_term);
    let per_node: Vec<TermLadder> = tree
        .nodes
        .iter()
        .map(|node| {
            if node.is_leaf() {
                TermLadder { r_low: 0.0, p: 0 }
            } else {
                let r_low = node.r_apx / span_term;
                let r_high = node.r_apx * span_term;
                TermLadder { r_low, p: Params::ladder_levels(r_low, r_high, params.gamma) }
            }
        })
        .collect();
    let ms_seed = rng::derive(seed, &[LBL_MULTISCALE]);
    let (lift, ap_pool) = match params.backend {
        config::Backend::Trivial => (None, None),
        config::Backend::Lsh => (
            Some(embed::build_lift_pools_pub(&unique, &proj, k, &params, ms_seed)),
            Some(embed::build_ap_pool(&unique, &params, ms_seed)),
        ),
    };
    let ms = MultiScale { per_node, seed: ms_seed, lift, ap_pool };

    let ensemble = if params.medjl_enabled {
        let dd = unique.d() as f64;
        let nf = n_u.max(2) as f64;
        let m = (params.medjl_m_cap as usize)
            .min((4.0 * (dd + 10.0) * (nf * dd).ln()).ceil() as usize)
            .max(1);
        let k_rows = (params.medjl_ck * nf.ln() * nf.ln().ln().max(1.0)).ceil().max(2.0) as usize;
        Some(medjl::build_ensemble(
            &unique,
            m,
            k_rows,
            eps,
            rng::derive(seed, &[rng::LBL_ENSEMBLE]),
            params.medjl_cf,
        )?)
    } else {
        None
    };

    Ok(TerminalIndex {
        points,
        unique,
        kept,
        remap,
        tree,
        sketch,
        proj,
        xnorm2,
        pnorm2,
        aann,
        ms,
        ensemble,
        params,
        eps,
        eps_cert,
        seed,
    })
}

pub fn write_index_path(path: &std::path::Path, ix: &TerminalIndex) -> Result<(), IndexIoError> {
    let f = std::fs::File::create(path)?;
    write_index(io::BufWriter::new(f), ix)
}

pub fn read_index_path(path: &std::path::Path) -> Result<TerminalIndex, IndexIoError> {
    let f = std::fs::File::open(path)?;
    read_index(io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::gaussian_mixture;
    use crate::rng;

    #[test]
    fn crc64_known_vector() {
        // crc64/ecma-182 of "123456789"
        assert_eq!(crc64(b"123456789"), 0x6c40_df5f_0b49_7347);
    }

    #[test]
    fn index_round_trip_identical_bytes_and_answers() {
        let pts = gaussian_mixture(48, 4, 4, 10.0, 33);
        let ix = embed::build(pts, 0.2, Params::default(), 33).unwrap();
        let mut bytes = Vec::new();
        write_index(&mut bytes, &ix).unwrap();
        let ix2 = read_index(&bytes[..]).unwrap();
        let mut bytes2 = Vec::new();
        write_index(&mut bytes2, &ix2).unwrap();
        assert_eq!(bytes, bytes2, "re-serialization must be byte-identical");
        // identical answers under the same per-query seed
        let mut r = rng::stream(34, &[1]);
        use rand::Rng as _;
        for t in 0..20 {
            let q: Vec<f64> = (0..4).map(|_| r.random_range(-20.0..20.0)).collect();
            let a = ix.embed(&q, t).unwrap();
            let b = ix2.embed(&q, t).unwrap();
            assert_eq!(a.z, b.z);
            assert_eq!(a.probes, b.probes);
            assert_eq!(a.iterations, b.iterations);
        }
    }

    #[test]
    fn corruption_detected() {
        let pts = gaussian_mixture(16, 3, 2, 8.0, 35);
        let ix = embed::build(pts, 0.2, Params::default(), 35).unwrap();
        let mut bytes = Vec::new();
        write_index(&mut bytes, &ix).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(read_index(&bytes[..]), Err(IndexIoError::ChecksumMismatch { .. })));
    }
}
