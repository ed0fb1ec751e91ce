//! Approximate partitioning, near-neighbor backends, and the adaptive
//! nearest-neighbor walk over the partition tree.
//!
//! Two backends exist everywhere: `trivial`/brute reference implementations
//! (exhaustive, always correct, no probe savings) and a hashing backend
//! built from offset-parity projection bits: bit_j(x) = ⌊⟨g_j, x⟩/(w·r) +
//! u_j⌋ mod 2 with g_j Gaussian and u_j uniform. Points within r of each
//! other flip a bit with probability ≈ 0.8·dist/(w·r), points much farther
//! than w·r collide like coin flips, so t-bit table keys separate scales.
//!
//! Every candidate any structure returns is distance-certified before use;
//! hashing randomness can only cost recall, never correctness.

use crate::config::{Backend, Params};
use crate::geom::{dist, PointSet};
use crate::rng::{self, LBL_AANN, LBL_AP, LBL_POOL};
use crate::tree::PartitionTree;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("tradeoff out of range: c = {c}, rho_u = {rho_u}")]
    TradeoffOutOfRange { c: f64, rho_u: f64 },
    #[error("grid resolution must be positive, got {0}")]
    BadGridResolution(f64),
    #[error("resource cap exceeded at node {node}: {refs} stored references > cap {cap}")]
    ResourceCapExceeded { node: u32, refs: usize, cap: usize },
}

/// Solves c²√ρ_c + (c²−1)√ρ_u = √(2c²−1) for ρ_c.
pub fn lsh_tradeoff(c: f64, rho_u: f64) -> Result<f64, AnnError> {
    if !(c > 1.0) || !(rho_u >= 0.0) {
        return Err(AnnError::TradeoffOutOfRange { c, rho_u });
    }
    let c2 = c * c;
    let bracket = (2.0 * c2 - 1.0).sqrt() - (c2 - 1.0) * rho_u.sqrt();
    if bracket < 0.0 {
        return Err(AnnError::TradeoffOutOfRange { c, rho_u });
    }
    Ok((bracket / c2).powi(2))
}

/// Coordinatewise floor snap onto the grid νZ^d; ‖q̃ − q‖ ≤ √d·ν.
pub fn snap_to_grid(q: &[f64], nu: f64) -> Result<Vec<f64>, AnnError> {
    if !(nu > 0.0) {
        return Err(AnnError::BadGridResolution(nu));
    }
    Ok(q.iter().map(|&c| (c / nu).floor() * nu).collect())
}

// ---------------------------------------------------------------------------
// hashing primitives
// ---------------------------------------------------------------------------

/// A pool of Gaussian directions shared by all tables of one structure
/// family, plus per-point projection values.
#[derive(Debug, Clone)]
pub struct ProjectionPool {
    /// J×d directions, row-major.
    pub dirs: Vec<f64>,
    pub j_total: usize,
    pub d: usize,
    /// n×J projection values ⟨g_j, x⟩ (f32; certification never reads these).
    pub values: Vec<f32>,
}

impl ProjectionPool {
    pub fn sample(d: usize, j_total: usize, seed: u64) -> ProjectionPool {
        let mut r = rng::stream(seed, &[LBL_POOL]);
        let dirs = (0..j_total * d).map(|_| StandardNormal.sample(&mut r)).collect();
        ProjectionPool { dirs, j_total, d, values: Vec::new() }
    }

    pub fn with_points(mut self, x: &PointSet) -> ProjectionPool {
        use rayon::prelude::*;
        let j = self.j_total;
        let mut values = vec![0.0f32; x.n() * j];
        values
            .par_chunks_mut(j)
            .zip((0..x.n()).into_par_iter())
            .for_each(|(row, i)| {
                let p = x.point(i);
                for (jj, v) in row.iter_mut().enumerate() {
                    *v = crate::geom::dot(self.dir(jj), p) as f32;
                }
            });
        self.values = values;
        self
    }

    #[inline]
    pub fn dir(&self, j: usize) -> &[f64] {
        &self.dirs[j * self.d..(j + 1) * self.d]
    }
    #[inline]
    pub fn value(&self, point: usize, j: usize) -> f64 {
        self.values[point * self.j_total + j] as f64
    }
    pub fn project(&self, j: usize, q: &[f64]) -> f64 {
        crate::geom::dot(self.dir(j), q)
    }
}

/// One offset-parity bit.
#[inline]
pub fn parity_bit(proj: f64, width: f64, offset: f64) -> u32 {
    ((proj / width + offset).floor() as i64 & 1) as u32
}

/// Packs `bits` parity bits from the pool values of a stored point.
#[inline]
fn point_sig(
    pool: &ProjectionPool,
    point: usize,
    j0: usize,
    bits: usize,
    width: f64,
    offsets: &[f64],
) -> u32 {
    let mut sig = 0u32;
    for b in 0..bits {
        sig = (sig << 1) | parity_bit(pool.value(point, j0 + b), width, offsets[b]);
    }
    sig
}

fn query_sig(
    pool: &ProjectionPool,
    q: &[f64],
    j0: usize,
    bits: usize,
    width: f64,
    offsets: &[f64],
) -> u32 {
    let mut sig = 0u32;
    for b in 0..bits {
        sig = (sig << 1) | parity_bit(pool.project(j0 + b, q), width, offsets[b]);
    }
    sig
}

pub(crate) fn table_bits(n: usize) -> usize {
    (n.max(2) as f64).log2().ceil().clamp(1.0, 24.0) as usize
}

pub(crate) fn offsets_for(seed: u64, labels: &[u64], bits: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, labels);
    (0..bits).map(|_| r.random::<f64>()).collect()
}

/// A signature table sorted by signature, for O(log n) bucket lookup.
#[derive(Debug, Clone)]
struct SigTable {
    sigs: Vec<u32>,
    ids: Vec<u32>, // local indices, aligned with sigs
}

impl SigTable {
    fn build(mut pairs: Vec<(u32, u32)>) -> SigTable {
        pairs.sort_unstable();
        SigTable {
            sigs: pairs.iter().map(|p| p.0).collect(),
            ids: pairs.iter().map(|p| p.1).collect(),
        }
    }

    fn bucket(&self, sig: u32) -> &[u32] {
        let lo = self.sigs.partition_point(|&s| s < sig);
        let hi = self.sigs.partition_point(|&s| s <= sig);
        &self.ids[lo..hi]
    }
}

// ---------------------------------------------------------------------------
// approximate partitioning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ApParams {
    pub tables: usize,
    pub bits: usize,
    pub width: f64,
    /// Max sets h(x) may return (truncation).
    pub probe_cap: usize,
    /// Max total stored references Σ|S_i| (truncation).
    pub space_cap: usize,
}

impl ApParams {
    pub fn for_size(n: usize, params: &Params) -> ApParams {
        ApParams {
            tables: params.ap_tables as usize,
            bits: table_bits(n),
            width: params.ap_width,
            probe_cap: 4 * params.ap_tables as usize,
            space_cap: 32 * n.max(1),
        }
    }
}

/// Materialized approximate-partitioning structure: sets S_1..S_m plus a
/// hash mapping points to set ids.
#[derive(Debug, Clone)]
pub struct ApStructure {
    pub backend: Backend,
    /// The sets, as local indices into the build point list.
    pub sets: Vec<Vec<u32>>,
    params: ApParams,
    r: f64,
    pool: Option<ProjectionPool>,
    /// Per table: sorted (sig → set id) pairs.
    tables: Vec<Vec<(u32, u32)>>,
    offsets: Vec<Vec<f64>>,
    #[allow(dead_code)]
    n: usize,
}

/// Builds an AP structure over `points` at radius `r`.
pub fn build_ap(
    points: &PointSet,
    r: f64,
    backend: Backend,
    params: ApParams,
    seed: u64,
) -> ApStructure {
    assert!(r > 0.0);
    let n = points.n();
    match backend {
        Backend::Trivial => ApStructure {
            backend,
            sets: vec![(0..n as u32).collect()],
            params,
            r,
            pool: None,
            tables: Vec::new(),
            offsets: Vec::new(),
            n,
        },
        Backend::Lsh => {
            let j_total = params.tables * params.bits;
            let pool = ProjectionPool::sample(points.d(), j_total, rng::derive(seed, &[LBL_AP]))
                .with_points(points);
            let mut sets: Vec<Vec<u32>> = Vec::new();
            let mut tables = Vec::with_capacity(params.tables);
            let mut offsets = Vec::with_capacity(params.tables);
            let width = params.width * r;
            let mut stored = 0usize;
            for t in 0..params.tables {
                let offs = offsets_for(seed, &[LBL_AP, 1, t as u64], params.bits);
                let mut buckets: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
                for i in 0..n {
                    let sig = point_sig(&pool, i, t * params.bits, params.bits, width, &offs);
                    buckets.entry(sig).or_default().push(i as u32);
                }
                let mut table = Vec::with_capacity(buckets.len());
                for (sig, members) in buckets {
                    if stored + members.len() > params.space_cap {
                        break; // space cap: drop the remaining buckets of this and later tables
                    }
                    stored += members.len();
                    table.push((sig, sets.len() as u32));
                    sets.push(members);
                }
                tables.push(table);
                offsets.push(offs);
            }
            ApStructure { backend, sets, params, r, pool: Some(pool), tables, offsets, n }
        }
    }
}

impl ApStructure {
    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn stored_references(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    /// Set ids for a query point, at most `probe_cap` of them.
    pub fn h(&self, x: &[f64]) -> Vec<u32> {
        match self.backend {
            Backend::Trivial => vec![0],
            Backend::Lsh => {
                let pool = self.pool.as_ref().expect("lsh pool");
                let width = self.params.width * self.r;
                let mut out = Vec::new();
                for (t, table) in self.tables.iter().enumerate() {
                    if out.len() >= self.params.probe_cap {
                        break;
                    }
                    let sig =
                        query_sig(pool, x, t * self.params.bits, self.params.bits, width, &self.offsets[t]);
                    if let Ok(pos) = table.binary_search_by_key(&sig, |e| e.0) {
                        out.push(table[pos].1);
                    }
                }
                out
            }
        }
    }

    pub fn set(&self, id: u32) -> &[u32] {
        &self.sets[id as usize]
    }
}

// ---------------------------------------------------------------------------
// approximate near neighbor at a fixed radius
// ---------------------------------------------------------------------------

/// Near-neighbor structure at radius r: must return some point within c·r
/// whenever a point within r exists (hashing backend: with good probability);
/// never returns a point farther than c·r.
#[derive(Debug, Clone)]
pub struct AnnStructure {
    pub backend: Backend,
    pub r: f64,
    pub c: f64,
    pub probe_cap: usize,
    data: PointSet,
    tables: Vec<SigTable>,
    offsets: Vec<Vec<f64>>,
    pool: Option<ProjectionPool>,
    bits: usize,
}

pub fn build_ann(
    points: &PointSet,
    r: f64,
    c: f64,
    backend: Backend,
    seed: u64,
) -> AnnStructure {
    assert!(r > 0.0 && c > 1.0);
    let n = points.n();
    let bits = table_bits(n);
    let (pool, tables, offsets) = match backend {
        Backend::Trivial => (None, Vec::new(), Vec::new()),
        Backend::Lsh => {
            let l = 8usize;
            let pool = ProjectionPool::sample(points.d(), l * bits, rng::derive(seed, &[LBL_AANN]))
                .with_points(points);
            let width = 6.0 * r;
            let mut tables = Vec::with_capacity(l);
            let mut offsets = Vec::with_capacity(l);
            for t in 0..l {
                let offs = offsets_for(seed, &[LBL_AANN, 2, t as u64], bits);
                let pairs = (0..n as u32)
                    .map(|i| (point_sig(&pool, i as usize, t * bits, bits, width, &offs), i))
                    .collect();
                tables.push(SigTable::build(pairs));
                offsets.push(offs);
            }
            (Some(pool), tables, offsets)
        }
    };
    AnnStructure {
        backend,
        r,
        c,
        probe_cap: 64 * tables.len().max(8),
        data: points.clone(),
        tables,
        offsets,
        pool,
        bits,
    }
}

impl AnnStructure {
    /// Certified query: Some((local index, distance)) with distance ≤ c·r,
    /// or None. `probes` counts candidate distance evaluations.
    pub fn query(&self, q: &[f64], probes: &mut u64) -> Option<(u32, f64)> {
        let cr = self.c * self.r;
        match self.backend {
            Backend::Trivial => {
                let mut best = (u32::MAX, f64::INFINITY);
                for i in 0..self.data.n() {
                    *probes += 1;
                    let d = dist(self.data.point(i), q);
                    if d < best.1 {
                        best = (i as u32, d);
                    }
                }
                (best.1 <= cr).then_some(best)
            }
            Backend::Lsh => {
                let pool = self.pool.as_ref().expect("lsh pool");
                let width = 6.0 * self.r;
                let mut best = (u32::MAX, f64::INFINITY);
                let mut seen = 0usize;
                for (t, table) in self.tables.iter().enumerate() {
                    let sig = query_sig(pool, q, t * self.bits, self.bits, width, &self.offsets[t]);
                    for &i in table.bucket(sig) {
                        if seen >= self.probe_cap {
                            break;
                        }
                        seen += 1;
                        *probes += 1;
                        let d = dist(self.data.point(i as usize), q);
                        if d < best.1 {
                            best = (i, d);
                        }
                    }
                }
                (best.1 <= cr).then_some(best)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// adaptive nearest neighbor over the partition tree
// ---------------------------------------------------------------------------

/// Per-node ladder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderParams {
    pub r_low: f64,
    pub r_high: f64,
    /// l: ladder covers scales (1+γ)^0..(1+γ)^levels times r_low.
    pub levels: u32,
    /// s: independent retrieval copies per scale.
    pub copies: u32,
    /// Grid snap resolution for this node.
    pub nu: f64,
}

impl LadderParams {
    #[inline]
    pub fn radius(&self, i: u32, gamma: f64) -> f64 {
        self.r_low * (1.0 + gamma).powi(i as i32)
    }
}

/// Hashing state for the walk: one set of tables per (node, copy), keyed at
/// the node's own scale; scale selectivity comes from the certification
/// radius, not from re-hashing per rung.
#[derive(Debug, Clone)]
pub struct AannLsh {
    pub pool: ProjectionPool,
    /// [node][copy·L + table]
    node_tables: Vec<Vec<SigTable>>,
    /// [node][copy·L + table] bit offsets
    node_offsets: Vec<Vec<Vec<f64>>>,
    /// per node: signature width (w·r_apx) and bit count
    node_width: Vec<f64>,
    node_bits: Vec<usize>,
    tables: usize,
}

#[derive(Debug, Clone)]
pub struct AannIndex {
    pub backend: Backend,
    pub c: f64,
    pub gamma: f64,
    pub seed: u64,
    pub ladders: Vec<LadderParams>,
    pub lsh: Option<AannLsh>,
    /// Total stored point references, for the resource cap.
    pub stored_refs: usize,
}

/// Where the walk stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleHit {
    /// Single-point node answered directly.
    Leaf,
    /// Ladder rung 0 < i* ≤ l that certified the returned point.
    Scale(u32),
}

#[derive(Debug, Clone)]
pub struct AannAnswer {
    /// Global id of the returned point.
    pub point: u32,
    /// Tree node the walk stopped in.
    pub node: u32,
    pub scale_hit: ScaleHit,
    /// True distance ‖q − x̂‖ (not the snapped query).
    pub dist: f64,
    /// Nodes visited by the walk.
    pub visited: u32,
}

/// Builds the per-node ladders (and hashing tables for the lsh backend).
pub fn build_aann(
    tree: &PartitionTree,
    points: &PointSet,
    params: &Params,
    seed: u64,
) -> Result<AannIndex, AnnError> {
    let n = tree.n.max(2) as f64;
    let d = points.d() as f64;
    let nd = n * d;
    let span = params.c_range * nd.powf(params.alpha);
    let copies = params.ladder_copies(tree.n);
    let refs_cap =
        (params.refs_cap_mult * n * (n.log2().max(1.0)).powi(2)).ceil() as usize;

    let mut ladders = Vec::with_capacity(tree.nodes.len());
    let mut stored_refs = 0usize;
    for (id, node) in tree.nodes.iter().enumerate() {
        if node.is_leaf() {
            ladders.push(LadderParams { r_low: 0.0, r_high: 0.0, levels: 0, copies: 0, nu: 0.0 });
            stored_refs += 1;
            continue;
        }
        let r_low = node.r_apx / span;
        let r_high = node.r_apx * span;
        let levels = Params::ladder_levels(r_low, r_high, params.gamma);
        let nu = params.gamma * r_low / (1000.0 * nd.powf(params.beta));
        ladders.push(LadderParams { r_low, r_high, levels, copies, nu });
        let per_copy = match params.backend {
            Backend::Trivial => node.points.len(),
            Backend::Lsh => node.points.len() * params.ann_tables as usize,
        };
        stored_refs += per_copy * copies as usize;
        if stored_refs > refs_cap {
            return Err(AnnError::ResourceCapExceeded {
                node: id as u32,
                refs: stored_refs,
                cap: refs_cap,
            });
        }
    }

    let lsh = match params.backend {
        Backend::Trivial => None,
        Backend::Lsh => {
            let l = params.ann_tables as usize;
            let t_max = table_bits(tree.n);
            let j_total = copies as usize * l * t_max;
            let pool = ProjectionPool::sample(points.d(), j_total, rng::derive(seed, &[LBL_AANN]))
                .with_points(points);
            let mut node_tables = Vec::with_capacity(tree.nodes.len());
            let mut node_offsets = Vec::with_capacity(tree.nodes.len());
            let mut node_width = Vec::with_capacity(tree.nodes.len());
            let mut node_bits = Vec::with_capacity(tree.nodes.len());
            for (id, node) in tree.nodes.iter().enumerate() {
                if node.is_leaf() {
                    node_tables.push(Vec::new());
                    node_offsets.push(Vec::new());
                    node_width.push(0.0);
                    node_bits.push(0);
                    continue;
                }
                let bits = table_bits(node.points.len());
                let width = 6.0 * node.r_apx;
                let mut tabs = Vec::with_capacity(copies as usize * l);
                let mut offs_all = Vec::with_capacity(copies as usize * l);
                for copy in 0..copies as usize {
                    for t in 0..l {
                        let offs =
                            offsets_for(seed, &[LBL_AANN, id as u64, copy as u64, t as u64], bits);
                        let j0 = (copy * l + t) * t_max;
                        let pairs = node
                            .points
                            .iter()
                            .enumerate()
                            .map(|(local, &g)| {
                                (point_sig(&pool, g as usize, j0, bits, width, &offs), local as u32)
                            })
                            .collect();
                        tabs.push(SigTable::build(pairs));
                        offs_all.push(offs);
                    }
                }
                node_tables.push(tabs);
                node_offsets.push(offs_all);
                node_width.push(width);
                node_bits.push(bits);
            }
            Some(AannLsh { pool, node_tables, node_offsets, node_width, node_bits, tables: l })
        }
    };

    Ok(AannIndex { backend: params.backend, c: params.c_ann, gamma: params.gamma, seed, ladders, lsh, stored_refs })
}

/// Per-copy retrieval state for one node visit: each copy resolves its best
/// certified candidate once; rung queries then compare that distance to the
/// rung radius. For the brute backend this is exactly the exhaustive scan
/// each rung would repeat.
pub(crate) struct NodeProbe<'a> {
    index: &'a AannIndex,
    points: &'a PointSet,
    node: u32,
    node_points: &'a [u32],
    q_snap: Vec<f64>,
    best: Vec<Option<Option<(u32, f64)>>>, // [copy] -> resolved best (global id, dist to q̃)
}

impl<'a> NodeProbe<'a> {
    pub(crate) fn new(
        index: &'a AannIndex,
        tree: &'a PartitionTree,
        points: &'a PointSet,
        node: u32,
        q_snap: Vec<f64>,
    ) -> NodeProbe<'a> {
        let copies = index.ladders[node as usize].copies as usize;
        NodeProbe {
            index,
            points,
            node,
            node_points: &tree.node(node).points,
            q_snap,
            best: vec![None; copies.max(1)],
        }
    }

    fn resolve(&mut self, copy: usize, probes: &mut u64) -> Option<(u32, f64)> {
        if let Some(b) = &self.best[copy] {
            return *b;
        }
        let resolved = match self.index.backend {
            Backend::Trivial => {
                let mut best: Option<(u32, f64)> = None;
                for &g in self.node_points {
                    *probes += 1;
                    let d = dist(self.points.point(g as usize), &self.q_snap);
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((g, d));
                    }
                }
                best
            }
            Backend::Lsh => {
                let lsh = self.index.lsh.as_ref().expect("lsh state");
                let l = lsh.tables;
                let bits = lsh.node_bits[self.node as usize];
                let width = lsh.node_width[self.node as usize];
                let t_stride = lsh.pool.j_total / (self.best.len().max(1) * l);
                let mut best: Option<(u32, f64)> = None;
                let mut seen = 0usize;
                let cap = 64 * l;
                for t in 0..l {
                    let slot = copy * l + t;
                    let j0 = slot * t_stride;
                    let offs = &lsh.node_offsets[self.node as usize][slot];
                    let sig = query_sig(&lsh.pool, &self.q_snap, j0, bits, width, offs);
                    for &local in lsh.node_tables[self.node as usize][slot].bucket(sig) {
                        if seen >= cap {
                            break;
                        }
                        seen += 1;
                        *probes += 1;
                        let g = self.node_points[local as usize];
                        let d = dist(self.points.point(g as usize), &self.q_snap);
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((g, d));
                        }
                    }
                }
                best
            }
        };
        self.best[copy] = Some(resolved);
        resolved
    }

    /// Queries one rung: copies are tried in random order; the first whose
    /// certified candidate lies within c·r_i wins; a rung fails only when
    /// all copies fail.
    pub(crate) fn query_scale(
        &mut self,
        i: u32,
        rng: &mut ChaCha8Rng,
        probes: &mut u64,
    ) -> Option<(u32, f64)> {
        let ladder = &self.index.ladders[self.node as usize];
        let cr = self.index.c * ladder.radius(i, self.index.gamma);
        let mut order: Vec<usize> = (0..self.best.len()).collect();
        order.shuffle(rng);
        for copy in order {
            if let Some((g, d)) = self.resolve(copy, probes) {
                if d <= cr {
                    return Some((g, d));
                }
            }
        }
        None
    }
}

/// Walks the tree from the root: at each node, snap the query, scan the
/// ladder rungs ascending, and either stop (middle rung certified), descend
/// into the fine block of a rung-0 hit, or descend into the representative
/// child when every rung fails.
pub fn query_aann(
    index: &AannIndex,
    tree: &PartitionTree,
    points: &PointSet,
    q: &[f64],
    rng: &mut ChaCha8Rng,
    probes: &mut u64,
) -> AannAnswer {
    let mut node = tree.root;
    let mut visited = 0u32;
    loop {
        visited += 1;
        let tn = tree.node(node);
        if tn.is_leaf() {
            let g = tn.points[0];
            return AannAnswer {
                point: g,
                node,
                scale_hit: ScaleHit::Leaf,
                dist: dist(points.point(g as usize), q),
                visited,
            };
        }
        let ladder = &index.ladders[node as usize];
        let q_snap = snap_to_grid(q, ladder.nu).expect("positive grid resolution");
        let mut probe = NodeProbe::new(index, tree, points, node, q_snap);
        let mut hit: Option<(u32, u32, f64)> = None; // (rung, id, dist)
        for i in 0..=ladder.levels {
            if let Some((g, d)) = probe.query_scale(i, rng, probes) {
                hit = Some((i, g, d));
                break;
            }
        }
        match hit {
            Some((0, g, _)) => {
                // descend into the fine block holding the certified point
                let local = tn.points.binary_search(&g).expect("member of node");
                let block = tn.c_low.block_of(local as u32);
                node = tn.children_low[block as usize];
            }
            Some((i, g, _)) => {
                return AannAnswer {
                    point: g,
                    node,
                    scale_hit: ScaleHit::Scale(i),
                    dist: dist(points.point(g as usize), q),
                    visited,
                };
            }
            None => {
                node = tn.child_rep.expect("non-leaf has representative child");
            }
        }
    }
}
