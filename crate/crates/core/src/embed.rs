//! Violator-detection oracles and terminal-embedding assembly.
//!
//! A query q is embedded by running the ellipsoid method over candidates
//! v ∈ R^k against the constraint system
//!
//! ```text
//! ∀x ∈ Z:    ‖v − Πx‖ ≤ (1 + 10ε†)·‖q − x‖
//! ∀x,y ∈ Z:  |⟨v − Πy, Π(x−y)⟩ − ⟨q − y, x−y⟩| ≤ 20ε†·‖q−y‖·‖x−y‖
//! ```
//!
//! where Z is the point set of the tree node the near-neighbor walk stopped
//! in. The oracle is weak: it answers FAIL (accept) once none of the
//! constraints it inspects is violated; the inspected subset is organized so
//! that every x ∈ Z is covered through some center y with ‖q−y‖ = O(‖q−x‖),
//! which is enough for the accepted v to extend to a valid embedding
//! z_q = (v, √(‖q−x̂‖² − ‖v−Πx̂‖²)).
//!
//! Pair constraints are checked in lifted form: with ṽ_y = (q−y, −(v−Πy))/‖·‖
//! and ṽ_{x,y} = (x−y, Π(x−y))/‖·‖, the check is |⟨ṽ_y, ṽ_{x,y}⟩| ≥ 20ε†,
//! which implies the raw constraint is violated (the lifted norms dominate
//! the factors on the right-hand side). All scan arithmetic runs on cached
//! inner-product rows, so one candidate costs O(1) after an O(n(d+k)) per-
//! center setup; every violator is re-verified from raw coordinates before
//! it is returned.

use crate::ann::{self, AannAnswer, AannIndex, ScaleHit};
use crate::config::{Backend, Params};
use crate::ellipsoid::{self, OracleOutcome, RunError};
use crate::geom::{self, dist, dot, norm, norm2, PointSet};
use crate::medjl::{self, MedianEnsemble};
use crate::rng::{self, LBL_ANCHORS, LBL_MULTISCALE, LBL_QUERY, LBL_SET_ANCHORS};
use crate::sketch::{self, Sketch};
use crate::tree::{self, PartitionTree};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Geometry(#[from] geom::GeomError),
    #[error(transparent)]
    Sketch(#[from] sketch::SketchError),
    #[error(transparent)]
    Tree(#[from] tree::TreeError),
    #[error(transparent)]
    Ann(#[from] ann::AnnError),
    #[error(transparent)]
    Ensemble(#[from] medjl::MedjlError),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("query dimension {got} does not match index dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("degenerate violator: separating normal vanished")]
    DegenerateViolator,
    #[error("returned violator failed re-verification (internal invariant)")]
    UnsoundViolator,
    #[error("ellipsoid cap {cap} exceeded at query (node {node}, ‖q−x̂‖ = {r_hat:.6e}, {probes} probes)")]
    EllipsoidCapExceeded { cap: usize, node: u32, r_hat: f64, probes: u64 },
    #[error("feasibility search failed: {0}")]
    Infeasible(String),
}

/// A re-checkable witness that the candidate v violates the constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violator {
    /// ‖v − Πx‖ ≥ (1 + 10ε†)·‖q − x‖ with ‖v − Πx‖ > 0.
    Distance { x: u32 },
    /// |⟨ṽ_center, ṽ_{x,center}⟩| ≥ 20ε†.
    Pair { x: u32, center: u32 },
}

#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    /// The embedding z_q ∈ R^{k+1}; the last coordinate is nonnegative.
    pub z: Vec<f64>,
    /// Original index of the walk's anchor x̂.
    pub anchor: usize,
    /// Tree node the walk stopped in.
    pub node: u32,
    /// Ellipsoid cuts performed.
    pub iterations: usize,
    /// Candidate distance/inner-product evaluations across the whole query.
    pub probes: u64,
    pub scale_hit: ScaleHit,
}

/// Per-node violator ladder: scales (1+γ)^i·r_low for i = 0..=p.
#[derive(Debug, Clone, PartialEq)]
pub struct TermLadder {
    pub r_low: f64,
    pub p: u32,
}

/// Sign-hash pools over lifted vectors for the hashing backend. The bit of
/// ṽ_{x,z} under direction (g₁, g₂) is sign(w·x − w·z) with w = g₁ + Πᵀg₂,
/// so one per-point value table serves every center.
#[derive(Debug, Clone)]
pub struct LiftPools {
    /// J×d spatial parts g₁.
    pub g1: Vec<f64>,
    /// J×k sketch parts g₂.
    pub g2: Vec<f64>,
    /// n×J values ⟨g₁, x⟩ + ⟨g₂, Πx⟩.
    pub plus: Vec<f32>,
    /// n×J values ⟨g₁, x⟩ − ⟨g₂, Πx⟩ (query side needs the flipped sign).
    pub minus: Vec<f32>,
    pub j_total: usize,
}

/// Multi-scale violator-detection state: per-node ladders plus the seeds the
/// per-scale structures (anchors, set anchors, hashes) are derived from.
#[derive(Debug, Clone)]
pub struct MultiScale {
    pub per_node: Vec<TermLadder>,
    pub seed: u64,
    pub lift: Option<LiftPools>,
    /// Shared projections for the per-scale partitioning hashes (hashing
    /// backend only); per-scale structures differ only in offsets and width.
    pub ap_pool: Option<ann::ProjectionPool>,
}

/// Oracle structure constants for one node of size m.
#[derive(Debug, Clone, Copy)]
pub struct OracleDims {
    /// Main anchors per scale.
    pub n_rep: usize,
    /// Independent partitioning structures per scale.
    pub l: usize,
    /// Anchors per partitioning set.
    pub p_w: usize,
    /// Skip a partitioning structure when its unassigned count exceeds this.
    pub cap_unassigned: usize,
    /// ... or when its assigned count exceeds this.
    pub cap_assigned: usize,
}

fn oracle_dims(m: usize, d: usize, n_total: usize, params: &Params) -> OracleDims {
    // δ† = δ/(n²d) shares the budget across nodes and scales
    let delta_dag = params.delta / ((n_total * n_total) as f64 * d as f64).max(1.0);
    let mf = m.max(2) as f64;
    let log_m = (mf / delta_dag).ln().max(1.0);
    let n_rep = (params.c1 * mf.powf(params.rho_rep) * log_m).ceil() as usize;
    // deterministic set structures need no repetition
    let l = match params.backend {
        Backend::Trivial => 1,
        Backend::Lsh => (params.c2 * log_m).ceil().max(1.0) as usize,
    };
    let delta_ddag = delta_dag / (l as f64 * mf * mf);
    let p_w_full = (params.c3 * (1.0 / delta_ddag).ln()).ceil().max(1.0) as usize;
    let p_w = match params.backend {
        Backend::Trivial => p_w_full.min(4),
        Backend::Lsh => p_w_full.min(8),
    };
    let rho4 = match params.backend {
        Backend::Trivial => 1.0,
        Backend::Lsh => params.rho4,
    };
    let cap_unassigned = (params.cap_mult * mf.powf(rho4) * log_m).ceil() as usize;
    let cap_assigned =
        (params.cap_mult * mf.powf(1.0 - params.rho_rep + params.rho3) * log_m).ceil() as usize;
    OracleDims { n_rep, l, p_w, cap_unassigned, cap_assigned }
}

/// The built index: terminal set, certified sketch, partition tree,
/// near-neighbor walk state, and the violator ladders.
#[derive(Debug, Clone)]
pub struct TerminalIndex {
    /// Original terminal set, duplicates included.
    pub points: PointSet,
    /// Deduplicated points the structures are built over.
    pub unique: PointSet,
    /// Original index of each unique point.
    pub kept: Vec<u32>,
    /// Original index → unique index.
    pub remap: Vec<u32>,
    pub tree: PartitionTree,
    pub sketch: Sketch,
    /// n_unique × k projections Πx.
    pub proj: Vec<f64>,
    /// Per unique point: ‖x‖² and ‖Πx‖².
    pub xnorm2: Vec<f64>,
    pub pnorm2: Vec<f64>,
    pub aann: AannIndex,
    pub ms: MultiScale,
    pub ensemble: Option<MedianEnsemble>,
    pub params: Params,
    pub eps: f64,
    /// Measured pairwise distortion of the certified sketch.
    pub eps_cert: f64,
    pub seed: u64,
}

impl TerminalIndex {
    #[inline]
    pub fn k(&self) -> usize {
        self.sketch.k()
    }
    #[inline]
    pub fn d(&self) -> usize {
        self.points.d()
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.points.n()
    }
    #[inline]
    pub fn eps_dagger(&self) -> f64 {
        self.params.eps_dagger(self.eps)
    }
    #[inline]
    pub fn proj_row(&self, u: usize) -> &[f64] {
        &self.proj[u * self.k()..(u + 1) * self.k()]
    }
}

/// Builds the full index over a terminal set.
pub fn build(points: PointSet, eps: f64, params: Params, seed: u64) -> Result<TerminalIndex, EmbedError> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(EmbedError::BadEpsilon(eps));
    }
    let (unique, kept, remap) = points.dedup();
    let d = unique.d();
    let n_u = unique.n();

    let tree = tree::construct_partition_tree_with(
        &unique,
        params.delta,
        rng::derive(seed, &[rng::LBL_TREE]),
        params.c_prob,
        params.c_rm,
        params.tree_retries,
    )?;

    let k_req = params.sketch_rows(eps, n_u);
    let (pi, eps_cert) = if n_u >= 2 {
        sketch::certify_sketch(&unique, eps, k_req.min(d), params.sketch_retries, seed)?
    } else {
        (Sketch::identity(d), 0.0)
    };
    let proj = pi.project_all(&unique);
    let k = pi.k();
    let xnorm2: Vec<f64> = (0..n_u).map(|i| norm2(unique.point(i))).collect();
    let pnorm2: Vec<f64> = (0..n_u).map(|i| norm2(&proj[i * k..(i + 1) * k])).collect();

    let aann = ann::build_aann(&tree, &unique, &params, rng::derive(seed, &[rng::LBL_AANN]))?;

    let nd = (tree.n.max(2) as f64) * d as f64;
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
        Backend::Trivial => (None, None),
        Backend::Lsh => (
            Some(build_lift_pools(&unique, &proj, k, &params, ms_seed)),
            Some(build_ap_pool(&unique, &params, ms_seed)),
        ),
    };
    let ms = MultiScale { per_node, seed: ms_seed, lift, ap_pool };

    let ensemble = if params.medjl_enabled {
        let nf = n_u.max(2) as f64;
        let m = (params.medjl_m_cap as usize)
            .min((4.0 * (d as f64 + 10.0) * (nf * d as f64).ln()).ceil() as usize)
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
        sketch: pi,
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

/// Builds the lifted-vector sign pools (hashing backend only).
pub fn build_lift_pools_pub(
    unique: &PointSet,
    proj: &[f64],
    k: usize,
    params: &Params,
    seed: u64,
) -> LiftPools {
    build_lift_pools(unique, proj, k, params, seed)
}

/// Builds the shared partitioning-hash projections (hashing backend only).
pub fn build_ap_pool(unique: &PointSet, params: &Params, seed: u64) -> ann::ProjectionPool {
    let t_max = ann::table_bits(unique.n());
    let j_total = params.ap_tables as usize * t_max;
    ann::ProjectionPool::sample(unique.d(), j_total, rng::derive(seed, &[rng::LBL_AP]))
        .with_points(unique)
}

fn build_lift_pools(unique: &PointSet, proj: &[f64], k: usize, params: &Params, seed: u64) -> LiftPools {
    use rand_distr::{Distribution, StandardNormal};
    let d = unique.d();
    let bits = (unique.n().max(2) as f64).log2().ceil().clamp(1.0, 24.0) as usize;
    let j_total = params.lift_tables as usize * bits;
    let mut r = rng::stream(seed, &[rng::LBL_POOL, 2]);
    let g1: Vec<f64> = (0..j_total * d).map(|_| StandardNormal.sample(&mut r)).collect();
    let g2: Vec<f64> = (0..j_total * k).map(|_| StandardNormal.sample(&mut r)).collect();
    let n = unique.n();
    let mut plus = vec![0.0f32; n * j_total];
    let mut minus = vec![0.0f32; n * j_total];
    for x in 0..n {
        let p = unique.point(x);
        let pr = &proj[x * k..(x + 1) * k];
        for j in 0..j_total {
            let a = dot(&g1[j * d..(j + 1) * d], p);
            let b = dot(&g2[j * k..(j + 1) * k], pr);
            plus[x * j_total + j] = (a + b) as f32;
            minus[x * j_total + j] = (a - b) as f32;
        }
    }
    LiftPools { g1, g2, plus, minus, j_total }
}

// ---------------------------------------------------------------------------
// per-query scratch: cached rows making one candidate check O(1)
// ---------------------------------------------------------------------------

struct CenterCache {
    /// ⟨y, x⟩ for all unique x.
    hx: Vec<f64>,
    /// ⟨Πy, Πx⟩ for all unique x.
    gpx: Vec<f64>,
}

struct ScaleInfo {
    /// Sampled main anchors (unique ids).
    anchors: Vec<u32>,
    /// Anchor x̂ is assigned to, if any.
    assigned: Option<u32>,
}

struct BranchThree {
    /// Anchors per set, aligned with the sets this structure produced.
    set_anchors: Vec<Vec<u32>>,
    /// Per set: members (local position in node) → assigned anchor slot or none.
    assignments: Vec<Vec<(u32, Option<u8>)>>,
    unassigned_total: usize,
    assigned_total: usize,
}

struct Scratch<'a> {
    ix: &'a TerminalIndex,
    q: &'a [f64],
    xhat: u32,
    node: u32,
    node_points: &'a [u32],
    dims: OracleDims,
    eps20: f64,
    eps10: f64,
    /// ⟨q, x⟩ for all unique x.
    qx: Vec<f64>,
    qq: f64,
    /// lazily computed ⟨v, Πx⟩ with an iteration tag.
    vpx: Vec<f64>,
    vpx_tag: Vec<u32>,
    cur_iter: u32,
    vv: f64,
    centers: HashMap<u32, CenterCache>,
    scales: HashMap<u32, ScaleInfo>,
    b3: HashMap<u32, BranchThree>,
    /// centers whose exhaustive lifted scan already ran this iteration.
    scanned: HashMap<u32, u32>,
    /// direct x̂-centered checks already done this iteration.
    xhat_swept: u32,
    probes: u64,
    probe_cap: u64,
    medjl_pick: Option<usize>,
}

impl<'a> Scratch<'a> {
    fn new(ix: &'a TerminalIndex, q: &'a [f64], answer: &AannAnswer, rng: &mut ChaCha8Rng) -> Scratch<'a> {
        let n_u = ix.unique.n();
        let node_points = &ix.tree.node(answer.node).points;
        let qx = (0..n_u).map(|i| dot(q, ix.unique.point(i))).collect();
        let eps_dag = ix.eps_dagger();
        let medjl_pick = match (&ix.ensemble, ix.params.medjl_enabled) {
            (Some(ens), true) => {
                let draws = if ix.params.medjl_query_draws > 0 {
                    ix.params.medjl_query_draws as usize
                } else {
                    (2.0 * (ix.n().max(2) as f64).ln()).ceil() as usize
                };
                let ids = medjl::sample_sketch_indices(ens, draws.clamp(1, ens.m()), rng)
                    .expect("draw count clamped to ensemble size");
                // one sketch drives the scans; full-dimension re-verification
                // guards every returned candidate anyway
                ids.first().copied()
            }
            _ => None,
        };
        Scratch {
            ix,
            q,
            xhat: answer.point,
            node: answer.node,
            node_points,
            dims: oracle_dims(node_points.len(), ix.d(), ix.tree.n, &ix.params),
            eps20: 20.0 * eps_dag,
            eps10: 10.0 * eps_dag,
            qx,
            qq: norm2(q),
            vpx: vec![0.0; n_u],
            vpx_tag: vec![u32::MAX; n_u],
            cur_iter: 0,
            vv: 0.0,
            centers: HashMap::new(),
            scales: HashMap::new(),
            b3: HashMap::new(),
            scanned: HashMap::new(),
            xhat_swept: u32::MAX,
            probes: 0,
            probe_cap: ix.params.probe_cap,
            medjl_pick,
        }
    }

    fn begin_iteration(&mut self, v: &[f64]) {
        self.cur_iter = self.cur_iter.wrapping_add(1);
        self.vv = norm2(v);
    }

    #[inline]
    fn vpx(&mut self, v: &[f64], x: u32) -> f64 {
        let xi = x as usize;
        if self.vpx_tag[xi] != self.cur_iter {
            self.vpx[xi] = dot(v, self.ix.proj_row(xi));
            self.vpx_tag[xi] = self.cur_iter;
        }
        self.vpx[xi]
    }

    /// ‖q − x‖.
    #[inline]
    fn q_dist(&self, x: u32) -> f64 {
        let xi = x as usize;
        (self.qq + self.ix.xnorm2[xi] - 2.0 * self.qx[xi]).max(0.0).sqrt()
    }

    /// ‖v − Πx‖.
    #[inline]
    fn v_dist(&mut self, v: &[f64], x: u32) -> f64 {
        let p = self.vpx(v, x);
        (self.vv + self.ix.pnorm2[x as usize] - 2.0 * p).max(0.0).sqrt()
    }

    fn center(&mut self, y: u32) -> &CenterCache {
        let ix = self.ix;
        self.centers.entry(y).or_insert_with(|| {
            let n_u = ix.unique.n();
            let py = ix.unique.point(y as usize);
            let ppy = ix.proj_row(y as usize);
            let k = ix.k();
            let mut hx = vec![0.0; n_u];
            let mut gpx = vec![0.0; n_u];
            for x in 0..n_u {
                hx[x] = dot(py, ix.unique.point(x));
                gpx[x] = dot(ppy, &ix.proj[x * k..(x + 1) * k]);
            }
            CenterCache { hx, gpx }
        });
        &self.centers[&y]
    }

    /// Signed pair defect D = ⟨v−Πy, Π(x−y)⟩ − ⟨q−y, x−y⟩ and the lifted
    /// norms, all from cached rows. Returns (D, Nq(y), NL(x,y)).
    fn pair_terms(&mut self, v: &[f64], x: u32, y: u32) -> (f64, f64, f64) {
        let vpx_x = self.vpx(v, x);
        let vpx_y = self.vpx(v, y);
        let (hx_x, gpx_x) = {
            let c = self.center(y);
            (c.hx[x as usize], c.gpx[x as usize])
        };
        let xi = x as usize;
        let yi = y as usize;
        let ixr = self.ix;
        let sketch_part = vpx_x - vpx_y - gpx_x + ixr.pnorm2[yi];
        let exact_part = self.qx[xi] - self.qx[yi] - hx_x + ixr.xnorm2[yi];
        let d_signed = sketch_part - exact_part;
        let qy2 = (self.qq + ixr.xnorm2[yi] - 2.0 * self.qx[yi]).max(0.0);
        let vy2 = (self.vv + ixr.pnorm2[yi] - 2.0 * vpx_y).max(0.0);
        let nq = (qy2 + vy2).sqrt();
        let xy2 = (ixr.xnorm2[xi] + ixr.xnorm2[yi] - 2.0 * hx_x).max(0.0);
        let pxy2 = (ixr.pnorm2[xi] + ixr.pnorm2[yi] - 2.0 * gpx_x).max(0.0);
        let nl = (xy2 + pxy2).sqrt();
        (d_signed, nq, nl)
    }

    /// |⟨ṽ_y, ṽ_{x,y}⟩| from cached rows; 0 when either lift degenerates.
    fn lifted_ip(&mut self, v: &[f64], x: u32, y: u32) -> f64 {
        let (d_signed, nq, nl) = self.pair_terms(v, x, y);
        if nq <= 0.0 || nl <= 0.0 {
            return 0.0;
        }
        d_signed.abs() / (nq * nl)
    }

    /// Lifted inner product with the ensemble sketch driving the spatial
    /// block; used for candidate selection only, never for certification.
    fn lifted_ip_medjl(&mut self, v: &[f64], x: u32, y: u32, sk: usize) -> f64 {
        let ens = self.ix.ensemble.as_ref().expect("ensemble present");
        let px = ens.projected(sk, x as usize);
        let py = ens.projected(sk, y as usize);
        let pq: Vec<f32> = ens
            .sketch(sk)
            .apply(self.q)
            .iter()
            .map(|&t| t as f32)
            .collect();
        let mut exact = 0.0f64;
        let mut nq1 = 0.0f64;
        let mut nl1 = 0.0f64;
        for t in 0..px.len() {
            let a = (pq[t] - py[t]) as f64;
            let b = (px[t] - py[t]) as f64;
            exact += a * b;
            nq1 += a * a;
            nl1 += b * b;
        }
        let vpx_x = self.vpx(v, x);
        let vpx_y = self.vpx(v, y);
        let gpx_x = {
            let c = self.center(y);
            c.gpx[x as usize]
        };
        let yi = y as usize;
        let sketch_part = vpx_x - vpx_y - gpx_x + self.ix.pnorm2[yi];
        let d_signed = sketch_part - exact;
        let vy2 = (self.vv + self.ix.pnorm2[yi] - 2.0 * vpx_y).max(0.0);
        let xi = x as usize;
        let gxy2 = (self.ix.pnorm2[xi] + self.ix.pnorm2[yi] - 2.0 * gpx_x).max(0.0);
        let nq = (nq1 + vy2).sqrt();
        let nl = (nl1 + gxy2).sqrt();
        if nq <= 0.0 || nl <= 0.0 {
            return 0.0;
        }
        d_signed.abs() / (nq * nl)
    }

    fn over_probe_cap(&self) -> bool {
        self.probes >= self.probe_cap
    }

    fn scale_info(&mut self, scale: u32, r: f64) -> &ScaleInfo {
        let ix = self.ix;
        let node = self.node;
        let node_points = self.node_points;
        let xhat = self.xhat;
        let entry = self.scales.entry(scale).or_insert_with(|| {
            let mut rr = rng::stream(ix.ms.seed, &[LBL_ANCHORS, node as u64, scale as u64]);
            use rand::Rng as _;
            let anchors: Vec<u32> = (0..ix_dims_n_rep(ix, node_points.len()))
                .map(|_| node_points[rr.random_range(0..node_points.len())])
                .collect();
            let xh = ix.unique.point(xhat as usize);
            let assigned = anchors
                .iter()
                .copied()
                .find(|&z| dist(ix.unique.point(z as usize), xh) <= 2.0 * r);
            ScaleInfo { anchors, assigned }
        });
        entry
    }
}

fn ix_dims_n_rep(ix: &TerminalIndex, m: usize) -> usize {
    oracle_dims(m, ix.d(), ix.tree.n, &ix.params).n_rep
}

// ---------------------------------------------------------------------------
// the fixed-scale and multi-scale oracles
// ---------------------------------------------------------------------------

/// Exhaustive lifted scan of scope against center y: the strongest candidate
/// plays the role of the near-neighbor answer to ±ṽ_y. Runs at most once per
/// (iteration, center); candidates are probe-counted.
fn lifted_scan(
    s: &mut Scratch,
    v: &[f64],
    y: u32,
    scope: Option<&[u32]>,
) -> Option<(u32, f64)> {
    if s.scanned.get(&y) == Some(&s.cur_iter) {
        return None; // already scanned this iteration and found nothing
    }
    // ṽ_y must exist
    if s.q_dist(y) <= 0.0 && s.v_dist(v, y) <= 0.0 {
        return None;
    }
    let mut best: Option<(u32, f64)> = None;
    let scope_vec;
    let scope: &[u32] = match scope {
        Some(sl) => sl,
        None => {
            scope_vec = s.node_points.to_vec();
            &scope_vec
        }
    };
    let medjl_pick = s.medjl_pick;
    for &x in scope {
        if x == y {
            continue;
        }
        if s.over_probe_cap() {
            break;
        }
        s.probes += 1;
        let ip = match medjl_pick {
            Some(sk) => s.lifted_ip_medjl(v, x, y, sk),
            None => s.lifted_ip(v, x, y),
        };
        if best.map_or(true, |(_, b)| ip > b) {
            best = Some((x, ip));
        }
    }
    match best {
        Some((x, ip)) if ip >= s.eps20 => Some((x, ip)),
        _ => {
            s.scanned.insert(y, s.cur_iter);
            None
        }
    }
}

/// Candidate-filtered lifted scan for the hashing backend: only points whose
/// lifted sign signature matches ±ṽ_y in some table are evaluated.
fn lifted_scan_lsh(
    s: &mut Scratch,
    v: &[f64],
    y: u32,
    scope: Option<&[u32]>,
) -> Option<(u32, f64)> {
    if s.scanned.get(&y) == Some(&s.cur_iter) {
        return None;
    }
    let Some(pools) = &s.ix.ms.lift else {
        return lifted_scan(s, v, y, scope);
    };
    if s.q_dist(y) <= 0.0 && s.v_dist(v, y) <= 0.0 {
        return None;
    }
    let j_total = pools.j_total;
    let tables = s.ix.params.lift_tables as usize;
    let bits = j_total / tables;
    let d = s.ix.d();
    let k = s.ix.k();
    // query-side projection: ⟨g₁, q⟩ − ⟨g₂, v⟩ − (⟨g₁,y⟩ − ⟨g₂,Πy⟩)
    let yi = y as usize;
    let mut q_sig = vec![0u8; j_total]; // per direction: sign bit of +ṽ_y
    for j in 0..j_total {
        let a = dot(&pools.g1[j * d..(j + 1) * d], s.q);
        let b = dot(&pools.g2[j * k..(j + 1) * k], v);
        let val = a - b - pools.minus[yi * j_total + j] as f64;
        q_sig[j] = (val > 0.0) as u8;
    }
    let scope_vec;
    let scope: &[u32] = match scope {
        Some(sl) => sl,
        None => {
            scope_vec = s.node_points.to_vec();
            &scope_vec
        }
    };
    let cap_per_scan = 64 * tables as u64;
    let mut best: Option<(u32, f64)> = None;
    let mut evaluated = 0u64;
    // rotating window keeps large scopes affordable; coverage accumulates
    // across iterations
    let m = scope.len();
    let window = m.min(LIFT_SCAN_WINDOW);
    let start = if m > window { (s.cur_iter as usize).wrapping_mul(window) % m } else { 0 };
    'outer: for step in 0..window {
        let x = scope[(start + step) % m];
        if x == y {
            continue;
        }
        let xi = x as usize;
        // candidate iff all bits of some table agree with +ṽ_y or with −ṽ_y
        let mut hit = false;
        for t in 0..tables {
            let mut agree_plus = true;
            let mut agree_minus = true;
            for b in 0..bits {
                let j = t * bits + b;
                let xb = pools.plus[xi * j_total + j] > pools.plus[yi * j_total + j];
                let qb = q_sig[j] == 1;
                if xb != qb {
                    agree_plus = false;
                }
                if xb == qb {
                    agree_minus = false;
                }
                if !agree_plus && !agree_minus {
                    break;
                }
            }
            if agree_plus || agree_minus {
                hit = true;
                break;
            }
        }
        if !hit {
            continue;
        }
        if s.over_probe_cap() || evaluated >= cap_per_scan {
            break 'outer;
        }
        evaluated += 1;
        s.probes += 1;
        let ip = s.lifted_ip(v, x, y);
        if best.map_or(true, |(_, b)| ip > b) {
            best = Some((x, ip));
        }
    }
    match best {
        Some((x, ip)) if ip >= s.eps20 => Some((x, ip)),
        _ => {
            s.scanned.insert(y, s.cur_iter);
            None
        }
    }
}

fn scan_center(s: &mut Scratch, v: &[f64], y: u32, scope: Option<&[u32]>) -> Option<(u32, f64)> {
    match s.ix.params.backend {
        Backend::Trivial => lifted_scan(s, v, y, scope),
        Backend::Lsh => lifted_scan_lsh(s, v, y, scope),
    }
}

/// Distance check on a single point, with the positive-norm guard that keeps
/// the resulting hyperplane nonzero.
fn distance_violated(s: &mut Scratch, v: &[f64], x: u32) -> bool {
    let vd = s.v_dist(v, x);
    vd > 0.0 && vd >= (1.0 + s.eps10) * s.q_dist(x)
}

/// The three-branch fixed-scale query at ladder rung `scale`.
fn fixed_scale_query(s: &mut Scratch, v: &[f64], scale: u32, r: f64) -> Option<Violator> {
    // branch 1: the walk anchor itself
    s.probes += 1;
    if distance_violated(s, v, s.xhat) {
        return Some(Violator::Distance { x: s.xhat });
    }

    let (assigned, _anchors_len) = {
        let info = s.scale_info(scale, r);
        (info.assigned, info.anchors.len())
    };

    if let Some(z) = assigned {
        // branch 2: x̂ is assigned to main anchor z
        if z != s.xhat {
            s.probes += 1;
            if distance_violated(s, v, z) {
                return Some(Violator::Distance { x: z });
            }
            s.probes += 1;
            if s.lifted_ip(v, z, s.xhat) >= s.eps20 {
                return Some(Violator::Pair { x: z, center: s.xhat });
            }
        }
        if let Some((x, _)) = scan_center(s, v, z, None) {
            return Some(Violator::Pair { x, center: z });
        }
        return None;
    }

    // branch 3: unassigned — go through the partitioning structures
    let dims = s.dims;
    let node = s.node;
    for i in 0..dims.l as u32 {
        if s.over_probe_cap() {
            break; // probe budget exhausted: truncate
        }
        let key = scale * dims.l as u32 + i;
        if !s.b3.contains_key(&key) {
            let b3 = derive_branch_three(s, scale, i, r);
            // enumerated members count as candidate inspections
            s.probes += (b3.unassigned_total + b3.assigned_total) as u64;
            s.b3.insert(key, b3);
        }
        let (unassigned_total, assigned_total, n_sets) = {
            let b3 = &s.b3[&key];
            (b3.unassigned_total, b3.assigned_total, b3.assignments.len())
        };
        if unassigned_total > dims.cap_unassigned || assigned_total > dims.cap_assigned {
            continue; // structure over budget at this scale; skip it
        }
        for set_idx in 0..n_sets {
            // unassigned members: direct check against the walk anchor; the
            // predicate is scale-free, so one sweep per iteration suffices
            let sweep_needed = s.xhat_swept != s.cur_iter;
            let members: Vec<(u32, Option<u8>)> = s.b3[&key].assignments[set_idx].clone();
            if sweep_needed {
                for &(x, w_slot) in &members {
                    if w_slot.is_none() && x != s.xhat {
                        if s.over_probe_cap() {
                            break;
                        }
                        s.probes += 1;
                        if s.lifted_ip(v, x, s.xhat) >= s.eps20 {
                            return Some(Violator::Pair { x, center: s.xhat });
                        }
                    }
                }
                s.xhat_swept = s.cur_iter;
            }
            let ws: Vec<u32> = s.b3[&key].set_anchors[set_idx].clone();
            for (slot, &w) in ws.iter().enumerate() {
                if s.over_probe_cap() {
                    break;
                }
                if w != s.xhat {
                    s.probes += 1;
                    if distance_violated(s, v, w) {
                        return Some(Violator::Distance { x: w });
                    }
                    s.probes += 1;
                    if s.lifted_ip(v, w, s.xhat) >= s.eps20 {
                        return Some(Violator::Pair { x: w, center: s.xhat });
                    }
                }
                // near-neighbor query into the set's lifted structure,
                // restricted to the members assigned to this anchor
                let assigned_scope: Vec<u32> = members
                    .iter()
                    .filter(|(_, sl)| *sl == Some(slot as u8))
                    .map(|(x, _)| *x)
                    .collect();
                if !assigned_scope.is_empty() {
                    if let Some((x, _)) = scan_center(s, v, w, Some(&assigned_scope)) {
                        return Some(Violator::Pair { x, center: w });
                    }
                }
            }
            let _ = node;
        }
    }
    None
}

fn derive_branch_three(s: &mut Scratch, scale: u32, i: u32, r: f64) -> BranchThree {
    use rand::Rng as _;
    let ix = s.ix;
    let dims = s.dims;
    // the sets h_i(x̂) maps to: the whole node for the reference backend,
    // sign-bucket members for the hashing backend (enumeration bounded by
    // the remaining probe budget)
    let remaining = (s.probe_cap.saturating_sub(s.probes)) as usize;
    let sets: Vec<Vec<u32>> = match ix.params.backend {
        Backend::Trivial => vec![s.node_points.to_vec()],
        Backend::Lsh => lsh_ap_sets(s, scale, i, r, remaining),
    };
    let mut set_anchors = Vec::with_capacity(sets.len());
    let mut assignments = Vec::with_capacity(sets.len());
    let mut unassigned_total = 0usize;
    let mut assigned_total = 0usize;
    for (set_idx, members) in sets.iter().enumerate() {
        let mut rr = rng::stream(
            ix.ms.seed,
            &[LBL_SET_ANCHORS, s.node as u64, scale as u64, i as u64, set_idx as u64],
        );
        let ws: Vec<u32> =
            (0..dims.p_w).map(|_| members[rr.random_range(0..members.len())]).collect();
        let assign: Vec<(u32, Option<u8>)> = members
            .iter()
            .map(|&x| {
                let px = ix.unique.point(x as usize);
                let slot = ws
                    .iter()
                    .position(|&w| dist(ix.unique.point(w as usize), px) <= 4.0 * r)
                    .map(|p| p as u8);
                if slot.is_some() {
                    assigned_total += 1;
                } else {
                    unassigned_total += 1;
                }
                (x, slot)
            })
            .collect();
        set_anchors.push(ws);
        assignments.push(assign);
    }
    BranchThree { set_anchors, assignments, unassigned_total, assigned_total }
}

/// Members of the node points the partitioning-hash scan examines when
/// deriving bucket contents: a rotating window caps the work (truncation).
const AP_SCAN_WINDOW: usize = 4096;
/// Candidate window of a hashed lifted scan.
const LIFT_SCAN_WINDOW: usize = 8192;

/// Bucket members of x̂ under the per-(scale, structure) partitioning hash.
/// Bits come from the shared projection pool; only the offsets and the
/// quantization width vary per (node, scale, structure, table).
fn lsh_ap_sets(s: &Scratch, scale: u32, i: u32, r: f64, budget: usize) -> Vec<Vec<u32>> {
    let ix = s.ix;
    let Some(pool) = &ix.ms.ap_pool else {
        return vec![s.node_points.to_vec()];
    };
    let tables = ix.params.ap_tables as usize;
    let t_max = pool.j_total / tables;
    let bits = ann::table_bits(s.node_points.len()).min(t_max);
    let width = ix.params.ap_width * r;
    let mut sets = Vec::new();
    let cap = (s.dims.cap_assigned + s.dims.cap_unassigned)
        .min((budget / tables).max(4))
        .max(1);
    let m = s.node_points.len();
    let window = m.min(AP_SCAN_WINDOW);
    // rotating start keeps repeated truncated scans from fixating on a prefix
    let start = (rng::derive(ix.ms.seed, &[rng::LBL_AP, s.node as u64, scale as u64, i as u64])
        as usize)
        % m;
    let xh_idx = s.xhat as usize;
    for t in 0..tables {
        let offs = ann::offsets_for(
            ix.ms.seed,
            &[rng::LBL_AP, 7, s.node as u64, scale as u64, i as u64, t as u64],
            bits,
        );
        let j0 = t * t_max;
        let sig_of = |pt: usize| -> u32 {
            let mut sig = 0u32;
            for (b, off) in offs.iter().enumerate() {
                sig = (sig << 1) | ann::parity_bit(pool.value(pt, j0 + b), width, *off);
            }
            sig
        };
        let target = sig_of(xh_idx);
        let mut members = Vec::new();
        for step in 0..window {
            let x = s.node_points[(start + step) % m];
            if sig_of(x as usize) == target {
                members.push(x);
                if members.len() >= cap {
                    break;
                }
            }
        }
        if !members.contains(&s.xhat) {
            members.push(s.xhat);
        }
        members.sort_unstable();
        sets.push(members);
    }
    sets
}

/// Scans the stop node's ladder rungs ascending; the first violator wins;
/// FAIL means every rung accepted. Every violator is re-verified from raw
/// coordinates before being returned.
fn multi_scale_query_scratch(s: &mut Scratch, v: &[f64]) -> Result<Option<Violator>, EmbedError> {
    s.begin_iteration(v);
    let ladder = s.ix.ms.per_node[s.node as usize].clone();
    let gamma = s.ix.params.gamma;
    for i in 0..=ladder.p {
        if s.over_probe_cap() {
            break; // budget exhausted: remaining rungs accept by truncation
        }
        let r = ladder.r_low * (1.0 + gamma).powi(i as i32);
        if let Some(w) = fixed_scale_query(s, v, i, r) {
            if !verify_violator(s.ix, s.q, v, w) {
                // cached arithmetic flagged a borderline candidate the exact
                // recomputation rejects; treat it as not violating
                continue;
            }
            return Ok(Some(w));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// violator certificates and hyperplanes
// ---------------------------------------------------------------------------

/// Re-checks a violator from raw coordinates only.
pub fn verify_violator(ix: &TerminalIndex, q: &[f64], v: &[f64], w: Violator) -> bool {
    let eps_dag = ix.eps_dagger();
    match w {
        Violator::Distance { x } => {
            let px = ix.proj_row(x as usize);
            let vd = dist(v, px);
            let qd = dist(q, ix.unique.point(x as usize));
            vd > 0.0 && vd >= (1.0 + 10.0 * eps_dag) * qd
        }
        Violator::Pair { x, center } => {
            let y = ix.unique.point(center as usize);
            let lv = match geom::lifted_query(q, y, v, &ix.sketch) {
                Ok(l) => l,
                Err(_) => return false,
            };
            let lx = match geom::lifted_direction(ix.unique.point(x as usize), y, &ix.sketch) {
                Ok(l) => l,
                Err(_) => return false,
            };
            dot(lv.as_slice(), lx.as_slice()).abs() >= 20.0 * eps_dag
        }
    }
}

/// Converts a verified violator into a separating normal for the constraint
/// set: ⟨y′ − v, normal⟩ ≥ 0 for every feasible y′.
pub fn violator_to_hyperplane(
    ix: &TerminalIndex,
    q: &[f64],
    v: &[f64],
    w: Violator,
) -> Result<Vec<f64>, EmbedError> {
    match w {
        Violator::Distance { x } => {
            let px = ix.proj_row(x as usize);
            let normal: Vec<f64> = px.iter().zip(v).map(|(a, b)| a - b).collect();
            if norm(&normal) == 0.0 {
                return Err(EmbedError::DegenerateViolator);
            }
            Ok(normal)
        }
        Violator::Pair { x, center } => {
            let y = ix.unique.point(center as usize);
            let xx = ix.unique.point(x as usize);
            let pdiff = ix.sketch.apply_diff(xx, y);
            let py = ix.proj_row(center as usize);
            let vmy: Vec<f64> = v.iter().zip(py).map(|(a, b)| a - b).collect();
            let qmy: Vec<f64> = q.iter().zip(y).map(|(a, b)| a - b).collect();
            let xmy: Vec<f64> = xx.iter().zip(y).map(|(a, b)| a - b).collect();
            let s = dot(&vmy, &pdiff) - dot(&qmy, &xmy);
            if s == 0.0 || norm(&pdiff) == 0.0 {
                return Err(EmbedError::DegenerateViolator);
            }
            let sign = if s > 0.0 { -1.0 } else { 1.0 };
            Ok(pdiff.iter().map(|c| sign * c).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// the reference feasibility route (exhaustive constraint scan)
// ---------------------------------------------------------------------------

/// Exhaustive constraint scan over every point and pair; `None` means v
/// satisfies the whole system at tolerance ε†. Independent of the multi-scale
/// path: straight loops over precomputed projection rows.
pub struct ReqSystem {
    proj: Vec<f64>,
    k: usize,
    points: PointSet,
    eps_dag: f64,
}

impl ReqSystem {
    pub fn new(points: &PointSet, pi: &Sketch, eps_dag: f64) -> ReqSystem {
        ReqSystem {
            proj: pi.project_all(points),
            k: pi.k(),
            points: points.clone(),
            eps_dag,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.proj[i * self.k..(i + 1) * self.k]
    }

    /// The most violated constraint at v, as a separating normal.
    pub fn worst_violation(&self, q: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let n = self.points.n();
        let mut worst: Option<(f64, Vec<f64>)> = None;
        let mut push = |margin: f64, normal: Vec<f64>| {
            if margin > 0.0 && worst.as_ref().map_or(true, |(m, _)| margin > *m) {
                worst = Some((margin, normal));
            }
        };
        for y in 0..n {
            let qd = dist(q, self.points.point(y));
            let vd = dist(v, self.row(y));
            let margin = vd - (1.0 + 10.0 * self.eps_dag) * qd;
            if margin > 0.0 && vd > 0.0 {
                let normal: Vec<f64> = self.row(y).iter().zip(v).map(|(a, b)| a - b).collect();
                push(margin / qd.max(1e-300), normal);
            }
        }
        for y in 0..n {
            let py = self.points.point(y);
            let qy: Vec<f64> = q.iter().zip(py).map(|(a, b)| a - b).collect();
            let vy: Vec<f64> = v.iter().zip(self.row(y)).map(|(a, b)| a - b).collect();
            let qd = dist(q, py);
            for x in 0..n {
                if x == y {
                    continue;
                }
                let px = self.points.point(x);
                let xy: Vec<f64> = px.iter().zip(py).map(|(a, b)| a - b).collect();
                let pxy: Vec<f64> = self.row(x).iter().zip(self.row(y)).map(|(a, b)| a - b).collect();
                let d_signed = dot(&vy, &pxy) - dot(&qy, &xy);
                let bound = 20.0 * self.eps_dag * qd * norm(&xy);
                let margin = d_signed.abs() - bound;
                if margin > 0.0 && norm(&pxy) > 0.0 {
                    let sign = if d_signed > 0.0 { -1.0 } else { 1.0 };
                    push(
                        margin / (qd * norm(&xy)).max(1e-300),
                        pxy.iter().map(|c| sign * c).collect(),
                    );
                }
            }
        }
        worst.map(|(_, normal)| normal)
    }

    /// True iff v satisfies every constraint.
    pub fn feasible(&self, q: &[f64], v: &[f64]) -> bool {
        self.worst_violation(q, v).is_none()
    }
}

/// Reference route: finds a fully feasible v by the ellipsoid method with
/// the exhaustive scan as its oracle. Needs the sketch certified at
/// ε ≤ ε†/15 so the system is strictly feasible.
pub fn direct_feasible_point(
    points: &PointSet,
    pi: &Sketch,
    q: &[f64],
    eps_dag: f64,
) -> Result<(Vec<f64>, usize), EmbedError> {
    let sys = ReqSystem::new(points, pi, eps_dag);
    let (nn, r_hat) = geom::brute_nearest(points, q);
    let x0 = sys.row(nn).to_vec();
    if r_hat == 0.0 {
        // q coincides with a terminal: its own projection is feasible
        return Ok((x0, 0));
    }
    let cap = ellipsoid::iteration_cap(pi.k(), 2.0, eps_dag);
    let run = ellipsoid::run_ellipsoid(
        &x0,
        2.0 * r_hat,
        |v| -> Result<OracleOutcome, EmbedError> {
            Ok(match sys.worst_violation(q, v) {
                Some(normal) => OracleOutcome::Separate(normal),
                None => OracleOutcome::Fail,
            })
        },
        cap,
    );
    match run {
        Ok(r) => Ok((r.point, r.iterations)),
        Err(RunError::Oracle(e)) => Err(e),
        Err(e) => Err(EmbedError::Infeasible(e.to_string())),
    }
}

// ---------------------------------------------------------------------------
// embedding assembly and verification
// ---------------------------------------------------------------------------

impl TerminalIndex {
    /// Embeds one query. `query_id` seeds the per-query randomness (with the
    /// deterministic-queries option the coordinates are hashed instead, so
    /// repeating a query repeats its image).
    pub fn embed(&self, q: &[f64], query_id: u64) -> Result<EmbeddingResult, EmbedError> {
        if q.len() != self.d() {
            return Err(EmbedError::DimensionMismatch { got: q.len(), want: self.d() });
        }
        let qseed = if self.params.deterministic_queries {
            rng::hash_coords(self.seed, q)
        } else {
            rng::derive(self.seed, &[LBL_QUERY, query_id])
        };
        let mut rng = rng::stream(qseed, &[]);
        let mut probes = 0u64;
        let answer = ann::query_aann(&self.aann, &self.tree, &self.unique, q, &mut rng, &mut probes);

        let r_hat = answer.dist;
        let anchor_orig = self.kept[answer.point as usize] as usize;
        let tn = self.tree.node(answer.node);
        if tn.is_leaf() || r_hat == 0.0 {
            let mut z = self.proj_row(answer.point as usize).to_vec();
            z.push(r_hat);
            return Ok(EmbeddingResult {
                z,
                anchor: anchor_orig,
                node: answer.node,
                iterations: 0,
                probes,
                scale_hit: answer.scale_hit,
            });
        }

        let mut scratch = Scratch::new(self, q, &answer, &mut rng);
        scratch.probes = probes;
        let eps_dag = self.eps_dagger();
        let cap = ellipsoid::iteration_cap(self.k(), 2.0, eps_dag);
        let x0 = self.proj_row(answer.point as usize).to_vec();
        let run = ellipsoid::run_ellipsoid(
            &x0,
            2.0 * r_hat,
            |v| -> Result<OracleOutcome, EmbedError> {
                match multi_scale_query_scratch(&mut scratch, v)? {
                    None => Ok(OracleOutcome::Fail),
                    Some(w) => {
                        let normal = violator_to_hyperplane(scratch.ix, q, v, w)?;
                        Ok(OracleOutcome::Separate(normal))
                    }
                }
            },
            cap,
        );
        let result = match run {
            Ok(r) => r,
            Err(RunError::Oracle(e)) => return Err(e),
            Err(RunError::MaxItersExceeded { .. }) => {
                return Err(EmbedError::EllipsoidCapExceeded {
                    cap,
                    node: answer.node,
                    r_hat,
                    probes: scratch.probes,
                })
            }
            Err(RunError::Update(e)) => return Err(EmbedError::Infeasible(e.to_string())),
        };
        let vd2 = dist(&result.point, &x0).powi(2);
        let mut z = result.point;
        z.push((r_hat * r_hat - vd2).max(0.0).sqrt());
        Ok(EmbeddingResult {
            z,
            anchor: anchor_orig,
            node: answer.node,
            iterations: result.iterations,
            probes: scratch.probes,
            scale_hit: answer.scale_hit,
        })
    }

    /// Runs the multi-scale oracle once at candidate v, outside any
    /// ellipsoid loop. Exposed for direct oracle tests.
    pub fn multi_scale_query(
        &self,
        q: &[f64],
        v: &[f64],
        answer: &AannAnswer,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Violator>, EmbedError> {
        let mut scratch = Scratch::new(self, q, answer, rng);
        multi_scale_query_scratch(&mut scratch, v)
    }

    /// A reusable oracle session for one (query, walk answer) pair, holding
    /// the per-query caches across candidates. This is exactly the oracle
    /// `embed` drives; exposed so callers can run their own feasibility
    /// loops with instrumentation.
    pub fn oracle_session<'a>(
        &'a self,
        q: &'a [f64],
        answer: &AannAnswer,
        rng: &mut ChaCha8Rng,
    ) -> OracleSession<'a> {
        OracleSession { scratch: Scratch::new(self, q, answer, rng) }
    }

    /// Near-neighbor walk only.
    pub fn nearest(&self, q: &[f64], rng: &mut ChaCha8Rng) -> AannAnswer {
        let mut probes = 0;
        ann::query_aann(&self.aann, &self.tree, &self.unique, q, &mut rng.clone(), &mut probes)
    }

    /// Distortion report of an embedding against every terminal:
    /// (max over, max under) of ‖z − (Πx, 0)‖/‖q − x‖ − 1, skipping exact
    /// coincidences.
    pub fn verify(&self, q: &[f64], z: &[f64]) -> (f64, f64) {
        verify_embedding(&self.points, &self.remap, &self.proj, self.k(), q, z)
    }
}

/// A live oracle over one query, reusable across candidate points.
pub struct OracleSession<'a> {
    scratch: Scratch<'a>,
}

impl OracleSession<'_> {
    /// One oracle call: `Ok(None)` is FAIL (accept), `Ok(Some(w))` a
    /// re-verified violator.
    pub fn query(&mut self, v: &[f64]) -> Result<Option<Violator>, EmbedError> {
        multi_scale_query_scratch(&mut self.scratch, v)
    }

    pub fn probes(&self) -> u64 {
        self.scratch.probes
    }
}

/// max_over / max_under distortion of z against every terminal.
pub fn verify_embedding(
    points: &PointSet,
    remap: &[u32],
    proj: &[f64],
    k: usize,
    q: &[f64],
    z: &[f64],
) -> (f64, f64) {
    assert_eq!(z.len(), k + 1);
    let mut max_over = 0.0f64;
    let mut max_under = 0.0f64;
    for i in 0..points.n() {
        let x = points.point(i);
        if x == q {
            continue;
        }
        let qd = dist(q, x);
        let row = &proj[remap[i] as usize * k..(remap[i] as usize + 1) * k];
        let mut e2 = z[k] * z[k];
        for (a, b) in z[..k].iter().zip(row) {
            e2 += (a - b) * (a - b);
        }
        let ratio = e2.sqrt() / qd;
        max_over = max_over.max(ratio - 1.0);
        max_under = max_under.max(1.0 - ratio);
    }
    (max_over, max_under)
}

// ---------------------------------------------------------------------------
// lazily-derived fixed-scale structure, materialized for inspection
// ---------------------------------------------------------------------------

/// A view of one node/scale of the violator ladder with its derived parts
/// materialized. Query execution derives the same parts on demand from the
/// same seeds; this type exists so tests (and tooling) can inspect them.
pub struct FixedScaleView<'a> {
    ix: &'a TerminalIndex,
    pub node: u32,
    pub scale: u32,
    pub r: f64,
}

impl TerminalIndex {
    pub fn fixed_scale_view(&self, node: u32, scale: u32) -> FixedScaleView<'_> {
        let ladder = &self.ms.per_node[node as usize];
        assert!(scale <= ladder.p, "scale beyond ladder");
        let r = ladder.r_low * (1.0 + self.params.gamma).powi(scale as i32);
        FixedScaleView { ix: self, node, scale, r }
    }

    /// Ladder rung count p for a node (rungs are 0..=p).
    pub fn ladder_rungs(&self, node: u32) -> u32 {
        self.ms.per_node[node as usize].p
    }
}

impl FixedScaleView<'_> {
    pub fn dims(&self) -> OracleDims {
        let m = self.ix.tree.node(self.node).points.len();
        oracle_dims(m, self.ix.d(), self.ix.tree.n, &self.ix.params)
    }

    /// The sampled main anchors for this scale.
    pub fn anchors(&self) -> Vec<u32> {
        use rand::Rng as _;
        let pts = &self.ix.tree.node(self.node).points;
        let mut rr = rng::stream(self.ix.ms.seed, &[LBL_ANCHORS, self.node as u64, self.scale as u64]);
        (0..self.dims().n_rep).map(|_| pts[rr.random_range(0..pts.len())]).collect()
    }

    /// Main-stage assignments: (x, anchor) for every x within 2r of some
    /// anchor (first anchor in sampled order wins).
    pub fn assignments(&self) -> Vec<(u32, u32)> {
        let anchors = self.anchors();
        let pts = &self.ix.tree.node(self.node).points;
        let mut out = Vec::new();
        for &x in pts {
            let px = self.ix.unique.point(x as usize);
            if let Some(&z) = anchors
                .iter()
                .find(|&&z| dist(self.ix.unique.point(z as usize), px) <= 2.0 * self.r)
            {
                out.push((x, z));
            }
        }
        out
    }

    /// Set anchors for partitioning structure `i`, set `set_idx`.
    pub fn set_anchors(&self, i: u32, set_idx: usize, members: &[u32]) -> Vec<u32> {
        use rand::Rng as _;
        let dims = self.dims();
        let mut rr = rng::stream(
            self.ix.ms.seed,
            &[LBL_SET_ANCHORS, self.node as u64, self.scale as u64, i as u64, set_idx as u64],
        );
        (0..dims.p_w).map(|_| members[rr.random_range(0..members.len())]).collect()
    }

    /// In-set assignments at radius 4r for structure `i`, set `set_idx`.
    pub fn set_assignments(&self, i: u32, set_idx: usize, members: &[u32]) -> Vec<(u32, u32)> {
        let ws = self.set_anchors(i, set_idx, members);
        members
            .iter()
            .filter_map(|&x| {
                let px = self.ix.unique.point(x as usize);
                ws.iter()
                    .find(|&&w| dist(self.ix.unique.point(w as usize), px) <= 4.0 * self.r)
                    .map(|&w| (x, w))
            })
            .collect()
    }
}
