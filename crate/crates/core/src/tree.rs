//! Randomized partition tree construction.
//!
//! Each node splits its point set two ways: a fine partition (`c_low`) whose
//! blocks become child subtrees, and a coarse partition (`c_high`) from which
//! one representative per block forms an extra child. Radii are anchored at
//! `r_apx`, a one-sided estimate of the median radius. The refinement chain
//! every node satisfies, with n the total point count and ⊑ read as "right
//! refines left":
//!
//! ```text
//! CC(Z, 1000n²·r_apx) ⊑ c_high ⊑ CC(Z, r_apx)
//! CC(Z, r_apx/(10n)) ⊑ c_low  ⊑ CC(Z, r_apx/(1000n³))
//! ```
//!
//! The left inclusions are deterministic (edge-length filters); the right
//! ones hold with probability 1−δ per node. Child sizes halve, so the tree
//! has depth ≤ ⌈log₂ n⌉ + 1 and total stored size O(n log n).

use crate::geom::{connected_components, dist, dist2, r_med_exact, Partition, PointSet, UnionFind};
use crate::rng::{self, LBL_TREE};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("median radius estimation needs at least 2 points")]
    TooFewPoints,
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("tree construction failed: node over {node_size} points kept a degenerate split after {retries} retries")]
    DegenerateSplit { node_size: usize, retries: u32 },
    #[error("partitions are over different ground sets ({0} vs {1})")]
    GroundSetMismatch(usize, usize),
}

/// One-sided estimate of the median radius: ⌈c_rm·ln(1/δ)⌉ rounds, each
/// taking the max(2,⌈n/2⌉)-th smallest distance (self included) from a
/// uniform anchor; the minimum over rounds is returned. Never below the
/// exact median radius; at most n times it with probability ≥ 1−δ.
pub fn comp_rmed(z: &PointSet, delta: f64, seed: u64, c_rm: f64) -> Result<f64, TreeError> {
    Ok(comp_rmed_rounds(z, delta, seed, c_rm)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Per-round estimates backing [`comp_rmed`]; exposed for tests.
pub fn comp_rmed_rounds(
    z: &PointSet,
    delta: f64,
    seed: u64,
    c_rm: f64,
) -> Result<Vec<f64>, TreeError> {
    let n = z.n();
    if n < 2 {
        return Err(TreeError::TooFewPoints);
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(TreeError::BadDelta(delta));
    }
    let rounds = (c_rm * (1.0 / delta).ln()).ceil().max(1.0) as usize;
    let kth = 2.max(n.div_ceil(2)); // 1-indexed rank, self-distance included
    let mut rng = rng::stream(seed, &[LBL_TREE, 0x726d6564]);
    let mut out = Vec::with_capacity(rounds);
    let mut dists = vec![0.0f64; n];
    for _ in 0..rounds {
        let anchor = rng.random_range(0..n);
        let pa = z.point(anchor);
        for (i, d) in dists.iter_mut().enumerate() {
            *d = dist(pa, z.point(i));
        }
        let (_, med, _) = dists.select_nth_unstable_by(kth - 1, f64::total_cmp);
        out.push(*med);
    }
    Ok(out)
}

/// Randomized partitioning: K rounds of random projection, a sliding window
/// of width τ over the sorted projections, and an edge-length filter at ν;
/// connected components of the accumulated edges form the partition.
///
/// With the public parameterization (τ = 10r, ν = 1000n²r,
/// K = ⌈10 ln(n/δ)⌉) the output lands between CC(X, 1000n²r) and CC(X, r)
/// with probability ≥ 1−δ. The ν filter is deterministic, so the left
/// inclusion always holds.
pub fn construct_partition(z: &PointSet, r: f64, delta: f64, seed: u64) -> Partition {
    assert!(r > 0.0, "resolution must be positive");
    let n = z.n() as f64;
    let rounds = (10.0 * (n / delta).ln()).ceil().max(1.0) as usize;
    construct_partition_with(z, 10.0 * r, 1000.0 * n * n * r, rounds, seed)
}

/// The core rounds loop with explicit window width and edge filter.
pub(crate) fn construct_partition_with(
    z: &PointSet,
    tau: f64,
    nu_edge: f64,
    rounds: usize,
    seed: u64,
) -> Partition {
    let n = z.n();
    if n <= 1 {
        return Partition::singletons(n);
    }
    let d = z.d();
    let nu2 = nu_edge * nu_edge;

    let merged = (0..rounds)
        .into_par_iter()
        .fold(
            || UnionFind::new(n),
            |mut uf, round| {
                let mut rng = rng::stream(seed, &[LBL_TREE, 0x70617274, round as u64]);
                let mut g = vec![0.0f64; d];
                for gi in &mut g {
                    *gi = StandardNormal.sample(&mut rng);
                }
                let mut proj: Vec<f64> = (0..n)
                    .map(|i| z.point(i).iter().zip(&g).map(|(a, b)| a * b).sum())
                    .collect();
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_unstable_by(|&a, &b| proj[a as usize].total_cmp(&proj[b as usize]));
                // work in sorted coordinates
                proj.sort_unstable_by(f64::total_cmp);
                let mut i = 0usize;
                while i + 1 < n {
                    let mut hi = i + 1;
                    while hi < n && proj[hi] <= proj[i] + tau {
                        hi += 1;
                    }
                    let i_n = hi - 1; // last index inside the window, may equal i
                    let pi = z.point(order[i] as usize);
                    for j in (i + 1)..=i_n {
                        if dist2(pi, z.point(order[j] as usize)) <= nu2 {
                            uf.union(order[i], order[j]);
                        }
                    }
                    i = (i + 1).max(i_n);
                }
                uf
            },
        )
        .reduce(
            || UnionFind::new(n),
            |mut a, mut b| {
                for i in 0..n as u32 {
                    let r = b.find(i);
                    if r != i {
                        a.union(i, r);
                    }
                }
                a
            },
        );
    merged.into_partition()
}

/// true iff every block of `b` is contained in some block of `a` (b refines
/// a, written a ⊑ b).
pub fn refines(a: &Partition, b: &Partition) -> Result<bool, TreeError> {
    if a.ground_size() != b.ground_size() {
        return Err(TreeError::GroundSetMismatch(a.ground_size(), b.ground_size()));
    }
    Ok(b.blocks().iter().all(|blk| {
        let target = a.block_of(blk[0]);
        blk.iter().all(|&i| a.block_of(i) == target)
    }))
}

/// A tree node over a subset `Z` of the dataset (global point ids).
#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Sorted global ids of the points stored at this node.
    pub points: Vec<u32>,
    /// Child node ids, one per `c_low` block (same order as the blocks).
    pub children_low: Vec<u32>,
    /// Child node over the representative set; absent for leaves.
    pub child_rep: Option<u32>,
    /// Fine partition of `points` (local indices).
    pub c_low: Partition,
    /// Coarse partition of `points` (local indices).
    pub c_high: Partition,
    /// One representative (global id, smallest in block) per `c_high` block.
    pub c_rep: Vec<u32>,
    /// Median-radius estimate of this node's point set.
    pub r_apx: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.points.len() == 1
    }
}

#[derive(Debug, Clone)]
pub struct PartitionTree {
    pub nodes: Vec<TreeNode>,
    pub root: u32,
    /// Σ|Z| over all nodes.
    pub total_size: usize,
    pub build_seed: u64,
    pub delta: f64,
    /// Total point count the radii formulas are scaled by.
    pub n: usize,
}

impl PartitionTree {
    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &PartitionTree, id: u32) -> usize {
            let node = t.node(id);
            let mut best = 0;
            for &c in node.children_low.iter().chain(node.child_rep.iter()) {
                best = best.max(rec(t, c));
            }
            best + 1
        }
        rec(self, self.root)
    }

    /// Preorder traversal of node ids.
    pub fn preorder(&self) -> Vec<u32> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            let node = self.node(id);
            if let Some(rep) = node.child_rep {
                stack.push(rep);
            }
            for &ch in node.children_low.iter().rev() {
                stack.push(ch);
            }
        }
        order
    }

    /// Renumbers the arena so that node ids follow preorder.
    pub fn into_preorder(mut self) -> PartitionTree {
        let order = self.preorder();
        let mut new_id = vec![u32::MAX; self.nodes.len()];
        for (ni, &old) in order.iter().enumerate() {
            new_id[old as usize] = ni as u32;
        }
        let mut nodes: Vec<Option<TreeNode>> = self.nodes.drain(..).map(Some).collect();
        let mut out = Vec::with_capacity(nodes.len());
        for &old in &order {
            let mut node = nodes[old as usize].take().expect("each node moved once");
            for c in &mut node.children_low {
                *c = new_id[*c as usize];
            }
            if let Some(rep) = &mut node.child_rep {
                *rep = new_id[*rep as usize];
            }
            out.push(node);
        }
        PartitionTree {
            nodes: out,
            root: new_id[self.root as usize],
            total_size: self.total_size,
            build_seed: self.build_seed,
            delta: self.delta,
            n: self.n,
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a PointSet,
    n_total: f64,
    delta_node: f64,
    c_rm: f64,
    retries: u32,
    nodes: Vec<TreeNode>,
    total_size: usize,
    seed: u64,
}

impl TreeBuilder<'_> {
    /// Builds the subtree over `ids` (sorted global ids); returns its node id.
    fn build(&mut self, ids: Vec<u32>, path: u64) -> Result<u32, TreeError> {
        let m = ids.len();
        self.total_size += m;
        if m == 1 {
            self.nodes.push(TreeNode {
                points: ids,
                children_low: Vec::new(),
                child_rep: None,
                c_low: Partition::singletons(1),
                c_high: Partition::singletons(1),
                c_rep: Vec::new(),
                r_apx: 0.0,
            });
            return Ok((self.nodes.len() - 1) as u32);
        }

        let local = self.x.gather(&ids);
        let n = self.n_total;
        let node_seed = rng::derive(self.seed, &[LBL_TREE, path]);
        let r_apx = comp_rmed(&local, self.delta_node, node_seed, self.c_rm)?;
        let rounds = (10.0 * (m as f64 / self.delta_node).ln()).ceil() as usize;

        let mut split = None;
        for attempt in 0..self.retries.max(1) {
            let s = rng::derive(node_seed, &[attempt as u64]);
            // fine side: edges capped at r_apx/(10n) so c_low always refines
            // CC(Z, r_apx/(10n)); pairs within r_apx/(1000n³) merge whp
            let r_merge_low = r_apx / (1000.0 * n * n * n);
            let c_low = construct_partition_with(
                &local,
                10.0 * r_merge_low,
                r_apx / (10.0 * n),
                rounds,
                rng::derive(s, &[1]),
            );
            // coarse side: standard parameterization at r_apx
            let c_high = construct_partition_with(
                &local,
                10.0 * r_apx,
                1000.0 * n * n * r_apx,
                rounds,
                rng::derive(s, &[2]),
            );
            let rep_count = c_high.num_blocks();
            let low_ok = c_low.blocks().iter().all(|b| 2 * b.len() <= m);
            let rep_ok = 2 * rep_count <= m;
            if low_ok && rep_ok {
                split = Some((c_low, c_high));
                break;
            }
        }
        let Some((c_low, c_high)) = split else {
            return Err(TreeError::DegenerateSplit { node_size: m, retries: self.retries });
        };

        // representative = smallest global id per coarse block (block members
        // are sorted local indices over sorted ids, so block[0] is smallest)
        let c_rep: Vec<u32> = c_high.blocks().iter().map(|b| ids[b[0] as usize]).collect();

        let mut children_low = Vec::with_capacity(c_low.num_blocks());
        for (bi, block) in c_low.blocks().to_vec().into_iter().enumerate() {
            let child_ids: Vec<u32> = block.iter().map(|&l| ids[l as usize]).collect();
            let child = self.build(child_ids, rng::derive(path, &[3, bi as u64]))?;
            children_low.push(child);
        }
        let mut rep_sorted = c_rep.clone();
        rep_sorted.sort_unstable();
        let child_rep = self.build(rep_sorted, rng::derive(path, &[4]))?;

        self.nodes.push(TreeNode {
            points: ids,
            children_low,
            child_rep: Some(child_rep),
            c_low,
            c_high,
            c_rep,
            r_apx,
        });
        Ok((self.nodes.len() - 1) as u32)
    }
}

/// Builds a partition tree over a deduplicated point set.
pub fn construct_partition_tree(
    x: &PointSet,
    delta: f64,
    seed: u64,
) -> Result<PartitionTree, TreeError> {
    construct_partition_tree_with(x, delta, seed, 0.1, 10.0, 8)
}

pub fn construct_partition_tree_with(
    x: &PointSet,
    delta: f64,
    seed: u64,
    c_prob: f64,
    c_rm: f64,
    retries: u32,
) -> Result<PartitionTree, TreeError> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(TreeError::BadDelta(delta));
    }
    let n = x.n();
    let delta_node = c_prob * delta / ((n * n) as f64).max(1.0);
    let mut b = TreeBuilder {
        x,
        n_total: n as f64,
        delta_node,
        c_rm,
        retries,
        nodes: Vec::new(),
        total_size: 0,
        seed,
    };
    let root = b.build((0..n as u32).collect(), 0)?;
    let t = PartitionTree {
        nodes: b.nodes,
        root,
        total_size: b.total_size,
        build_seed: seed,
        delta,
        n,
    };
    // canonical preorder numbering: everything downstream keys per-node
    // randomness by node id, so the id assignment must survive a
    // serialization round trip
    Ok(t.into_preorder())
}

/// Exact-oracle validation of every node invariant; returns a description of
/// the first violation. O(Σ|Z|²·d) — test sized.
pub fn validate_tree(t: &PartitionTree, x: &PointSet) -> Result<(), String> {
    let n = t.n as f64;
    for (id, node) in t.nodes.iter().enumerate() {
        let m = node.points.len();
        if node.is_leaf() != (node.child_rep.is_none() && node.children_low.is_empty()) {
            return Err(format!("node {id}: leaf structure mismatch"));
        }
        if node.is_leaf() {
            continue;
        }
        let local = x.gather(&node.points);
        let r_apx = node.r_apx;
        let rme = r_med_exact(&local).map_err(|e| e.to_string())?;
        if !(rme <= r_apx && r_apx <= m as f64 * rme + 1e-12 * r_apx.abs()) {
            return Err(format!(
                "node {id}: r_apx {r_apx} outside [r_med, |Z|·r_med] = [{rme}, {}]",
                m as f64 * rme
            ));
        }
        // refinement chain against the exact components
        let cc = |r: f64| connected_components(&local, r);
        for (ok, what) in [
            (refines(&cc(1000.0 * n * n * r_apx), &node.c_high), "CC(1000n²r) ⊑ c_high"),
            (refines(&node.c_high, &cc(r_apx)), "c_high ⊑ CC(r)"),
            (refines(&cc(r_apx / (10.0 * n)), &node.c_low), "CC(r/10n) ⊑ c_low"),
            (refines(&node.c_low, &cc(r_apx / (1000.0 * n * n * n))), "c_low ⊑ CC(r/1000n³)"),
        ] {
            if !ok.map_err(|e| e.to_string())? {
                return Err(format!("node {id}: refinement {what} fails"));
            }
        }
        // exactly one representative per coarse block
        if node.c_rep.len() != node.c_high.num_blocks() {
            return Err(format!("node {id}: representative count mismatch"));
        }
        for (b, &rep) in node.c_high.blocks().iter().zip(&node.c_rep) {
            let local_ids: Vec<u32> = b.iter().map(|&l| node.points[l as usize]).collect();
            if !local_ids.contains(&rep) {
                return Err(format!("node {id}: representative outside its block"));
            }
        }
        // child sizes halve
        for (&c, blk) in node.children_low.iter().zip(node.c_low.blocks()) {
            if t.node(c).points.len() != blk.len() || 2 * blk.len() > m {
                return Err(format!("node {id}: fine child size violation"));
            }
        }
        if 2 * node.c_rep.len() > m {
            return Err(format!("node {id}: representative child size violation"));
        }
    }
    // recursive size identity
    fn size_of(t: &PartitionTree, id: u32) -> usize {
        let nd = t.node(id);
        nd.points.len()
            + nd.children_low
                .iter()
                .chain(nd.child_rep.iter())
                .map(|&c| size_of(t, c))
                .sum::<usize>()
    }
    let rec = size_of(t, t.root);
    if rec != t.total_size {
        return Err(format!("total_size {} != recursive size {rec}", t.total_size));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::brute_nearest;
    use proptest::prelude::*;

    #[test]
    fn rmed_rounds_on_line_example() {
        let z = PointSet::on_line(&[0.0, 1.0, 2.0, 10.0]);
        let rounds = comp_rmed_rounds(&z, 0.1, 7, 10.0).unwrap();
        // anchor medians are 1, 1, 1, 8 (2nd-smallest including self)
        for v in &rounds {
            assert!(*v == 1.0 || *v == 8.0, "unexpected round value {v}");
        }
        let est = comp_rmed(&z, 0.1, 7, 10.0).unwrap();
        assert!((1.0..=8.0).contains(&est));
        assert_eq!(est, 1.0); // 24 rounds all landing on the far anchor is hopeless
        assert!(est >= r_med_exact(&z).unwrap());
    }

    #[test]
    fn rmed_deterministic_and_errors() {
        let z = PointSet::on_line(&[0.0, 3.0, 4.0]);
        let a = comp_rmed(&z, 0.05, 3, 10.0).unwrap();
        let b = comp_rmed(&z, 0.05, 3, 10.0).unwrap();
        assert_eq!(a, b);
        let single = PointSet::on_line(&[1.0]);
        assert!(matches!(comp_rmed(&single, 0.1, 0, 10.0), Err(TreeError::TooFewPoints)));
    }

    proptest! {
        #[test]
        fn rmed_never_below_exact(
            coords in proptest::collection::vec(-100.0f64..100.0, 2..40),
            seed in 0u64..500,
        ) {
            let z = PointSet::on_line(&coords);
            let est = comp_rmed(&z, 0.1, seed, 10.0).unwrap();
            prop_assert!(est >= r_med_exact(&z).unwrap());
        }
    }

    #[test]
    fn partition_edges_respect_filter() {
        // output refines the exact components at the ν radius, always
        let mut r = rng::stream(1, &[50]);
        for trial in 0..20 {
            let n = 30;
            let coords: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
            let z = PointSet::on_line(&coords);
            let radius = r.random_range(0.01..5.0);
            let p = construct_partition(&z, radius, 0.1, trial);
            let nu = 1000.0 * (n * n) as f64 * radius;
            assert!(refines(&connected_components(&z, nu), &p).unwrap());
        }
    }

    #[test]
    fn partition_merges_close_pair() {
        let z = PointSet::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let ok = (0..100)
            .filter(|&s| construct_partition(&z, 1.0, 0.1, s).same_block(0, 1))
            .count();
        assert!(ok >= 90, "close pair co-blocked only {ok}/100 runs");
    }

    #[test]
    fn partition_keeps_far_clusters_apart() {
        // two tight clusters separated by 10⁴·n²·r stay in separate blocks
        let n = 8;
        let r = 1.0;
        let sep = 1e4 * (n * n) as f64 * r;
        let mut rows = Vec::new();
        for i in 0..n / 2 {
            rows.push(vec![i as f64 * 0.1, 0.0]);
            rows.push(vec![sep + i as f64 * 0.1, 0.0]);
        }
        let z = PointSet::from_rows(&rows).unwrap();
        let exact = connected_components(&z, 1000.0 * (n * n) as f64 * r);
        assert_eq!(exact.num_blocks(), 2);
        for s in 0..100 {
            let p = construct_partition(&z, r, 0.1, s);
            assert!(refines(&exact, &p).unwrap());
            assert!(p.num_blocks() >= 2);
        }
    }

    #[test]
    fn refines_examples() {
        let a = Partition::from_blocks(vec![vec![0, 1], vec![2]], 3).unwrap();
        assert!(refines(&a, &a).unwrap());
        let one = Partition::from_blocks(vec![vec![0, 1, 2]], 3).unwrap();
        let singles = Partition::singletons(3);
        assert!(refines(&one, &singles).unwrap());
        let b = Partition::from_blocks(vec![vec![0], vec![1, 2]], 3).unwrap();
        assert!(!refines(&a, &b).unwrap());
        let other = Partition::singletons(4);
        assert!(refines(&a, &other).is_err());
    }

    #[test]
    fn tree_single_point() {
        let x = PointSet::on_line(&[2.5]);
        let t = construct_partition_tree(&x, 0.1, 0).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.total_size, 1);
        assert!(t.node(t.root).is_leaf());
    }

    #[test]
    fn tree_two_points() {
        let x = PointSet::on_line(&[0.0, 5.0]);
        let t = construct_partition_tree(&x, 0.1, 1).unwrap();
        let root = t.node(t.root);
        assert!((5.0..=10.0).contains(&root.r_apx));
        assert_eq!(root.children_low.len(), 2);
        for &c in &root.children_low {
            assert!(t.node(c).is_leaf());
        }
        let rep = t.node(root.child_rep.unwrap());
        assert_eq!(rep.points.len(), 1);
        validate_tree(&t, &x).unwrap();
    }

    #[test]
    fn tree_random_sets_validate() {
        let mut r = rng::stream(3, &[77]);
        for trial in 0..10 {
            let n = r.random_range(3..60);
            let d = r.random_range(1..4usize);
            let mut rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| r.random_range(-50.0..50.0)).collect())
                .collect();
            // splash in a tight cluster so scales vary
            for i in 0..n / 3 {
                rows[i] = (0..d).map(|_| r.random_range(-0.01..0.01)).collect();
            }
            let x0 = PointSet::from_rows(&rows).unwrap();
            let (x, _, _) = x0.dedup();
            let t = construct_partition_tree(&x, 0.1, trial).unwrap();
            validate_tree(&t, &x).unwrap();
            let lg = (x.n() as f64).log2().max(1.0);
            assert!(t.total_size as f64 <= 4.0 * x.n() as f64 * lg + 1e-9);
            assert!(t.depth() <= (x.n() as f64).log2().ceil() as usize + 1);
        }
    }

    #[test]
    fn tree_deterministic() {
        let mut r = rng::stream(9, &[78]);
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| vec![r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
        let x = PointSet::from_rows(&rows).unwrap();
        let a = construct_partition_tree(&x, 0.1, 42).unwrap();
        let b = construct_partition_tree(&x, 0.1, 42).unwrap();
        assert_eq!(a.nodes.len(), b.nodes.len());
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(na.points, nb.points);
            assert_eq!(na.r_apx, nb.r_apx);
            assert_eq!(na.c_rep, nb.c_rep);
        }
    }

    #[test]
    fn tree_fine_children_cover_node() {
        let mut r = rng::stream(11, &[79]);
        let rows: Vec<Vec<f64>> =
            (0..40).map(|_| vec![r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
        let x = PointSet::from_rows(&rows).unwrap();
        let t = construct_partition_tree(&x, 0.1, 5).unwrap();
        for node in &t.nodes {
            if node.is_leaf() {
                continue;
            }
            let mut covered: Vec<u32> = node
                .children_low
                .iter()
                .flat_map(|&c| t.node(c).points.iter().copied())
                .collect();
            covered.sort_unstable();
            assert_eq!(covered, node.points);
            let q = x.point(node.points[0] as usize);
            let (nn, _) = brute_nearest(&x.gather(&node.points), q);
            assert!(nn < node.points.len());
        }
    }
}
