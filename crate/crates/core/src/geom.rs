//! Dense point-set primitives and exact reference oracles.
//!
//! Everything here is O(n²d) or worse and exists as ground truth: exact
//! connected components of the r-neighborhood graph, the exact median
//! radius, exact nearest neighbor, and the lifted direction vectors the
//! separation oracles are built from. The scalable counterparts live in
//! `tree`, `ann`, and `embed` and are tested against these.

use crate::sketch::Sketch;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point set must be non-empty")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("row {0} has length {1}, expected {2}")]
    RaggedRow(usize, usize, usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("r_med undefined for a single point")]
    RMedSinglePoint,
    #[error("zero direction")]
    ZeroDirection,
    #[error("partitions are over different ground sets ({0} vs {1})")]
    GroundSetMismatch(usize, usize),
}

/// An immutable set of n points in R^d, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, d: usize) -> Result<Self, GeomError> {
        if d == 0 {
            return Err(GeomError::ZeroDim);
        }
        if data.is_empty() || data.len() % d != 0 {
            return Err(GeomError::Empty);
        }
        let n = data.len() / d;
        for (i, chunk) in data.chunks_exact(d).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(GeomError::NonFinite(i));
            }
        }
        Ok(PointSet { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GeomError> {
        let d = rows.first().map(|r| r.len()).ok_or(GeomError::Empty)?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(GeomError::RaggedRow(i, r.len(), d));
            }
            data.extend_from_slice(r);
        }
        PointSet::new(data, d)
    }

    /// 1-d convenience constructor used throughout the tests.
    pub fn on_line(coords: &[f64]) -> Self {
        PointSet::new(coords.to_vec(), 1).expect("valid 1-d point set")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Gathers a subset into a fresh point set.
    pub fn gather(&self, ids: &[u32]) -> PointSet {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            data.extend_from_slice(self.point(i as usize));
        }
        PointSet { data, n: ids.len(), d: self.d }
    }

    /// Removes coincident duplicates, returning the reduced set, the kept
    /// original indices, and a map original index → reduced index. Exact
    /// bitwise coordinate equality; the first occurrence is kept.
    pub fn dedup(&self) -> (PointSet, Vec<u32>, Vec<u32>) {
        use std::collections::HashMap;
        let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut kept = Vec::new();
        let mut remap = vec![0u32; self.n];
        for i in 0..self.n {
            let key: Vec<u64> = self.point(i).iter().map(|v| v.to_bits()).collect();
            match seen.get(&key) {
                Some(&u) => remap[i] = u,
                None => {
                    let u = kept.len() as u32;
                    seen.insert(key, u);
                    kept.push(i as u32);
                    remap[i] = u;
                }
            }
        }
        let reduced = self.gather(&kept);
        (reduced, kept, remap)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        let t = a[i] - b[i];
        s += t * t;
    }
    s
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Union-find with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    max_size: u32,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            max_size: if n == 0 { 0 } else { 1 },
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.rank[ra as usize] < self.rank[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.max_size = self.max_size.max(self.size[ra as usize]);
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[ra as usize] += 1;
        }
        true
    }

    pub fn max_component(&self) -> u32 {
        self.max_size
    }

    /// Extracts the partition induced by the current components.
    pub fn into_partition(mut self) -> Partition {
        let n = self.parent.len();
        let mut blocks_by_root: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
        for i in 0..n as u32 {
            let r = self.find(i);
            blocks_by_root.entry(r).or_default().push(i);
        }
        Partition::from_blocks(blocks_by_root.into_values().collect(), n)
            .expect("components form a partition")
    }
}

/// A partition of {0, …, n−1} into disjoint nonempty blocks.
///
/// Blocks are stored with sorted members and ordered by smallest member, so
/// equal partitions compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<u32>>,
    block_of: Vec<u32>,
}

impl Partition {
    pub fn from_blocks(mut blocks: Vec<Vec<u32>>, n: usize) -> Result<Self, GeomError> {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![u32::MAX; n];
        let mut covered = 0usize;
        for (bi, b) in blocks.iter().enumerate() {
            for &i in b {
                if (i as usize) >= n || block_of[i as usize] != u32::MAX {
                    return Err(GeomError::GroundSetMismatch(n, i as usize));
                }
                block_of[i as usize] = bi as u32;
                covered += 1;
            }
        }
        if covered != n {
            return Err(GeomError::GroundSetMismatch(n, covered));
        }
        Ok(Partition { blocks, block_of })
    }

    pub fn singletons(n: usize) -> Self {
        Partition::from_blocks((0..n as u32).map(|i| vec![i]).collect(), n).unwrap()
    }

    pub fn ground_size(&self) -> usize {
        self.block_of.len()
    }
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }
    #[inline]
    pub fn block_of(&self, i: u32) -> u32 {
        self.block_of[i as usize]
    }
    pub fn same_block(&self, i: u32, j: u32) -> bool {
        self.block_of(i) == self.block_of(j)
    }
    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).max().unwrap_or(0)
    }
}

/// Exact connected components of the graph with edges {(i,j): ‖xᵢ−xⱼ‖ ≤ r}.
///
/// O(n²d); reference oracle for tests and small nodes only.
pub fn connected_components(x: &PointSet, r: f64) -> Partition {
    let n = x.n();
    let mut uf = UnionFind::new(n);
    let r2 = r * r;
    for i in 0..n {
        let pi = x.point(i);
        for j in (i + 1)..n {
            if dist2(pi, x.point(j)) <= r2 {
                uf.union(i as u32, j as u32);
            }
        }
    }
    uf.into_partition()
}

/// Smallest pairwise distance r at which some component of the r-graph
/// reaches size max(2, ⌈n/2⌉). Exact sweep over sorted pairwise distances.
///
/// The size threshold is lifted from ⌈n/2⌉ to at least 2 so that n = 2 does
/// not degenerate to radius 0 (a singleton is trivially half of n = 2).
pub fn r_med_exact(x: &PointSet) -> Result<f64, GeomError> {
    let n = x.n();
    if n < 2 {
        return Err(GeomError::RMedSinglePoint);
    }
    let threshold = 2.max(n.div_ceil(2)) as u32;
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((dist(x.point(i), x.point(j)), i as u32, j as u32));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut uf = UnionFind::new(n);
    let mut idx = 0;
    while idx < pairs.len() {
        let d = pairs[idx].0;
        // merge every edge at this distance before checking the threshold
        while idx < pairs.len() && pairs[idx].0 == d {
            uf.union(pairs[idx].1, pairs[idx].2);
            idx += 1;
        }
        if uf.max_component() >= threshold {
            return Ok(d);
        }
    }
    unreachable!("all points connect at the maximum pairwise distance");
}

/// A unit vector in R^{d+k} pairing a spatial direction with its sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDirection(Vec<f64>);

impl LiftedDirection {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
    pub fn neg(&self) -> LiftedDirection {
        LiftedDirection(self.0.iter().map(|v| -v).collect())
    }

    fn normalize(mut v: Vec<f64>) -> Result<Self, GeomError> {
        let nrm = norm(&v);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(GeomError::ZeroDirection);
        }
        for c in &mut v {
            *c /= nrm;
        }
        Ok(LiftedDirection(v))
    }
}

/// The unit vector (y−z, Π(y−z))/‖·‖.
pub fn lifted_direction(y: &[f64], z: &[f64], pi: &Sketch) -> Result<LiftedDirection, GeomError> {
    let mut v = sub(y, z);
    if v.iter().all(|&c| c == 0.0) {
        return Err(GeomError::ZeroDirection);
    }
    let proj = pi.apply(&v);
    v.extend_from_slice(&proj);
    LiftedDirection::normalize(v)
}

/// The unit vector (q−y, −(v−Πy))/‖·‖ used on the query side.
pub fn lifted_query(q: &[f64], y: &[f64], v: &[f64], pi: &Sketch) -> Result<LiftedDirection, GeomError> {
    let mut out = sub(q, y);
    let py = pi.apply(y);
    out.extend(v.iter().zip(&py).map(|(vi, pyi)| -(vi - pyi)));
    LiftedDirection::normalize(out)
}

/// Exact nearest neighbor; ties break to the smallest index.
pub fn brute_nearest(x: &PointSet, q: &[f64]) -> (usize, f64) {
    assert_eq!(x.d(), q.len(), "query dimension mismatch");
    let mut best = (0usize, f64::INFINITY);
    for i in 0..x.n() {
        let d2 = dist2(x.point(i), q);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blocks_of(p: &Partition) -> Vec<Vec<u32>> {
        p.blocks().to_vec()
    }

    #[test]
    fn cc_line_example() {
        let x = PointSet::on_line(&[0.0, 1.0, 3.0]);
        let p = connected_components(&x, 1.0);
        assert_eq!(blocks_of(&p), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn cc_zero_radius_distinct_points() {
        let x = PointSet::on_line(&[0.0, 1.0, 3.0, 7.0]);
        let p = connected_components(&x, 0.0);
        assert_eq!(p.num_blocks(), 4);
    }

    #[test]
    fn cc_single_point() {
        let x = PointSet::on_line(&[5.0]);
        let p = connected_components(&x, 2.0);
        assert_eq!(blocks_of(&p), vec![vec![0]]);
    }

    #[test]
    fn cc_coincident_points_merge_at_zero() {
        let x = PointSet::on_line(&[1.0, 1.0, 4.0]);
        let p = connected_components(&x, 0.0);
        assert_eq!(blocks_of(&p), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn r_med_line_example() {
        let x = PointSet::on_line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(r_med_exact(&x).unwrap(), 1.0);
    }

    #[test]
    fn r_med_two_points_uses_lifted_threshold() {
        let x = PointSet::on_line(&[0.0, 5.0]);
        assert_eq!(r_med_exact(&x).unwrap(), 5.0);
    }

    #[test]
    fn r_med_coincident_is_zero() {
        let x = PointSet::on_line(&[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(r_med_exact(&x).unwrap(), 0.0);
    }

    #[test]
    fn r_med_single_point_errors() {
        let x = PointSet::on_line(&[0.0]);
        assert!(matches!(r_med_exact(&x), Err(GeomError::RMedSinglePoint)));
    }

    #[test]
    fn lifted_direction_forced_arithmetic() {
        let pi = Sketch::identity(1);
        let v = lifted_direction(&[3.0], &[0.0], &pi).unwrap();
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((v.as_slice()[0] - inv_sqrt2).abs() < 1e-15);
        assert!((v.as_slice()[1] - inv_sqrt2).abs() < 1e-15);
    }

    #[test]
    fn lifted_direction_zero_errors() {
        let pi = Sketch::identity(2);
        assert!(matches!(
            lifted_direction(&[1.0, 2.0], &[1.0, 2.0], &pi),
            Err(GeomError::ZeroDirection)
        ));
    }

    #[test]
    fn lifted_query_zero_errors() {
        let pi = Sketch::identity(2);
        let y = [1.0, 2.0];
        let py = pi.apply(&y);
        assert!(matches!(lifted_query(&y, &y, &py, &pi), Err(GeomError::ZeroDirection)));
    }

    #[test]
    fn lifted_query_sketch_block_vanishes() {
        let pi = Sketch::identity(2);
        let y = [1.0, 0.0];
        let q = [4.0, 4.0];
        let v = pi.apply(&y); // v = Πy
        let lv = lifted_query(&q, &y, &v, &pi).unwrap();
        let qy = sub(&q, &y);
        let nq = norm(&qy);
        assert!((lv.as_slice()[0] - qy[0] / nq).abs() < 1e-15);
        assert!((lv.as_slice()[1] - qy[1] / nq).abs() < 1e-15);
        assert_eq!(lv.as_slice()[2], 0.0);
        assert_eq!(lv.as_slice()[3], 0.0);
    }

    #[test]
    fn brute_nearest_member_and_tie() {
        let x = PointSet::on_line(&[0.0, 10.0]);
        assert_eq!(brute_nearest(&x, &[10.0]), (1, 0.0));
        let (i, d) = brute_nearest(&x, &[4.0]);
        assert_eq!(i, 0);
        assert!((d - 4.0).abs() < 1e-15);
        // exact tie breaks to the smaller index
        let (i, _) = brute_nearest(&x, &[5.0]);
        assert_eq!(i, 0);
    }

    #[test]
    fn dedup_remaps_duplicates() {
        let x = PointSet::on_line(&[1.0, 2.0, 1.0, 3.0, 2.0]);
        let (u, kept, remap) = x.dedup();
        assert_eq!(u.n(), 3);
        assert_eq!(kept, vec![0, 1, 3]);
        assert_eq!(remap, vec![0, 1, 0, 2, 1]);
    }

    proptest! {
        #[test]
        fn lifted_direction_unit_and_antisymmetric(
            y in proptest::collection::vec(-10.0f64..10.0, 4),
            z in proptest::collection::vec(-10.0f64..10.0, 4),
            seed in 0u64..1000,
        ) {
            prop_assume!(y != z);
            let pi = Sketch::sample(4, 3, seed);
            let a = lifted_direction(&y, &z, &pi).unwrap();
            let b = lifted_direction(&z, &y, &pi).unwrap();
            prop_assert!((norm(a.as_slice()) - 1.0).abs() < 1e-12);
            for (u, w) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((u + w).abs() < 1e-12);
            }
        }

        #[test]
        fn lifted_query_unit(
            q in proptest::collection::vec(-10.0f64..10.0, 3),
            y in proptest::collection::vec(-10.0f64..10.0, 3),
            v in proptest::collection::vec(-10.0f64..10.0, 2),
            seed in 0u64..1000,
        ) {
            let pi = Sketch::sample(3, 2, seed);
            if let Ok(l) = lifted_query(&q, &y, &v, &pi) {
                prop_assert!((norm(l.as_slice()) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn cc_monotone_in_radius(
            coords in proptest::collection::vec(-50.0f64..50.0, 2..40),
            r1 in 0.0f64..20.0,
            r2 in 0.0f64..20.0,
        ) {
            let x = PointSet::on_line(&coords);
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let fine = connected_components(&x, lo);
            let coarse = connected_components(&x, hi);
            // increasing the radius only merges blocks
            for b in fine.blocks() {
                let target = coarse.block_of(b[0]);
                prop_assert!(b.iter().all(|&i| coarse.block_of(i) == target));
            }
        }

        #[test]
        fn brute_nearest_matches_naive_scan(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 1..30),
            q in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let x = PointSet::from_rows(&rows).unwrap();
            let (i, d) = brute_nearest(&x, &q);
            let mut best = f64::INFINITY;
            for j in 0..x.n() {
                let dj = dist(x.point(j), &q);
                if dj < best { best = dj; }
            }
            prop_assert!((d - best).abs() <= 1e-12 * (1.0 + best));
            prop_assert!((dist(x.point(i), &q) - best).abs() <= 1e-12 * (1.0 + best));
        }

        #[test]
        fn sign_pair_identity(
            a in proptest::collection::vec(-1.0f64..1.0, 5),
            b in proptest::collection::vec(-1.0f64..1.0, 5),
            c in 0.0f64..1.0,
        ) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let u: Vec<f64> = a.iter().map(|v| v / norm(&a)).collect();
            let w: Vec<f64> = b.iter().map(|v| v / norm(&b)).collect();
            // |⟨u,w⟩| ≤ c  ⟺  ‖u−w‖² ≥ 2−2c and ‖u+w‖² ≥ 2−2c, for unit u, w
            let ip = dot(&u, &w).abs();
            let minus = dist2(&u, &w);
            let plus: f64 = u.iter().zip(&w).map(|(x, y)| (x + y) * (x + y)).sum();
            let lhs = ip <= c;
            let rhs = minus >= 2.0 - 2.0 * c - 1e-12 && plus >= 2.0 - 2.0 * c - 1e-12;
            if lhs {
                prop_assert!(rhs);
            }
            if minus >= 2.0 - 2.0 * c + 1e-12 && plus >= 2.0 - 2.0 * c + 1e-12 {
                prop_assert!(ip <= c + 1e-9);
            }
        }
    }
}
