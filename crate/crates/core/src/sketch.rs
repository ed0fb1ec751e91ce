//! Gaussian sketches and distortion certification.
//!
//! A sketch is a k×d matrix with i.i.d. N(0, 1/k) entries. Before an index
//! is built on a sketch, the pairwise distortion over the terminal set is
//! measured exactly, and the hull distortion is estimated by sampling convex
//! combinations of normalized differences (the universal quantifier over the
//! hull is not checkable, so the sampler stands in for it).

use crate::geom::{dist, dot, norm, sub, PointSet};
use crate::rng::{self, LBL_SKETCH};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("sketch certification failed after {retries} resamples: pair distortion {best:.4} > ε = {eps}")]
    CertificationFailed { retries: u32, best: f64, eps: f64 },
}

/// A k×d linear sketch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    mat: Vec<f64>,
    k: usize,
    d: usize,
    seed: u64,
    identity: bool,
}

impl Sketch {
    /// Samples i.i.d. N(0, 1/k) entries; the same seed reproduces the same
    /// matrix bit for bit.
    pub fn sample(d: usize, k: usize, seed: u64) -> Sketch {
        assert!(d >= 1 && k >= 1);
        let mut r = rng::stream(seed, &[LBL_SKETCH]);
        let scale = 1.0 / (k as f64).sqrt();
        let mat = (0..k * d)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut r);
                g * scale
            })
            .collect();
        Sketch { mat, k, d, seed, identity: false }
    }

    /// The d×d identity, used when the requested row count reaches d: a
    /// genuine Gaussian at k ≥ d cannot beat an exact isometry.
    pub fn identity(d: usize) -> Sketch {
        assert!(d >= 1);
        let mut mat = vec![0.0; d * d];
        for i in 0..d {
            mat[i * d + i] = 1.0;
        }
        Sketch { mat, k: d, d, seed: 0, identity: true }
    }

    /// Wraps an explicit matrix.
    pub fn from_matrix(mat: Vec<f64>, k: usize, d: usize) -> Sketch {
        assert_eq!(mat.len(), k * d);
        Sketch { mat, k, d, seed: 0, identity: false }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }
    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn is_identity(&self) -> bool {
        self.identity
    }
    pub fn matrix(&self) -> &[f64] {
        &self.mat
    }
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.mat[i * self.d..(i + 1) * self.d]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.k);
        if self.identity {
            out.copy_from_slice(x);
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// Π(x−y) without materializing the difference.
    pub fn apply_diff(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let diff = sub(x, y);
        self.apply(&diff)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.mat)
    }

    /// ΠᵀΠ, row-major d×d.
    pub fn gram(&self) -> Vec<f64> {
        let (k, d) = (self.k, self.d);
        let mut g = vec![0.0; d * d];
        for r in 0..k {
            let row = self.row(r);
            for a in 0..d {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                let dst = &mut g[a * d..(a + 1) * d];
                for (b, v) in dst.iter_mut().enumerate() {
                    *v += ra * row[b];
                }
            }
        }
        g
    }

    /// Projects every point of a set, row-major (n×k).
    pub fn project_all(&self, x: &PointSet) -> Vec<f64> {
        let mut out = vec![0.0; x.n() * self.k];
        out.par_chunks_mut(self.k)
            .zip((0..x.n()).into_par_iter())
            .for_each(|(row, i)| self.apply_into(x.point(i), row));
        out
    }
}

/// max over distinct pairs of |‖Π(x−y)‖/‖x−y‖ − 1|. Exact; coincident pairs
/// are skipped. Tall sketches (k > d) go through the d×d Gram of Π so each
/// pair costs O(d²) instead of O(kd).
pub fn pair_distortion(pi: &Sketch, x: &PointSet) -> f64 {
    assert!(x.n() >= 2);
    let d = x.d();
    let gram = if pi.k() > d { Some(pi.gram()) } else { None };
    (0..x.n())
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            let mut diff = vec![0.0; d];
            for j in (i + 1)..x.n() {
                let dij = dist(x.point(i), x.point(j));
                if dij == 0.0 {
                    continue;
                }
                let pd = match &gram {
                    Some(g) => {
                        for (t, (a, b)) in x.point(i).iter().zip(x.point(j)).enumerate() {
                            diff[t] = a - b;
                        }
                        quadratic_form(g, &diff).max(0.0).sqrt()
                    }
                    None => norm(&pi.apply_diff(x.point(i), x.point(j))),
                };
                worst = worst.max((pd / dij - 1.0).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[inline]
fn quadratic_form(g: &[f64], z: &[f64]) -> f64 {
    let d = z.len();
    let mut s = 0.0;
    for a in 0..d {
        let za = z[a];
        if za == 0.0 {
            continue;
        }
        let row = &g[a * d..(a + 1) * d];
        s += za * dot(row, z);
    }
    s
}

/// Outcome of the sampled hull-distortion check.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    /// Max violation over pure normalized differences (deterministic part).
    pub max_pair_violation: f64,
    /// Max |‖Πz‖ − ‖z‖| over the sampled convex combinations.
    pub max_sampled_hull_violation: f64,
    /// Number of sampled combinations (pure differences and the origin are
    /// extra deterministic samples on top).
    pub samples: usize,
    /// How many sampled combinations exceeded the ε passed in (0 when no
    /// threshold was given).
    pub violations_over_eps: usize,
}

/// Estimates hull distortion: each sample mixes up to min(50, n(n−1)) random
/// normalized differences with Dirichlet(1) weights and random signs and
/// records |‖Πz‖ − ‖z‖|. Pure differences and the origin are always included
/// deterministically. `eps` only feeds the violation counter.
pub fn sampled_hull_distortion(
    pi: &Sketch,
    x: &PointSet,
    samples: usize,
    seed: u64,
    eps: f64,
) -> DistortionReport {
    assert!(x.n() >= 2 && samples >= 1);
    let n = x.n();
    let d = x.d();
    let k = pi.k();

    // Gram of the sketch lets each sample cost O(m·d + d²) instead of O(k·d)
    // when k is large.
    let use_gram = k > d;
    let gram: Vec<f64> = if use_gram { pi.gram() } else { Vec::new() };
    let sketch_norm = |z: &[f64]| -> f64 {
        if use_gram {
            quadratic_form(&gram, z).max(0.0).sqrt()
        } else {
            norm(&pi.apply(z))
        }
    };

    // Deterministic part: all pure differences (each is a degenerate convex
    // combination) and the origin.
    let max_pair_violation = pair_distortion(pi, x);
    let mut max_hull = 0.0f64; // origin contributes exactly 0

    let m = 50.min(n * (n - 1));
    let per_sample: Vec<(f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, &[LBL_SKETCH, 0x68756c6c, s as u64]);
            let mut z = vec![0.0; d];
            let mut weights = Vec::with_capacity(m);
            let mut total = 0.0;
            for _ in 0..m {
                let w: f64 = Exp1.sample(&mut r);
                weights.push(w);
                total += w;
            }
            for &w in &weights {
                let wi = w / total;
                // random ordered pair of distinct, non-coincident points
                let (a, b) = loop {
                    let a = r.random_range(0..n);
                    let b = r.random_range(0..n);
                    if a != b && dist(x.point(a), x.point(b)) > 0.0 {
                        break (a, b);
                    }
                };
                let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                let dv = sub(x.point(a), x.point(b));
                let dn = norm(&dv);
                for (zi, di) in z.iter_mut().zip(&dv) {
                    *zi += sign * wi * di / dn;
                }
            }
            let viol = (sketch_norm(&z) - norm(&z)).abs();
            (viol, viol > eps)
        })
        .collect();

    let mut violations = 0usize;
    for (v, over) in per_sample {
        max_hull = max_hull.max(v);
        if over {
            violations += 1;
        }
    }
    max_hull = max_hull.max(max_pair_violation);

    DistortionReport {
        max_pair_violation,
        max_sampled_hull_violation: max_hull,
        samples,
        violations_over_eps: violations,
    }
}

/// |⟨Πx, Πy⟩ − ⟨x, y⟩|, unnormalized.
pub fn inner_product_defect(pi: &Sketch, x: &[f64], y: &[f64]) -> f64 {
    (dot(&pi.apply(x), &pi.apply(y)) - dot(x, y)).abs()
}

/// Samples and certifies a sketch: resamples with fresh seeds until the
/// exact pairwise distortion is ≤ ε, up to `retries` attempts. When the
/// requested row count reaches d the identity sketch is used (distortion 0).
/// Returns the sketch and its measured pairwise distortion.
pub fn certify_sketch(
    x: &PointSet,
    eps: f64,
    k: usize,
    retries: u32,
    seed: u64,
) -> Result<(Sketch, f64), SketchError> {
    if k >= x.d() {
        return Ok((Sketch::identity(x.d()), 0.0));
    }
    let mut best = f64::INFINITY;
    for attempt in 0..retries.max(1) {
        let pi = Sketch::sample(x.d(), k, rng::derive(seed, &[LBL_SKETCH, attempt as u64]));
        let pd = pair_distortion(&pi, x);
        if pd <= eps {
            return Ok((pi, pd));
        }
        best = best.min(pd);
    }
    Err(SketchError::CertificationFailed { retries, best, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::norm2;

    fn grid_points(n: usize, d: usize, seed: u64) -> PointSet {
        let mut r = rng::stream(seed, &[99]);
        let data: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
        PointSet::new(data, d).unwrap()
    }

    #[test]
    fn sample_shape_and_determinism() {
        let a = Sketch::sample(7, 3, 11);
        assert_eq!(a.k(), 3);
        assert_eq!(a.d(), 7);
        assert_eq!(a.matrix().len(), 21);
        let b = Sketch::sample(7, 3, 11);
        assert_eq!(a.matrix(), b.matrix()); // bitwise
        let c = Sketch::sample(7, 3, 12);
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn sketch_column_norm_mean_near_one() {
        // mean of ‖Πe₁‖² over many seeds ≈ 1 (χ²_k/k has mean 1)
        let mut e1 = vec![0.0; 4];
        e1[0] = 1.0;
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|s| norm2(&Sketch::sample(4, 6, s as u64).apply(&e1)))
            .sum::<f64>()
            / trials as f64;
        assert!((0.95..=1.05).contains(&mean), "mean {mean}");
    }

    #[test]
    fn pair_distortion_identity_zero() {
        let x = grid_points(10, 4, 0);
        assert_eq!(pair_distortion(&Sketch::identity(4), &x), 0.0);
    }

    #[test]
    fn pair_distortion_doubling_is_one() {
        let mut mat = vec![0.0; 16];
        for i in 0..4 {
            mat[i * 4 + i] = 2.0;
        }
        let pi = Sketch::from_matrix(mat, 4, 4);
        let x = grid_points(10, 4, 1);
        assert!((pair_distortion(&pi, &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_distortion_random_sketch_calibration() {
        // n = 256, d = 64, ε = 0.25, k = ⌈8 ε⁻² ln n⌉: distortion ≤ ε on at
        // least 95 of 100 seeds. (k > d here, so each draw is genuinely
        // Gaussian of shape k×d and concentrates hard.)
        let x = grid_points(256, 64, 7);
        let k = (8.0 * 0.25f64.powi(-2) * 256f64.ln()).ceil() as usize;
        let ok = (0..100u64)
            .filter(|&s| pair_distortion(&Sketch::sample(64, k, s), &x) <= 0.25)
            .count();
        assert!(ok >= 95, "only {ok}/100 seeds certified");
    }

    #[test]
    fn hull_identity_zero() {
        let x = grid_points(8, 3, 2);
        let rep = sampled_hull_distortion(&Sketch::identity(3), &x, 50, 0, 0.1);
        assert_eq!(rep.max_sampled_hull_violation, 0.0);
        assert_eq!(rep.violations_over_eps, 0);
    }

    #[test]
    fn hull_max_dominates_pair_distortion() {
        // pure differences are included deterministically, so the reported
        // hull max is at least the exact pair distortion
        let x = grid_points(12, 5, 3);
        let pi = Sketch::sample(5, 3, 4);
        let rep = sampled_hull_distortion(&pi, &x, 20, 5, 1.0);
        assert!(rep.max_sampled_hull_violation >= rep.max_pair_violation);
        assert!((rep.max_pair_violation - pair_distortion(&pi, &x)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_combination_reduces_to_pair() {
        // a single difference with weight 1 is exactly a pure difference,
        // whose violation the deterministic part already records
        let x = PointSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let pi = Sketch::sample(2, 1, 9);
        let rep = sampled_hull_distortion(&pi, &x, 10, 0, 10.0);
        let u = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let expect = (norm(&pi.apply(&u)) - 1.0).abs();
        assert!((rep.max_pair_violation - expect).abs() < 1e-12);
    }

    #[test]
    fn ip_defect_identity_and_zero() {
        let pi = Sketch::identity(3);
        assert_eq!(inner_product_defect(&pi, &[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 0.0);
        let pi2 = Sketch::sample(3, 2, 1);
        assert_eq!(inner_product_defect(&pi2, &[0.0; 3], &[4.0, 5.0, 6.0]), 0.0);
    }

    #[test]
    fn ip_defect_bounded_by_certified_distortion() {
        // for hull points x, y of a certified sketch, the inner product
        // defect is at most 6ε with ε the measured hull distortion of the
        // vectors the polarization identity touches
        let d = 400;
        let x = grid_points(24, d, 5);
        let (pi, eps_pair) = certify_sketch(&x, 0.25, 300, 8, 3).unwrap();
        assert!(!pi.is_identity());
        let mut r = rng::stream(17, &[1]);
        let viol = |z: &[f64]| (norm(&pi.apply(z)) - norm(z)).abs();
        for _ in 0..100 {
            // random convex combinations of normalized differences
            let mut za = vec![0.0; d];
            let mut zb = vec![0.0; d];
            for z in [&mut za, &mut zb] {
                let mut total = 0.0;
                let mut ws = [0.0; 5];
                for w in &mut ws {
                    *w = Exp1.sample(&mut r);
                    total += *w;
                }
                for &w in &ws {
                    let (a, b) = loop {
                        let a = r.random_range(0..x.n());
                        let b = r.random_range(0..x.n());
                        if a != b {
                            break (a, b);
                        }
                    };
                    let dv = sub(x.point(a), x.point(b));
                    let dn = norm(&dv);
                    for (zi, di) in z.iter_mut().zip(&dv) {
                        *zi += w / total * di / dn;
                    }
                }
            }
            // midpoints (za±zb)/2 are the hull points the bound consumes
            let mid_p: Vec<f64> = za.iter().zip(&zb).map(|(a, b)| (a + b) / 2.0).collect();
            let mid_m: Vec<f64> = za.iter().zip(&zb).map(|(a, b)| (a - b) / 2.0).collect();
            let eps = eps_pair.max(viol(&mid_p)).max(viol(&mid_m));
            assert!(inner_product_defect(&pi, &za, &zb) <= 6.0 * eps + 1e-12);
        }
    }

    #[test]
    fn polarization_identity() {
        let pi = Sketch::sample(6, 4, 21);
        let mut r = rng::stream(22, &[2]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
            let direct = inner_product_defect(&pi, &x, &y);
            let xp: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let xm: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let via_norms = 0.25
                * ((norm2(&pi.apply(&xp)) - norm2(&xp)) - (norm2(&pi.apply(&xm)) - norm2(&xm)));
            assert!((direct - via_norms.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_distortion_translation_and_scale_invariant() {
        let x = grid_points(20, 6, 8);
        let pi = Sketch::sample(6, 3, 9);
        let base = pair_distortion(&pi, &x);
        let shifted: Vec<Vec<f64>> =
            x.iter().map(|p| p.iter().map(|v| v + 3.5).collect()).collect();
        let scaled: Vec<Vec<f64>> =
            x.iter().map(|p| p.iter().map(|v| v * 7.25).collect()).collect();
        let xs = PointSet::from_rows(&shifted).unwrap();
        let xc = PointSet::from_rows(&scaled).unwrap();
        assert!((pair_distortion(&pi, &xs) - base).abs() < 1e-9);
        assert!((pair_distortion(&pi, &xc) - base).abs() < 1e-9);
    }

    #[test]
    fn certify_uses_identity_at_large_k() {
        let x = grid_points(32, 8, 10);
        let (pi, e) = certify_sketch(&x, 0.2, 100, 8, 0).unwrap();
        assert!(pi.is_identity());
        assert_eq!(e, 0.0);
    }

    #[test]
    fn certify_fails_with_hopeless_budget() {
        let x = grid_points(64, 32, 11);
        // k = 1 row cannot reach distortion 0.01
        let err = certify_sketch(&x, 0.01, 1, 3, 0).unwrap_err();
        let SketchError::CertificationFailed { retries, best, .. } = err;
        assert_eq!(retries, 3);
        assert!(best > 0.01);
    }
}
