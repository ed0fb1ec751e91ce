//! Ensembles of small Gaussian sketches sampled per query.
//!
//! A single sketch certified against a fixed dataset is useless once queries
//! may depend on earlier answers. The ensemble trick sidesteps this: draw
//! many independent small sketches up front, and at query time sample a few
//! of them fresh. The guarantee tested here is statistical: for any query,
//! at least 95% of the ensemble satisfies the three-point approximate
//! inner-product condition, so a per-query sample almost surely contains a
//! good sketch. Candidates found through a sampled sketch are always
//! re-verified in full dimension by the caller.

use crate::geom::{dist2, dot, norm2, sub, PointSet};
use crate::rng::{self, LBL_ENSEMBLE};
use crate::sketch::Sketch;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MedjlError {
    #[error("resample cap exceeded: {accepted} of {wanted} sketches passed the Frobenius filter")]
    ResampleCapExceeded { accepted: usize, wanted: usize },
    #[error("requested {count} sketches from an ensemble of {m}")]
    CountExceedsEnsemble { count: usize, m: usize },
}

/// Upper bound on n for which per-sketch Gram tables are materialized.
const GRAM_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct MedianEnsemble {
    sketches: Vec<Sketch>,
    m: usize,
    k_rows: usize,
    frobenius_cap: f64,
    /// Per sketch, row-major n×k' projections of the dataset.
    proj: Vec<Vec<f32>>,
    /// Per sketch, packed upper-triangular Gram ⟨Πa, Πb⟩ over the dataset
    /// (small n only).
    pi_gram: Vec<Vec<f32>>,
    /// Exact Gram ⟨a, b⟩ over the dataset (small n only).
    x_gram: Vec<f64>,
    n: usize,
    seed: u64,
    /// Set when ε fell below the 1/√(nd) floor the analysis needs.
    pub eps_below_theory: bool,
}

#[inline]
fn tri_index(a: usize, b: usize) -> usize {
    // packed upper triangular with diagonal, a ≤ b
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    b * (b + 1) / 2 + a
}

impl MedianEnsemble {
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn rows(&self) -> usize {
        self.k_rows
    }
    pub fn frobenius_cap(&self) -> f64 {
        self.frobenius_cap
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn sketch(&self, i: usize) -> &Sketch {
        &self.sketches[i]
    }
    /// Projection of dataset point `x` under sketch `i`.
    pub fn projected(&self, i: usize, x: usize) -> &[f32] {
        &self.proj[i][x * self.k_rows..(x + 1) * self.k_rows]
    }
}

/// Samples `m` independent sketches with `k_rows` rows each, discarding any
/// with ‖Π‖_F above `c_f·√d`, and precomputes the dataset projections.
pub fn build_ensemble(
    x: &PointSet,
    m: usize,
    k_rows: usize,
    eps: f64,
    seed: u64,
    c_f: f64,
) -> Result<MedianEnsemble, MedjlError> {
    assert!(m >= 1);
    let d = x.d();
    let cap = c_f * (d as f64).sqrt();
    let mut sketches = Vec::with_capacity(m);
    let budget = 4 * m + 16;
    let mut attempt = 0u64;
    while sketches.len() < m && (attempt as usize) < budget {
        let pi = Sketch::sample(d, k_rows, rng::derive(seed, &[LBL_ENSEMBLE, attempt]));
        attempt += 1;
        if pi.frobenius_norm() <= cap {
            sketches.push(pi);
        }
    }
    if sketches.len() < m {
        return Err(MedjlError::ResampleCapExceeded { accepted: sketches.len(), wanted: m });
    }
    Ok(finish_ensemble(x, sketches, k_rows, cap, eps, seed))
}

/// Test hook: an ensemble of identity sketches (k' = d, zero defects).
pub fn identity_ensemble(x: &PointSet, m: usize) -> MedianEnsemble {
    let sketches = vec![Sketch::identity(x.d()); m];
    finish_ensemble(x, sketches, x.d(), f64::INFINITY, 1.0, 0)
}

fn finish_ensemble(
    x: &PointSet,
    sketches: Vec<Sketch>,
    k_rows: usize,
    cap: f64,
    eps: f64,
    seed: u64,
) -> MedianEnsemble {
    let n = x.n();
    let m = sketches.len();
    let proj: Vec<Vec<f32>> = sketches
        .par_iter()
        .map(|pi| pi.project_all(x).iter().map(|&v| v as f32).collect())
        .collect();
    let (pi_gram, x_gram) = if n <= GRAM_LIMIT {
        let tri = n * (n + 1) / 2;
        let pg: Vec<Vec<f32>> = proj
            .par_iter()
            .map(|p| {
                let mut g = vec![0.0f32; tri];
                for b in 0..n {
                    let rb = &p[b * k_rows..(b + 1) * k_rows];
                    for a in 0..=b {
                        let ra = &p[a * k_rows..(a + 1) * k_rows];
                        let mut s = 0.0f32;
                        for t in 0..k_rows {
                            s += ra[t] * rb[t];
                        }
                        g[tri_index(a, b)] = s;
                    }
                }
                g
            })
            .collect();
        let mut xg = vec![0.0f64; tri];
        for b in 0..n {
            for a in 0..=b {
                xg[tri_index(a, b)] = dot(x.point(a), x.point(b));
            }
        }
        (pg, xg)
    } else {
        (Vec::new(), Vec::new())
    };
    let eps_below_theory = eps < 1.0 / ((n * x.d()) as f64).sqrt();
    MedianEnsemble {
        sketches,
        m,
        k_rows,
        frobenius_cap: cap,
        proj,
        pi_gram,
        x_gram,
        n,
        seed,
        eps_below_theory,
    }
}

/// |⟨Π(x−z), Π(y−z)⟩ − ⟨x−z, y−z⟩| / (‖x−z‖·‖y−z‖), with the convention 0
/// when either factor vanishes.
pub fn ap_ip_defect(pi: &Sketch, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let xz = sub(x, z);
    let yz = sub(y, z);
    let nx = norm2(&xz).sqrt();
    let ny = norm2(&yz).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    let defect = dot(&pi.apply(&xz), &pi.apply(&yz)) - dot(&xz, &yz);
    defect.abs() / (nx * ny)
}

/// Fraction of ensemble sketches whose worst three-point defect over the
/// dataset plus `q` is at most ε. Exact over all triples when n ≤ 64; a
/// deterministic-seeded sample of 10⁵ triples otherwise.
pub fn good_fraction(ens: &MedianEnsemble, x: &PointSet, q: &[f64], eps: f64) -> f64 {
    assert_eq!(x.n(), ens.n, "ensemble was built for a different dataset");
    let n = x.n();
    let k = ens.k_rows;

    // Projections of q; index n stands for q below.
    let q_proj: Vec<Vec<f32>> = ens
        .sketches
        .par_iter()
        .map(|pi| pi.apply(q).iter().map(|&v| v as f32).collect())
        .collect();

    // f32 Gram tables cannot resolve thresholds near rounding noise; fall
    // back to exact per-triple evaluation there.
    let have_grams = !ens.pi_gram.is_empty() && eps >= 1e-4;

    // q rows against every dataset point
    let xq: Vec<f64> = (0..n).map(|a| dot(x.point(a), q)).collect();
    let qq = norm2(q);
    let piq: Vec<Vec<f32>> = if have_grams {
        ens.proj
            .par_iter()
            .zip(&q_proj)
            .map(|(p, qp)| {
                let mut row = vec![0.0f32; n + 1];
                for (a, r) in row.iter_mut().take(n).enumerate() {
                    let ra = &p[a * k..(a + 1) * k];
                    let mut s = 0.0f32;
                    for t in 0..k {
                        s += ra[t] * qp[t];
                    }
                    *r = s;
                }
                let mut s = 0.0f32;
                for t in 0..k {
                    s += qp[t] * qp[t];
                }
                row[n] = s;
                row
            })
            .collect()
    } else {
        Vec::new()
    };

    // exact inner product of points a, b ∈ X ∪ {q} (index n = q)
    let exact_ip = |a: usize, b: usize| -> f64 {
        match (a == n, b == n) {
            (true, true) => qq,
            (true, false) => xq[b],
            (false, true) => xq[a],
            (false, false) => ens.x_gram[tri_index(a, b)],
        }
    };

    let triples: Vec<(u32, u32, u32)> = if n <= 64 {
        let mut t = Vec::new();
        for z in 0..=n as u32 {
            for a in 0..=n as u32 {
                if a == z {
                    continue;
                }
                for b in a..=n as u32 {
                    if b == z {
                        continue;
                    }
                    t.push((a, b, z));
                }
            }
        }
        t
    } else {
        let mut r = rng::stream(ens.seed, &[LBL_ENSEMBLE, 0x7472_6970]);
        (0..100_000)
            .map(|_| loop {
                let z = r.random_range(0..=n as u32);
                let a = r.random_range(0..=n as u32);
                let b = r.random_range(0..=n as u32);
                if a != z && b != z {
                    break (a, b, z);
                }
            })
            .collect()
    };

    let good = (0..ens.m)
        .into_par_iter()
        .filter(|&i| {
            if have_grams {
                let g = &ens.pi_gram[i];
                let pq = &piq[i];
                let pip = |a: usize, b: usize| -> f64 {
                    match (a == n, b == n) {
                        (true, true) => pq[n] as f64,
                        (true, false) => pq[b] as f64,
                        (false, true) => pq[a] as f64,
                        (false, false) => g[tri_index(a, b)] as f64,
                    }
                };
                for &(a, b, z) in &triples {
                    let (a, b, z) = (a as usize, b as usize, z as usize);
                    let az2 = exact_ip(a, a) + exact_ip(z, z) - 2.0 * exact_ip(a, z);
                    let bz2 = exact_ip(b, b) + exact_ip(z, z) - 2.0 * exact_ip(b, z);
                    if az2 <= 0.0 || bz2 <= 0.0 {
                        continue;
                    }
                    let exact = exact_ip(a, b) - exact_ip(a, z) - exact_ip(b, z) + exact_ip(z, z);
                    let skp = pip(a, b) - pip(a, z) - pip(b, z) + pip(z, z);
                    if (skp - exact).abs() > eps * (az2 * bz2).sqrt() {
                        return false;
                    }
                }
                true
            } else {
                let pi = &ens.sketches[i];
                let pt = |a: usize| -> &[f64] { if a == n { q } else { x.point(a) } };
                triples.iter().all(|&(a, b, z)| {
                    ap_ip_defect(pi, pt(a as usize), pt(b as usize), pt(z as usize)) <= eps
                })
            }
        })
        .count();
    good as f64 / ens.m as f64
}

/// Uniform sample of `count` distinct sketch indices; the RNG is supplied by
/// the caller so per-query draws stay independent of the build seed.
pub fn sample_sketch_indices(
    ens: &MedianEnsemble,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, MedjlError> {
    assert!(count >= 1);
    if count > ens.m {
        return Err(MedjlError::CountExceedsEnsemble { count, m: ens.m });
    }
    let mut ids: Vec<usize> = index_sample(rng, ens.m, count).into_iter().collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Squared-distance defect of a single sketch on a pair; the x = y case of
/// the three-point condition reduces to this.
pub fn squared_norm_defect(pi: &Sketch, x: &[f64], z: &[f64]) -> f64 {
    let d2 = dist2(x, z);
    if d2 == 0.0 {
        return 0.0;
    }
    let pd = norm2(&pi.apply_diff(x, z));
    (pd - d2).abs() / d2
}
