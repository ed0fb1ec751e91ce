//! Synthetic datasets and probe-count measurement.

use crate::geom::PointSet;
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A Gaussian mixture: `clusters` unit-variance blobs whose centers are
/// drawn from N(0, spread²·I).
pub fn gaussian_mixture(n: usize, d: usize, clusters: usize, spread: f64, seed: u64) -> PointSet {
    let mut r = rng::stream(seed, &[0x6d6978]);
    let k = clusters.max(1);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut r);
                    spread * g
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centers[r.random_range(0..k)];
        for j in 0..d {
            let g: f64 = StandardNormal.sample(&mut r);
            data.push(c[j] + g);
        }
    }
    PointSet::new(data, d).expect("mixture is finite")
}

/// One row of the probe benchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: usize,
    pub median_probes: u64,
    pub median_time_ms: f64,
    pub queries: usize,
    /// Queries whose feasibility search hit its iteration cap.
    pub failures: usize,
}

impl BenchRow {
    pub fn tsv_header() -> &'static str {
        "n\tmedian_probes\tmedian_time_ms\tqueries\tfailures"
    }
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.3}\t{}\t{}",
            self.n, self.median_probes, self.median_time_ms, self.queries, self.failures
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("sizes must be ascending and non-empty")]
    BadSizes,
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

/// Builds an index per size on a synthetic mixture and embeds fresh queries,
/// recording probe counts. The hashing backend gets a per-size probe budget
/// of ⌈8·n^0.7⌉ (unless the caller set a tighter one); the reference backend
/// runs uncapped and serves as the linear control row.
pub fn run_bench(
    sizes: &[usize],
    backend: crate::config::Backend,
    eps: f64,
    seed: u64,
    queries_per_size: usize,
) -> Result<Vec<BenchRow>, BenchError> {
    use crate::config::Backend;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadSizes);
    }
    let d = 16;
    let mut rows = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        let clusters = (n / 64).clamp(8, 256);
        let pts = gaussian_mixture(n, d, clusters, 30.0, seed.wrapping_add(si as u64));
        let mut params = crate::Params::default();
        params.backend = backend;
        if backend == Backend::Lsh {
            let budget = (8.0 * (n as f64).powf(0.7)).ceil() as u64;
            params.probe_cap = params.probe_cap.min(budget);
        }
        let ix = crate::embed::build(pts, eps, params, seed.wrapping_add(1000 + si as u64))?;
        let queries =
            gaussian_mixture(queries_per_size, d, clusters, 30.0, seed.wrapping_add(2000 + si as u64));
        let mut probes = Vec::with_capacity(queries.n());
        let mut times = Vec::with_capacity(queries.n());
        let mut failures = 0usize;
        for qi in 0..queries.n() {
            let t0 = std::time::Instant::now();
            match ix.embed(queries.point(qi), qi as u64) {
                Ok(r) => probes.push(r.probes),
                Err(crate::embed::EmbedError::EllipsoidCapExceeded { probes: p, .. }) => {
                    failures += 1;
                    probes.push(p);
                }
                Err(e) => return Err(e.into()),
            }
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        rows.push(BenchRow {
            n,
            median_probes: median_u64(probes),
            median_time_ms: median_f64(times),
            queries: queries.n(),
            failures,
        });
    }
    Ok(rows)
}

pub fn median_u64(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

pub fn median_f64(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v[v.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_shape() {
        let x = gaussian_mixture(100, 5, 4, 10.0, 0);
        assert_eq!(x.n(), 100);
        assert_eq!(x.d(), 5);
        let y = gaussian_mixture(100, 5, 4, 10.0, 0);
        assert_eq!(x.as_slice(), y.as_slice());
    }
}
