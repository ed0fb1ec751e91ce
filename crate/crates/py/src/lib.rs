//! Python bindings: build a terminal embedding index, embed queries, and
//! verify distortion from Python.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use temb_core::config::Backend;
use temb_core::{ann, embed, index as index_io, PointSet, Params};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A built terminal embedding index over a fixed point set.
#[pyclass]
struct Index {
    inner: embed::TerminalIndex,
}

#[pymethods]
impl Index {
    /// Builds an index from a list of points (rows of equal dimension).
    #[staticmethod]
    #[pyo3(signature = (points, eps, seed = 0, backend = "trivial", median_jl = false))]
    fn build(
        points: Vec<Vec<f64>>,
        eps: f64,
        seed: u64,
        backend: &str,
        median_jl: bool,
    ) -> PyResult<Index> {
        let pts = PointSet::from_rows(&points).map_err(value_err)?;
        let mut params = Params::default();
        params.backend = Backend::parse(backend)
            .ok_or_else(|| PyValueError::new_err(format!("unknown backend {backend:?}")))?;
        params.medjl_enabled = median_jl;
        let inner = embed::build(pts, eps, params, seed).map_err(value_err)?;
        Ok(Index { inner })
    }

    /// Embeds one query; returns the (k+1)-vector z_q.
    #[pyo3(signature = (q, query_id = 0))]
    fn embed(&self, q: Vec<f64>, query_id: u64) -> PyResult<Vec<f64>> {
        Ok(self.inner.embed(&q, query_id).map_err(value_err)?.z)
    }

    /// Embeds one query and returns (z, anchor, iterations, probes).
    #[pyo3(signature = (q, query_id = 0))]
    fn embed_stats(&self, q: Vec<f64>, query_id: u64) -> PyResult<(Vec<f64>, usize, usize, u64)> {
        let r = self.inner.embed(&q, query_id).map_err(value_err)?;
        Ok((r.z, r.anchor, r.iterations, r.probes))
    }

    /// (max_over, max_under) distortion of an embedding against every point.
    fn verify(&self, q: Vec<f64>, z: Vec<f64>) -> PyResult<(f64, f64)> {
        if z.len() != self.inner.k() + 1 {
            return Err(PyValueError::new_err(format!(
                "embedding must have length {}",
                self.inner.k() + 1
            )));
        }
        Ok(self.inner.verify(&q, &z))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        index_io::write_index_path(std::path::Path::new(path), &self.inner)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Index> {
        let inner = index_io::read_index_path(std::path::Path::new(path))
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Index { inner })
    }

    /// Number of terminals.
    fn __len__(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.d()
    }

    /// Embedding dimension k + 1.
    #[getter]
    fn out_dim(&self) -> usize {
        self.inner.k() + 1
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    fn __repr__(&self) -> String {
        format!(
            "Index(n={}, d={}, out_dim={}, eps={})",
            self.inner.n(),
            self.inner.d(),
            self.inner.k() + 1,
            self.inner.eps
        )
    }
}

/// ρ_c from c²√ρ_c + (c²−1)√ρ_u = √(2c²−1).
#[pyfunction]
fn lsh_tradeoff(c: f64, rho_u: f64) -> PyResult<f64> {
    ann::lsh_tradeoff(c, rho_u).map_err(value_err)
}

/// Coordinatewise floor snap onto the grid νZ^d.
#[pyfunction]
fn snap_to_grid(q: Vec<f64>, nu: f64) -> PyResult<Vec<f64>> {
    ann::snap_to_grid(&q, nu).map_err(value_err)
}

#[pymodule]
fn temb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Index>()?;
    m.add_function(wrap_pyfunction!(lsh_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(snap_to_grid, m)?)?;
    Ok(())
}
