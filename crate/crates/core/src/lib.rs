//! Terminal embedding index with sublinear candidate inspection.
//!
//! Preprocesses a terminal set `X ⊂ R^d` into an index that maps arbitrary,
//! possibly adaptively chosen, query points `q` to vectors `z_q ∈ R^{k+1}`
//! such that `‖z_q − (Πx, 0)‖ ≈ ‖q − x‖` for every terminal `x`, where `Π`
//! is a certified random sketch. Queries run a feasibility search (ellipsoid
//! method) driven by a weak separation oracle; the oracle inspects a
//! sublinear number of candidate points by combining a partition tree, an
//! adaptive near-neighbor walk, and locality-sensitive candidate retrieval.
//!
//! Module map:
//! - [`geom`]: dense point-set primitives and exact reference oracles
//! - [`sketch`]: Gaussian sketches and distortion certification
//! - [`medjl`]: ensembles of small sketches sampled per query
//! - [`tree`]: randomized partition tree construction
//! - [`ann`]: approximate partitioning / near-neighbor backends and the
//!   adaptive nearest-neighbor walk
//! - [`ellipsoid`]: the ellipsoid feasibility method with a weak oracle
//! - [`embed`]: the violator-detection oracles and embedding assembly
//! - [`index`]: binary index serialization
//! - [`dataio`]: point file formats (binary and CSV)
//! - [`bench`]: synthetic datasets and probe-count measurements

pub mod ann;
pub mod bench;
pub mod config;
pub mod dataio;
pub mod ellipsoid;
pub mod embed;
pub mod geom;
pub mod index;
pub mod medjl;
pub mod rng;
pub mod sketch;
pub mod tree;

pub use config::Params;
pub use embed::{EmbeddingResult, TerminalIndex};
pub use geom::PointSet;
