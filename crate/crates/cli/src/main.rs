//! Batch tooling: dataset ingestion, index build/persist, query embedding,
//! verification reports, and probe-count benchmarks.
//!
//! Exit codes: 0 success, 1 verification failure, 2 I/O or format error,
//! 3 internal cap exceeded.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use temb_core::config::Backend;
use temb_core::embed::EmbedError;
use temb_core::{bench, dataio, embed, index, PointSet, Params};

#[derive(Parser)]
#[command(name = "temb", version, about = "terminal embedding index tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Trivial,
    Lsh,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a dataset (binary or .csv) and persist it.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flat key = value config file; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, value_enum)]
        median_jl: Option<OnOff>,
    },
    /// Embed a query file against a persisted index.
    Embed {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Base seed for per-query randomness.
        #[arg(long, default_value_t = 0)]
        query_seed: u64,
        /// Also print per-query report records (TSV).
        #[arg(long, default_value_t = false)]
        report: bool,
    },
    /// Check embeddings against the exact per-terminal distortion.
    Verify {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Acceptance tolerance; defaults to 2.5 × the index ε.
        #[arg(long)]
        eps_acc: Option<f64>,
    },
    /// Synthetic scaling benchmark: build + query per size, report probes.
    Bench {
        /// Comma-separated ascending sizes, e.g. 4096,16384,32768.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value = "lsh")]
        backend: BackendArg,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        queries: usize,
    },
}

const EXIT_VERIFY: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_CAP: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(e: impl std::fmt::Display) -> Failure {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
    fn cap(e: impl std::fmt::Display) -> Failure {
        Failure { code: EXIT_CAP, message: e.to_string() }
    }
}

fn embed_error(e: EmbedError) -> Failure {
    match e {
        EmbedError::DimensionMismatch { .. } | EmbedError::BadEpsilon(_) => Failure::io(e),
        _ => Failure::cap(e),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TEMB_THREADS") {
        if let Ok(t) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode, Failure> {
    match cmd {
        Command::Build { input, output, eps, seed, config, backend, median_jl } => {
            let mut params = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(Failure::io)?;
                    Params::from_config_string(&text).map_err(Failure::io)?
                }
                None => Params::default(),
            };
            if let Some(b) = backend {
                params.backend = match b {
                    BackendArg::Trivial => Backend::Trivial,
                    BackendArg::Lsh => Backend::Lsh,
                };
            }
            if let Some(m) = median_jl {
                params.medjl_enabled = matches!(m, OnOff::On);
            }
            let (data, n, d) = dataio::read_points_path(&input).map_err(Failure::io)?;
            if n == 0 {
                return Err(Failure::io("dataset is empty"));
            }
            let points = PointSet::new(data, d).map_err(Failure::io)?;
            let t0 = Instant::now();
            let ix = embed::build(points, eps, params, seed).map_err(embed_error)?;
            let ladders: usize =
                ix.ms.per_node.iter().map(|l| l.p as usize + 1).sum();
            index::write_index_path(&output, &ix).map_err(Failure::io)?;
            let bytes = std::fs::metadata(&output).map(|m| m.len()).unwrap_or(0);
            println!(
                "built index: n = {}, d = {}, k = {}, tree nodes = {} (size {}), ladder rungs = {}, {} bytes, {:.2?}",
                ix.n(),
                ix.d(),
                ix.k(),
                ix.tree.nodes.len(),
                ix.tree.total_size,
                ladders,
                bytes,
                t0.elapsed()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Embed { index, queries, output, query_seed, report } => {
            let ix = index::read_index_path(&index).map_err(Failure::io)?;
            let (qdata, qn, qd) = dataio::read_points_path(&queries).map_err(Failure::io)?;
            if qn > 0 && qd != ix.d() {
                return Err(Failure::io(format!(
                    "query dimension {qd} does not match index dimension {}",
                    ix.d()
                )));
            }
            let k = ix.k();
            let mut out = Vec::with_capacity(qn * (k + 1));
            if report {
                println!("id\tanchor\tanchor_dist\tmax_over\tmax_under\tprobes\titerations\twall_ms");
            }
            for qi in 0..qn {
                let q = &qdata[qi * qd..(qi + 1) * qd];
                let t0 = Instant::now();
                let r = ix.embed(q, query_seed.wrapping_add(qi as u64)).map_err(embed_error)?;
                let wall = t0.elapsed().as_secs_f64() * 1e3;
                if report {
                    let (over, under) = ix.verify(q, &r.z);
                    println!(
                        "{qi}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{:.3}",
                        r.anchor,
                        temb_core::geom::dist(q, ix.points.point(r.anchor)),
                        over,
                        under,
                        r.probes,
                        r.iterations,
                        wall
                    );
                }
                out.extend_from_slice(&r.z);
            }
            let f = std::fs::File::create(&output).map_err(Failure::io)?;
            let mut w = std::io::BufWriter::new(f);
            dataio::write_points(&mut w, &out, qn, k + 1).map_err(Failure::io)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { index, queries, embeddings, eps_acc } => {
            let ix = index::read_index_path(&index).map_err(Failure::io)?;
            let (qdata, qn, qd) = dataio::read_points_path(&queries).map_err(Failure::io)?;
            let (zdata, zn, zd) = dataio::read_points_path(&embeddings).map_err(Failure::io)?;
            if qn != zn {
                return Err(Failure::io(format!("{qn} queries but {zn} embeddings")));
            }
            if qn > 0 && (qd != ix.d() || zd != ix.k() + 1) {
                return Err(Failure::io(format!(
                    "dimension mismatch: queries {qd} (want {}), embeddings {zd} (want {})",
                    ix.d(),
                    ix.k() + 1
                )));
            }
            let tol = eps_acc.unwrap_or(2.5 * ix.eps);
            println!("id\tanchor\tanchor_dist\tmax_over\tmax_under\tprobes\titerations\twall_ms");
            let mut ok = true;
            for qi in 0..qn {
                let q = &qdata[qi * qd..(qi + 1) * qd];
                let z = &zdata[qi * zd..(qi + 1) * zd];
                let t0 = Instant::now();
                let (over, under) = ix.verify(q, z);
                let (anchor, adist) = temb_core::geom::brute_nearest(&ix.points, q);
                let wall = t0.elapsed().as_secs_f64() * 1e3;
                println!(
                    "{qi}\t{anchor}\t{adist:.6}\t{over:.6}\t{under:.6}\t-\t-\t{wall:.3}"
                );
                if over > tol || under > tol {
                    ok = false;
                }
            }
            println!("verified {qn} embeddings at tolerance {tol}: {}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFY) })
        }
        Command::Bench { sizes, backend, eps, seed, queries } => {
            let backend = match backend {
                BackendArg::Trivial => Backend::Trivial,
                BackendArg::Lsh => Backend::Lsh,
            };
            let rows = bench::run_bench(&sizes, backend, eps, seed, queries)
                .map_err(|e| Failure::cap(e))?;
            println!("{}", bench::BenchRow::tsv_header());
            for row in rows {
                println!("{}", row.to_tsv());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
