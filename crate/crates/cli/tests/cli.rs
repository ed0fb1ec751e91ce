//! End-to-end checks of the command-line surface: file formats, exit codes,
//! and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_temb")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn write_points(path: &Path, rows: &[Vec<f64>]) {
    let d = rows.first().map_or(0, |r| r.len());
    let mut buf = Vec::new();
    buf.extend_from_slice(b"TPTS");
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    for r in rows {
        for v in r {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).unwrap();
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("temb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn mixture_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    // small xorshift so the tests need no extra deps
    let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 * 40.0 - 20.0
    };
    (0..n).map(|_| (0..d).map(|_| next()).collect()).collect()
}

#[test]
fn build_single_point_dataset() {
    let input = tmp("one.bin");
    let out = tmp("one.temb");
    write_points(&input, &[vec![1.0, 2.0]]);
    let r = run(&[
        "build",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.2",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("tree nodes = 1"), "{text}");
}

#[test]
fn rebuilds_are_byte_identical() {
    let input = tmp("det.bin");
    write_points(&input, &mixture_rows(40, 3, 7));
    let out1 = tmp("det1.temb");
    let out2 = tmp("det2.temb");
    for out in [&out1, &out2] {
        let r = run(&[
            "build",
            "--input",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--eps",
            "0.25",
            "--seed",
            "11",
        ]);
        assert!(r.status.success());
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn csv_input_and_malformed_input() {
    let csv = tmp("pts.csv");
    std::fs::write(&csv, "0.0,0.0\n1.5,2.5\n4.0,1.0\n").unwrap();
    let out = tmp("csv.temb");
    let r = run(&[
        "build",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.3",
    ]);
    assert!(r.status.success());

    let bad = tmp("bad.csv");
    std::fs::write(&bad, "1.0,2.0\nnope,3.0\n").unwrap();
    let r = run(&[
        "build",
        "--input",
        bad.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.3",
    ]);
    assert_eq!(r.status.code(), Some(2));

    let nan = tmp("nan.csv");
    std::fs::write(&nan, "1.0,2.0\nNaN,3.0\n").unwrap();
    let r = run(&[
        "build",
        "--input",
        nan.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.3",
    ]);
    assert_eq!(r.status.code(), Some(2));
}

fn built_index(tag: &str, rows: &[Vec<f64>]) -> PathBuf {
    let input = tmp(&format!("{tag}.bin"));
    let out = tmp(&format!("{tag}.temb"));
    write_points(&input, rows);
    let r = run(&[
        "build",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.2",
        "--seed",
        "3",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn embed_empty_queries_and_seed_determinism() {
    let ix = built_index("emb", &mixture_rows(48, 4, 9));
    let empty = tmp("q0.bin");
    write_points(&empty, &[]);
    // zero-row query file needs an explicit dimension header; write directly
    {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"TPTS");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&4u64.to_le_bytes());
        std::fs::write(&empty, buf).unwrap();
    }
    let zout = tmp("z0.bin");
    let r = run(&[
        "embed",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        empty.to_str().unwrap(),
        "--output",
        zout.to_str().unwrap(),
    ]);
    assert!(r.status.success());

    let queries = tmp("q5.bin");
    write_points(&queries, &mixture_rows(5, 4, 10));
    let z1 = tmp("z1.bin");
    let z2 = tmp("z2.bin");
    for z in [&z1, &z2] {
        let r = run(&[
            "embed",
            "--index",
            ix.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
            "--output",
            z.to_str().unwrap(),
            "--query-seed",
            "77",
        ]);
        assert!(r.status.success());
    }
    assert_eq!(std::fs::read(&z1).unwrap(), std::fs::read(&z2).unwrap());
}

#[test]
fn embed_dimension_mismatch_is_io_error() {
    let ix = built_index("dim", &mixture_rows(32, 4, 12));
    let queries = tmp("qdim.bin");
    write_points(&queries, &mixture_rows(3, 5, 13));
    let z = tmp("zdim.bin");
    let r = run(&[
        "embed",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--output",
        z.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn verify_round_trip_and_perturbation() {
    let rows = mixture_rows(48, 4, 14);
    let ix = built_index("ver", &rows);
    let queries = tmp("qver.bin");
    write_points(&queries, &mixture_rows(6, 4, 15));
    let z = tmp("zver.bin");
    let r = run(&[
        "embed",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--output",
        z.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let r = run(&[
        "verify",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--embeddings",
        z.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));

    // shift one embedding's last coordinate by the dataset diameter
    let mut bytes = std::fs::read(&z).unwrap();
    let d_out = 5usize; // k + 1 with the identity sketch at d = 4
    let header = 4 + 4 + 8 + 8;
    let last = header + (d_out - 1) * 8;
    let mut v = f64::from_le_bytes(bytes[last..last + 8].try_into().unwrap());
    v += 1000.0;
    bytes[last..last + 8].copy_from_slice(&v.to_le_bytes());
    let zbad = tmp("zbad.bin");
    std::fs::write(&zbad, bytes).unwrap();
    let r = run(&[
        "verify",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--embeddings",
        zbad.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));

    // empty query set verifies trivially
    let empty = tmp("qe.bin");
    {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"TPTS");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&4u64.to_le_bytes());
        std::fs::write(&empty, buf).unwrap();
    }
    let ze = tmp("ze.bin");
    {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"TPTS");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&5u64.to_le_bytes());
        std::fs::write(&ze, buf).unwrap();
    }
    let r = run(&[
        "verify",
        "--index",
        ix.to_str().unwrap(),
        "--queries",
        empty.to_str().unwrap(),
        "--embeddings",
        ze.to_str().unwrap(),
    ]);
    assert!(r.status.success());
}

#[test]
fn bench_emits_parseable_tsv() {
    let r = run(&[
        "bench",
        "--sizes",
        "64,128",
        "--backend",
        "trivial",
        "--eps",
        "0.5",
        "--queries",
        "10",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8_lossy(&r.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n\tmedian_probes\tmedian_time_ms\tqueries\tfailures");
    for (expected_n, line) in [64usize, 128].iter().zip(lines) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0].parse::<usize>().unwrap(), *expected_n);
        cols[1].parse::<u64>().unwrap();
        cols[2].parse::<f64>().unwrap();
        assert_eq!(cols[3].parse::<usize>().unwrap(), 10);
    }
}

#[test]
fn lsh_backend_round_trip() {
    let input = tmp("lsh.bin");
    write_points(&input, &mixture_rows(96, 4, 21));
    let out = tmp("lsh.temb");
    let r = run(&[
        "build",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--eps",
        "0.3",
        "--backend",
        "lsh",
        "--seed",
        "5",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let queries = tmp("qlsh.bin");
    write_points(&queries, &mixture_rows(4, 4, 22));
    let z = tmp("zlsh.bin");
    let r = run(&[
        "embed",
        "--index",
        out.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--output",
        z.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}
