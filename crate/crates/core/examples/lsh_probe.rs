use temb_core::bench;
use temb_core::config::Backend;

fn main() {
    let t0 = std::time::Instant::now();
    let rows = bench::run_bench(&[4096, 16384, 32768], Backend::Lsh, 0.5, 7, 200).unwrap();
    for r in &rows {
        println!("{:?}", r);
    }
    // log-log slope
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), (r.median_probes.max(1) as f64).ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("slope {:.3}, elapsed {:.2?}", slope, t0.elapsed());
}
