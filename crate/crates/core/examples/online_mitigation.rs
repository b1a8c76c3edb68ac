//! Online loop on the piecewise stream with and without weight shrinkage
//! after a detected change. Takes a few seconds per arm in release mode.
//!
//! cargo run --release --example online_mitigation -- [seed]

use hiermix::changepoint::{cumulative_sq_error, online_loop};
use hiermix::config::RunConfig;
use hiermix::dataio::{piecewise_change_index, simulate_piecewise, PIECEWISE_LEN, PIECEWISE_NOISE_SD};
use hiermix::pipeline::init_online;

fn main() -> hiermix::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut cfg = RunConfig::default();
    cfg.quantiles = false;
    let stream = simulate_piecewise(PIECEWISE_LEN, PIECEWISE_NOISE_SD, seed)?;
    let change = piecewise_change_index(stream.len());
    let (f, _, start) = init_online(&stream, &cfg, seed)?;
    println!("online from t={start}, change at t={change}");

    for mitigation in [true, false] {
        let mut c = cfg.online.clone();
        c.mitigation = mitigation;
        let mut fk = f.clone();
        let rec = online_loop(&mut fk, None, &stream, start, &c, seed)?;
        let hits: Vec<usize> = rec.iter().filter(|r| r.detected).map(|r| r.t).collect();
        println!(
            "mitigation {mitigation:<5}  detections {hits:?}  post-change sq error {:.2}",
            cumulative_sq_error(&rec, change, change + 200)
        );
        for r in rec.iter().filter(|r| (change..change + 8).contains(&r.t)) {
            let w: Vec<String> = r.weights.iter().map(|x| format!("{x:.2}")).collect();
            println!("    t={} resid {:7.3} w [{}]", r.t, r.residual, w.join(" "));
        }
    }
    Ok(())
}
