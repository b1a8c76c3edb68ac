//! Fit one quantile generator on a seasonal series and print a fan of
//! quantiles around a point forecast. The median row reproduces the point.

use hiermix::dataio::{simulate_hierarchical, sliding_windows};
use hiermix::neural::Standardizer;
use hiermix::quantile::{QuantileConfig, QuantileGenerator};
use hiermix::Hierarchy;
use ndarray::s;

fn main() -> hiermix::Result<()> {
    let h = Hierarchy::seven_vertex();
    let panel = simulate_hierarchical(&h, 400, 12, 4)?;
    let series = &panel.values[0];
    let omega = 12;
    let train_end = 320;

    let sw = sliding_windows(&series[..train_end], omega)?;
    let rows = sw.rows() - 1;
    let windows = sw.inputs.slice(s![..rows, ..]).to_owned();
    let truth: Vec<f64> = sw.targets[..rows].iter().map(|t| t.expect("has target")).collect();
    // naive point forecast: last value in the window
    let points: Vec<f64> = (0..rows).map(|r| windows[[r, omega - 1]]).collect();

    let cfg = QuantileConfig {
        epochs: 200,
        lr: 1e-3,
        ..QuantileConfig::default()
    };
    let mut g = QuantileGenerator::new(omega, &cfg, Standardizer::fit(&series[..train_end]), 9)?;
    let loss = g.train(&windows, &points, &truth, &cfg, 9)?;
    println!("pinball loss {:.4} -> {:.4}", loss[0], loss[loss.len() - 1]);

    let taus = [0.05, 0.25, 0.5, 0.75, 0.95];
    println!("{:>5} {:>9} {:>9}  quantiles {taus:?}", "t", "truth", "point");
    for t in (train_end..series.len()).step_by(10) {
        let window = &series[t - omega..t];
        let point = window[omega - 1];
        let q = g.quantiles(window, point, &taus)?;
        let shown: Vec<String> = q.iter().map(|x| format!("{x:8.2}")).collect();
        println!("{t:>5} {:>9.2} {point:>9.2}  {}", series[t], shown.join(" "));
    }
    Ok(())
}
