//! Scoring by hand: MASE against the naive scale, CRPS from a quantile grid,
//! and a per-level report for a perturbed coherent panel.

use hiermix::metrics::{crps_from_quantiles, crps_grid, mase, nrmse, EvalInput, EvalReport};
use hiermix::Hierarchy;

fn main() -> hiermix::Result<()> {
    // naive in-sample MAE is 1; forecast error 0.5
    println!("MASE {}", mase(&[0.0, 1.0, 2.0, 3.0], &[4.0, 5.0], &[4.5, 5.5])?);

    // uniform(-1, 1) quantiles at truth 0: CRPS = E|X| - E|X - X'|/2 = 1/6
    let taus = crps_grid();
    let q: Vec<f64> = taus.iter().map(|t| 2.0 * t - 1.0).collect();
    println!("CRPS of U(-1, 1) at 0: {:.4} (exact 0.1667)", crps_from_quantiles(0.0, &taus, &q)?);
    println!("NRMSE {:.4}", nrmse(&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.0, 2.5, 4.5])?);

    let h = Hierarchy::seven_vertex();
    let leaves = |t: usize| [(t % 5) as f64, (t % 4) as f64 + 2.0, (t % 3) as f64 + 1.0, 4.0 - (t % 2) as f64];
    let series: Vec<Vec<f64>> = (0..40).map(|t| h.aggregate(&leaves(t)).unwrap()).collect();
    let by_vertex = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { (0..h.len()).map(|v| rows.iter().map(|r| r[v]).collect()).collect() };
    let insample = by_vertex(&series[..30]);
    let truth = by_vertex(&series[30..]);
    let point: Vec<Vec<f64>> = truth.iter().enumerate().map(|(v, s)| s.iter().map(|y| y + 0.3 * v as f64).collect()).collect();

    let report = EvalReport::build(
        "shifted",
        &h,
        &EvalInput {
            insample: &insample,
            truth: &truth,
            point: &point,
            quantiles: None,
        },
    )?;
    for l in &report.levels {
        println!("level {} MASE {:.2} NRMSE {:.3}", l.level, l.mase, l.nrmse);
    }
    println!("coherent loss {:.3}", report.coherent_loss);
    Ok(())
}
