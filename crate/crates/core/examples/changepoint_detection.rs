//! Run-length posterior on a stream with a mean shift. Prints where the MAP
//! run length collapses and how the posterior looks just after the change.

use hiermix::changepoint::{BocpdConfig, DetectionRule, RunLengthState};
use hiermix::dataio::simulate_gaussian_shift;

fn main() -> hiermix::Result<()> {
    let xs = simulate_gaussian_shift(800, 400, 3.0, 2)?;
    for rule in [DetectionRule::MapIsOne, DetectionRule::MapReset] {
        let mut s = RunLengthState::new(BocpdConfig {
            rule,
            ..BocpdConfig::default()
        })?;
        let mut hits = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            let o = s.step(x)?;
            if o.detected {
                hits.push(i);
            }
            if rule == DetectionRule::MapReset && (398..404).contains(&i) {
                let p = s.posterior();
                let top: Vec<String> = p.iter().take(4).map(|v| format!("{v:.3}")).collect();
                println!("  t={i:<4} x={x:6.2} MAP {:>4}  P(r=0..4) {}", o.map_run_length, top.join(" "));
            }
        }
        println!("{rule:?}: detections at {hits:?}");
    }
    Ok(())
}
