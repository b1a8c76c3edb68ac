//! Train gated mixtures bottom-up on a simulated 7-vertex panel and compare
//! test-split MASE with the equal-weight average of the same experts.
//!
//! cargo run --release --example mixture_training -- [lambda]

use hiermix::config::RunConfig;
use hiermix::pipeline::{self, load_inputs};

fn main() -> hiermix::Result<()> {
    let lambda: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let mut cfg = RunConfig::default();
    cfg.gate.lambda = lambda;
    cfg.gate.epochs = 400;
    cfg.quantiles = false;

    let (h, panel) = load_inputs(&cfg, 1)?;
    println!("{} series x {} steps, split {:?}", h.len(), panel.len(), panel.split);
    let model = pipeline::train(&panel, &h, &cfg, 1)?;
    println!("experts: {}", model.expert_labels().join(", "));

    for f in &model.forecasters {
        let w = f.history.weights.last().expect("trained");
        let shown: Vec<String> = w.iter().map(|x| format!("{x:.2}")).collect();
        println!("  {:<3} mean gate weights [{}]", f.vertex, shown.join(" "));
    }

    for r in pipeline::evaluate(&model, &panel, &cfg)? {
        println!("{:<20} MASE {:7.2}  coherent {:.4}", r.model, r.mean_mase(), r.coherent_loss);
    }
    Ok(())
}
