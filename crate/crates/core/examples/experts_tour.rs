//! Fit each default expert on one simulated series and compare one-step
//! errors on the hold-out part.

use hiermix::dataio::simulate_hierarchical;
use hiermix::experts::{Expert, ExpertKind};
use hiermix::metrics::mase;
use hiermix::Hierarchy;

fn main() -> hiermix::Result<()> {
    let h = Hierarchy::seven_vertex();
    let panel = simulate_hierarchical(&h, 300, 12, 3)?;
    let series = &panel.values[3];
    let cut = 240;

    for kind in ExpertKind::default_roster(12, 12) {
        let mut e = Expert::new(kind);
        e.fit(&series[..cut], 1)?;
        let f = e.rolling_forecasts(series, cut, series.len() - 1)?;
        let score = mase(&series[..cut], &series[cut..], &f)?;
        println!("{:<22} MASE {score:7.2}", e.kind.label());
    }

    let mut holt = Expert::new(ExpertKind::holt());
    holt.fit(&series[..cut], 0)?;
    println!("holt 6 steps ahead: {:.2?}", holt.forecast_recursive(&series[..cut], 6)?);
    Ok(())
}
