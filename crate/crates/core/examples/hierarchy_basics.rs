//! Build a small signed hierarchy, look at S, and score a few forecasts for
//! coherency.

use hiermix::{Edge, Hierarchy, Sign};

fn main() -> hiermix::Result<()> {
    // total = north + south; south = retail - returns
    let h = Hierarchy::from_edges(&[
        Edge::plus("total", "north"),
        Edge::plus("total", "south"),
        Edge::plus("south", "retail"),
        Edge::new("south", "returns", Sign::Minus),
    ])?;
    println!("vertices {:?}, leaves {:?}", h.vertices(), h.leaves());
    for (i, id) in h.vertices().iter().enumerate() {
        println!("  {id:<8} level {}", h.level(i));
    }

    let s = h.summing_matrix();
    println!("S ({} x {}):\n{}", s.n(), s.m(), s.matrix);

    let truth = h.aggregate(&[40.0, 25.0, 5.0])?;
    println!("aggregated truth {truth:?}");
    let as_rows = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    println!("coherent loss of the truth: {}", h.coherent_loss(&as_rows(&truth))?);

    let mut off = truth.clone();
    off[0] += 3.0;
    println!("after nudging the top by 3: {}", h.coherent_loss(&as_rows(&off))?);
    Ok(())
}
