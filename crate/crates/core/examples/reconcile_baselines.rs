//! Reconcile noisy base forecasts on the built-in 7-vertex tree with every
//! projection and compare the error against the truth.

use hiermix::reconcile::{plan, Method};
use hiermix::Hierarchy;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> hiermix::Result<()> {
    let h = Hierarchy::seven_vertex();
    let s = h.summing_matrix().matrix;
    let n = h.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // noisier at the top, as base forecasts usually are
    let noise: Vec<Normal<f64>> = (0..n).map(|v| Normal::new(0.0, if v == 0 { 4.0 } else { 1.0 }).unwrap()).collect();
    let mut draw = |truth: &[f64]| -> Vec<f64> { truth.iter().zip(&noise).map(|(y, d)| y + d.sample(&mut rng)).collect() };

    let leaves_at = |t: usize| (0..h.n_leaves()).map(|j| 10.0 + (t + 3 * j) as f64 % 7.0).collect::<Vec<_>>();
    let val = 60;
    let mut base = Array2::zeros((val, n));
    let mut truth = Array2::zeros((val, n));
    for t in 0..val {
        let y = h.aggregate(&leaves_at(t))?;
        let b = draw(&y);
        for v in 0..n {
            truth[[t, v]] = y[v];
            base[[t, v]] = b[v];
        }
    }

    let y = h.aggregate(&leaves_at(val))?;
    let b = draw(&y);
    let sse = |f: &[f64]| f.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let rows = |f: &[f64]| f.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    println!("{:<10} {:>10} {:>12}", "method", "sse", "coherent");
    println!("{:<10} {:>10.3} {:>12.3e}", "base", sse(&b), h.coherent_loss(&rows(&b))?);
    for m in Method::ALL {
        let p = plan(m, &s, &base, &truth, None)?;
        let r = p.reconcile(&b)?;
        println!("{:<10} {:>10.3} {:>12.3e}", m.name(), sse(&r), h.coherent_loss(&rows(&r))?);
    }
    Ok(())
}
