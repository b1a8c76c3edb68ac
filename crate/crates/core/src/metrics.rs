//! Point and probabilistic scores, and the report that collects them per
//! vertex and per level.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::quantile::{is_monotone, pinball_loss};

/// Mean absolute error ×100, scaled by the mean in-sample one-step change.
pub fn mase(insample: &[f64], truth: &[f64], forecast: &[f64]) -> Result<f64> {
    if insample.len() < 2 {
        return Err(Error::Data("MASE needs at least two in-sample points".into()));
    }
    if truth.len() != forecast.len() {
        return Err(Error::dim("MASE forecast length", truth.len(), forecast.len()));
    }
    if truth.is_empty() {
        return Err(Error::Data("MASE needs a non-empty horizon".into()));
    }
    let denom = insample.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (insample.len() - 1) as f64;
    if !(denom > 0.0) {
        return Err(Error::Numeric("MASE scale is zero (constant in-sample series)".into()));
    }
    let num = truth.iter().zip(forecast).map(|(y, f)| (y - f).abs()).sum::<f64>();
    Ok(100.0 * num / truth.len() as f64 / denom)
}

/// `0.01, 0.02, ..., 0.99`
pub fn crps_grid() -> Vec<f64> {
    crate::quantile::dense_grid()
}

/// Twice the mean pinball loss over a quantile grid.
pub fn crps_from_quantiles(truth: f64, taus: &[f64], quantiles: &[f64]) -> Result<f64> {
    if taus.len() != quantiles.len() {
        return Err(Error::dim("CRPS quantile count", taus.len(), quantiles.len()));
    }
    if taus.is_empty() {
        return Err(Error::Data("CRPS needs at least one quantile".into()));
    }
    if !taus.windows(2).all(|w| w[0] < w[1]) || !is_monotone(quantiles) {
        return Err(Error::Numeric("CRPS grid is not monotone".into()));
    }
    let s: f64 = taus.iter().zip(quantiles).map(|(&t, &q)| pinball_loss(truth, q, t)).sum();
    Ok(2.0 * s / taus.len() as f64)
}

/// RMSE over the population standard deviation of `truth`.
pub fn nrmse(truth: &[f64], forecast: &[f64]) -> Result<f64> {
    if truth.len() != forecast.len() {
        return Err(Error::dim("NRMSE forecast length", truth.len(), forecast.len()));
    }
    if truth.is_empty() {
        return Err(Error::Data("NRMSE needs a non-empty horizon".into()));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let sd = (truth.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Numeric("NRMSE undefined for constant truth".into()));
    }
    let rmse = (truth.iter().zip(forecast).map(|(y, f)| (y - f) * (y - f)).sum::<f64>() / n).sqrt();
    Ok(rmse / sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexScore {
    pub vertex: String,
    pub level: usize,
    pub mase: f64,
    pub crps: Option<f64>,
    pub nrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: usize,
    pub mase: f64,
    pub crps: Option<f64>,
    pub nrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub vertices: Vec<VertexScore>,
    pub levels: Vec<LevelScore>,
    pub coherent_loss: f64,
    pub metadata: BTreeMap<String, String>,
}

/// Forecasts for every vertex over the same horizon, hierarchy row order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput<'a> {
    pub insample: &'a [Vec<f64>],
    pub truth: &'a [Vec<f64>],
    pub point: &'a [Vec<f64>],
    /// `quantiles[v][t]` over `taus`, when available.
    pub quantiles: Option<(&'a [f64], &'a [Vec<Vec<f64>>])>,
}

impl EvalReport {
    pub fn build(model: impl Into<String>, hierarchy: &Hierarchy, input: &EvalInput<'_>) -> Result<Self> {
        let n = hierarchy.len();
        for (what, rows) in [("insample rows", input.insample), ("truth rows", input.truth), ("forecast rows", input.point)] {
            if rows.len() != n {
                return Err(Error::dim(what, n, rows.len()));
            }
        }
        let mut vertices = Vec::with_capacity(n);
        for v in 0..n {
            let crps = match input.quantiles {
                Some((taus, q)) => {
                    let rows = &q[v];
                    if rows.len() != input.truth[v].len() {
                        return Err(Error::dim("quantile rows", input.truth[v].len(), rows.len()));
                    }
                    let mut s = 0.0;
                    for (y, qs) in input.truth[v].iter().zip(rows) {
                        s += crps_from_quantiles(*y, taus, qs)?;
                    }
                    Some(s / rows.len() as f64)
                }
                None => None,
            };
            vertices.push(VertexScore {
                vertex: hierarchy.id(v).to_string(),
                level: hierarchy.level(v),
                mase: mase(&input.insample[v], &input.truth[v], &input.point[v])?,
                crps,
                nrmse: nrmse(&input.truth[v], &input.point[v])?,
            });
        }
        let coherent_loss = hierarchy.coherent_loss(input.point)?;
        let report = EvalReport {
            model: model.into(),
            levels: level_means(&vertices),
            vertices,
            coherent_loss,
            metadata: BTreeMap::new(),
        };
        report.check()?;
        Ok(report)
    }

    fn check(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        let bad = self
            .vertices
            .iter()
            .any(|v| !ok(v.mase) || !ok(v.nrmse) || v.crps.is_some_and(|c| !ok(c)));
        if bad || !ok(self.coherent_loss) {
            return Err(Error::Numeric(format!("non-finite or negative score in report '{}'", self.model)));
        }
        Ok(())
    }

    pub fn mean_mase(&self) -> f64 {
        self.vertices.iter().map(|v| v.mase).sum::<f64>() / self.vertices.len() as f64
    }

    pub fn mean_crps(&self) -> Option<f64> {
        let c: Option<Vec<f64>> = self.vertices.iter().map(|v| v.crps).collect();
        c.map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }
}

fn level_means(vertices: &[VertexScore]) -> Vec<LevelScore> {
    let mut by: BTreeMap<usize, Vec<&VertexScore>> = BTreeMap::new();
    for v in vertices {
        by.entry(v.level).or_default().push(v);
    }
    by.into_iter()
        .map(|(level, vs)| {
            let k = vs.len() as f64;
            let crps: Option<Vec<f64>> = vs.iter().map(|v| v.crps).collect();
            LevelScore {
                level,
                mase: vs.iter().map(|v| v.mase).sum::<f64>() / k,
                crps: crps.map(|c| c.iter().sum::<f64>() / k),
                nrmse: vs.iter().map(|v| v.nrmse).sum::<f64>() / k,
            }
        })
        .collect()
}

/// Mean and population sd.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

/// Per-level table across models and seeds: `model,level,mase_mean,mase_sd,crps_mean,crps_sd,runs`.
pub fn write_level_table(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut groups: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        for l in &r.levels {
            let e = groups.entry((r.model.clone(), l.level)).or_default();
            e.0.push(l.mase);
            if let Some(c) = l.crps {
                e.1.push(c);
            }
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "model,level,mase_mean,mase_sd,crps_mean,crps_sd,runs").map_err(io)?;
    for ((model, level), (m, c)) in groups {
        let (mm, ms) = mean_sd(&m);
        let (cm, cs) = if c.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&c) };
        writeln!(w, "{model},{level},{mm},{ms},{cm},{cs},{}", m.len()).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mase_hand_case() {
        assert_eq!(mase(&[0.0, 1.0, 2.0, 3.0], &[4.0, 5.0], &[5.0, 5.0]).unwrap(), 50.0);
        assert_eq!(mase(&[0.0, 2.0], &[1.0], &[1.0]).unwrap(), 0.0);
        assert!(matches!(mase(&[1.0, 1.0, 1.0], &[1.0], &[2.0]), Err(Error::Numeric(_))));
        assert!(mase(&[1.0], &[1.0], &[2.0]).is_err());
    }

    /// Acklam's rational approximation, accurate to about 1e-9.
    fn norm_ppf(p: f64) -> f64 {
        let a = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
        let b = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
        let c = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
        let d = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
        let pl = 0.02425;
        if p < pl {
            let q = (-2.0 * p.ln()).sqrt();
            (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
                / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        } else if p <= 1.0 - pl {
            let q = p - 0.5;
            let r = q * q;
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
                / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        } else {
            -norm_ppf(1.0 - p)
        }
    }

    #[test]
    fn crps_of_standard_normal() {
        let taus = crps_grid();
        let q: Vec<f64> = taus.iter().map(|&t| norm_ppf(t)).collect();
        let c = crps_from_quantiles(0.0, &taus, &q).unwrap();
        let exact = (2f64.sqrt() - 1.0) / std::f64::consts::PI.sqrt();
        assert!((c / exact - 1.0).abs() < 0.02, "{c} vs {exact}");

        let fine: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        let qf: Vec<f64> = fine.iter().map(|&t| norm_ppf(t)).collect();
        for y in [0.0, 0.7, -1.9] {
            let a = crps_from_quantiles(y, &taus, &q).unwrap();
            let b = crps_from_quantiles(y, &fine, &qf).unwrap();
            assert!((a / b - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn crps_edge_cases() {
        let taus = crps_grid();
        assert_eq!(crps_from_quantiles(3.0, &taus, &vec![3.0; 99]).unwrap(), 0.0);
        let q: Vec<f64> = taus.iter().map(|&t| norm_ppf(t)).collect();
        let far = |c: f64| {
            let s: Vec<f64> = q.iter().map(|x| x + c).collect();
            crps_from_quantiles(0.0, &taus, &s).unwrap()
        };
        assert!(far(5.0) > far(3.0) && far(-5.0) > far(-3.0));
        let mut bad = q.clone();
        bad.swap(10, 11);
        assert!(crps_from_quantiles(0.0, &taus, &bad).is_err());
    }

    #[test]
    fn nrmse_cases() {
        let y = [1.0, 3.0, 2.0, 6.0];
        assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
        let m = [3.0; 4];
        assert!((nrmse(&y, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!(nrmse(&[2.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_of_oracle_is_zero() {
        let h = Hierarchy::seven_vertex();
        let leaves = [vec![1.0, 2.0, 4.0], vec![0.5, 0.1, 0.2], vec![3.0, 1.0, 2.0], vec![1.0, 1.5, 0.0]];
        let truth: Vec<Vec<f64>> = (0..3)
            .map(|t| h.aggregate(&leaves.iter().map(|l| l[t]).collect::<Vec<_>>()).unwrap())
            .collect();
        let rows: Vec<Vec<f64>> = (0..h.len()).map(|v| truth.iter().map(|r| r[v]).collect()).collect();
        let taus = crps_grid();
        let q: Vec<Vec<Vec<f64>>> = rows.iter().map(|r| r.iter().map(|&y| vec![y; 99]).collect()).collect();
        let r = EvalReport::build(
            "oracle",
            &h,
            &EvalInput {
                insample: &rows,
                truth: &rows,
                point: &rows,
                quantiles: Some((&taus, &q)),
            },
        )
        .unwrap();
        assert_eq!(r.mean_mase(), 0.0);
        assert_eq!(r.mean_crps(), Some(0.0));
        assert_eq!(r.coherent_loss, 0.0);
        assert_eq!(r.levels.len(), 3);
    }
}
