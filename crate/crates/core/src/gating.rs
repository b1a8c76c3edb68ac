//! Per-vertex gating networks over expert forecasts, trained bottom-up with
//! a coherency penalty against the children's combined forecasts.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SeriesPanel;
use crate::error::{Error, Result};
use crate::experts::{Expert, ExpertKind};
use crate::hierarchy::Hierarchy;
use crate::neural::{adam_step, minibatches, Activation, AdamState, DenseNet, Standardizer};

pub const SIMPLEX_TOL: f64 = 1e-6;

/// Mixes a base seed with up to two indices (splitmix64 finaliser).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn check_simplex(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty()
        || (sum - 1.0).abs() > SIMPLEX_TOL
        || weights.iter().any(|w| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(w))
    {
        return Err(Error::Numeric(format!("weights off the simplex: {weights:?}")));
    }
    Ok(())
}

/// Pointwise `sum_l g_l * f_l`.
pub fn combine_forecasts(weights: &[f64], forecasts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != forecasts.len() {
        return Err(Error::dim("expert forecasts", weights.len(), forecasts.len()));
    }
    check_simplex(weights)?;
    let len = forecasts.first().map_or(0, Vec::len);
    if let Some(bad) = forecasts.iter().find(|f| f.len() != len) {
        return Err(Error::dim("forecast length", len, bad.len()));
    }
    Ok((0..len)
        .map(|t| weights.iter().zip(forecasts).map(|(w, f)| w * f[t]).sum())
        .collect())
}

/// `mean (c - y)^2 + lambda * mean (c - s)^2`, the penalty only when a child
/// sum is supplied.
pub fn recon_loss(combined: &[f64], truth: &[f64], child_sum: Option<&[f64]>, lambda: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!("coherency weight {lambda} must be non-negative")));
    }
    if combined.len() != truth.len() {
        return Err(Error::dim("truth length", combined.len(), truth.len()));
    }
    if combined.is_empty() {
        return Err(Error::Data("empty loss span".into()));
    }
    let n = combined.len() as f64;
    let mse = combined.iter().zip(truth).map(|(c, y)| (c - y).powi(2)).sum::<f64>() / n;
    let penalty = match child_sum {
        None => 0.0,
        Some(s) => {
            if s.len() != combined.len() {
                return Err(Error::dim("child sum length", combined.len(), s.len()));
            }
            combined.iter().zip(s).map(|(c, s)| (c - s).powi(2)).sum::<f64>() / n
        }
    };
    Ok(mse + lambda * penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub omega: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lambda: f64,
    /// Per-level overrides keyed by level number.
    pub level_lambda: BTreeMap<String, f64>,
    /// Restrict gate training to the validation split.
    pub validation_only: bool,
    pub patience: Option<usize>,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            omega: 12,
            hidden: 60,
            lr: 1e-4,
            epochs: 1200,
            batch: 16,
            lambda: 0.1,
            level_lambda: BTreeMap::new(),
            validation_only: false,
            patience: None,
        }
    }
}

impl GateConfig {
    pub fn lambda_for_level(&self, level: usize) -> f64 {
        self.level_lambda
            .get(&level.to_string())
            .copied()
            .unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(Error::Config("gate window, width and batch must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("gate learning rate must be positive".into()));
        }
        for (k, v) in std::iter::once(("default", &self.lambda))
            .chain(self.level_lambda.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if *v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("coherency weight for level {k} is negative")));
            }
            if k != "default" && k.parse::<usize>().is_err() {
                return Err(Error::Config(format!("level_lambda key `{k}` is not a level number")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingNetwork {
    /// `omega -> hidden (tanh) -> L (softmax)`
    pub net: DenseNet,
    pub omega: usize,
    pub n_experts: usize,
    pub lambda: f64,
    pub scaler: Standardizer,
}

impl GatingNetwork {
    pub fn new(omega: usize, hidden: usize, n_experts: usize, lambda: f64, scaler: Standardizer, seed: u64) -> Result<Self> {
        if n_experts == 0 {
            return Err(Error::Config("a gate needs at least one expert".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(
            omega,
            &[(hidden, Activation::Tanh), (n_experts, Activation::Softmax)],
            &mut rng,
        )?;
        Ok(GatingNetwork {
            net,
            omega,
            n_experts,
            lambda,
            scaler,
        })
    }

    fn scaled(&self, windows: &Array2<f64>) -> Result<Array2<f64>> {
        if windows.ncols() != self.omega {
            return Err(Error::dim("gate window width", self.omega, windows.ncols()));
        }
        Ok(windows.mapv(|x| self.scaler.transform(x)))
    }

    /// Simplex weights per window row.
    pub fn weights_batch(&self, windows: &Array2<f64>) -> Result<Array2<f64>> {
        let w = self.net.predict(&self.scaled(windows)?)?;
        for row in w.rows() {
            check_simplex(row.as_slice().expect("row-major"))?;
        }
        Ok(w)
    }

    pub fn weights(&self, window: &[f64]) -> Result<Vec<f64>> {
        let w = Array2::from_shape_vec((1, window.len()), window.to_vec())
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(self.weights_batch(&w)?.row(0).to_vec())
    }

    /// One Adam step on `rows` of `data`; returns the batch loss in scaled
    /// units.
    pub fn train_step(&mut self, data: &GateData, rows: &[usize], adam: &mut AdamState) -> Result<f64> {
        let x = self.scaled(&data.windows.select(Axis(0), rows))?;
        let cache = self.net.forward(&x)?;
        let g = cache.output();
        let scale = self.scaler.scale;
        let b = rows.len() as f64;
        let mut grad = Array2::<f64>::zeros(g.raw_dim());
        let mut loss = 0.0;
        for (r, &i) in rows.iter().enumerate() {
            let f = data.forecasts.row(i);
            let combined = g.row(r).dot(&f);
            let err = (combined - data.truth[i]) / scale;
            let mut d = 2.0 * err;
            loss += err * err;
            if let Some(s) = &data.child_sum {
                let gap = (combined - s[i]) / scale;
                d += 2.0 * self.lambda * gap;
                loss += self.lambda * gap * gap;
            }
            // d combined / d g_l = f_l / scale
            for l in 0..self.n_experts {
                grad[[r, l]] = d * f[l] / scale / b;
            }
        }
        let grads = self.net.backward(&cache, &grad)?;
        adam_step(&mut self.net, &grads, adam)?;
        Ok(loss / b)
    }
}

/// Aligned gate training rows: `windows[r]` precedes `truth[r]`, and
/// `forecasts[r]` holds every expert's one-step forecast of it.
#[derive(Debug, Clone, PartialEq)]
pub struct GateData {
    pub windows: Array2<f64>,
    pub forecasts: Array2<f64>,
    pub truth: Vec<f64>,
    pub child_sum: Option<Vec<f64>>,
}

impl GateData {
    pub fn rows(&self) -> usize {
        self.truth.len()
    }

    fn validate(&self, omega: usize, n_experts: usize) -> Result<()> {
        let n = self.rows();
        if n == 0 {
            return Err(Error::Data("no gate training rows".into()));
        }
        if self.windows.dim() != (n, omega) {
            return Err(Error::dim("gate windows", n, self.windows.nrows()));
        }
        if self.forecasts.dim() != (n, n_experts) {
            return Err(Error::Data(format!(
                "expert forecasts are {:?}, expected {n} rows for {n_experts} experts",
                self.forecasts.dim()
            )));
        }
        if let Some(s) = &self.child_sum {
            if s.len() != n {
                return Err(Error::dim("child sums", n, s.len()));
            }
        }
        Ok(())
    }

    /// Combined forecasts of `gate` on these rows.
    pub fn combined(&self, gate: &GatingNetwork) -> Result<Vec<f64>> {
        let w = gate.weights_batch(&self.windows)?;
        Ok((0..self.rows()).map(|r| w.row(r).dot(&self.forecasts.row(r))).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean per-row loss per epoch, scaled units.
    pub loss: Vec<f64>,
    /// Mean gate weights over the training rows after each epoch.
    pub weights: Vec<Vec<f64>>,
}

impl TrainingHistory {
    pub fn write_weights_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        let l = self.weights.first().map_or(0, Vec::len);
        let mut header = vec!["epoch".to_string()];
        header.extend((0..l).map(|i| format!("expert_{i}")));
        w.write_record(&header).map_err(|e| Error::parse(path, e))?;
        for (epoch, row) in self.weights.iter().enumerate() {
            let mut rec = vec![epoch.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| Error::parse(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn train_gate(
    data: &GateData,
    scaler: Standardizer,
    config: &GateConfig,
    lambda: f64,
    seed: u64,
) -> Result<(GatingNetwork, TrainingHistory)> {
    config.validate()?;
    let n_experts = data.forecasts.ncols();
    data.validate(config.omega, n_experts)?;
    if data.forecasts.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("expert forecasts over the gate span are not finite".into()));
    }
    let lambda = if data.child_sum.is_some() { lambda } else { 0.0 };
    let mut gate = GatingNetwork::new(config.omega, config.hidden, n_experts, lambda, scaler, seed)?;
    let mut adam = AdamState::new(&gate.net, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let mut history = TrainingHistory::default();
    let (mut best, mut stale) = (f64::INFINITY, 0usize);
    for _ in 0..config.epochs {
        let mut total = 0.0;
        for batch in minibatches(data.rows(), config.batch, &mut rng) {
            total += gate.train_step(data, &batch, &mut adam)? * batch.len() as f64;
        }
        let epoch_loss = total / data.rows() as f64;
        history.loss.push(epoch_loss);
        let w = gate.weights_batch(&data.windows)?;
        history
            .weights
            .push(w.mean_axis(Axis(0)).expect("non-empty").to_vec());
        if let Some(p) = config.patience {
            if epoch_loss < best - 1e-12 {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= p {
                    break;
                }
            }
        }
    }
    Ok((gate, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureForecaster {
    pub vertex: String,
    pub experts: Vec<Expert>,
    pub gate: GatingNetwork,
    pub history: TrainingHistory,
}

impl MixtureForecaster {
    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    /// Minimum history before a mixture forecast is defined.
    pub fn min_history(&self) -> usize {
        self.experts
            .iter()
            .map(Expert::min_history)
            .max()
            .unwrap_or(0)
            .max(self.gate.omega)
    }

    pub fn expert_one_step(&self, history: &[f64]) -> Result<Vec<f64>> {
        self.experts.iter().map(|e| e.one_step(history)).collect()
    }

    /// Combined next-step forecast and the gate weights used.
    pub fn one_step(&self, history: &[f64]) -> Result<(f64, Vec<f64>)> {
        if history.len() < self.min_history() {
            return Err(Error::Data(format!(
                "series of length {} shorter than the mixture history {}",
                history.len(),
                self.min_history()
            )));
        }
        let w = self.gate.weights(&history[history.len() - self.gate.omega..])?;
        let f = self.expert_one_step(history)?;
        Ok((w.iter().zip(&f).map(|(a, b)| a * b).sum(), w))
    }

    /// `h` recursive steps, each appended to the history before the next.
    pub fn forecast_mixture(&self, series: &[f64], h: usize) -> Result<Vec<f64>> {
        if h == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        let mut buf = series.to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let (y, _) = self.one_step(&buf)?;
            buf.push(y);
            out.push(y);
        }
        Ok(out)
    }

    /// Rolling one-step combined forecasts for `from..=to`.
    pub fn rolling(&self, series: &[f64], from: usize, to: usize) -> Result<(Vec<f64>, Array2<f64>)> {
        let data = self.gate_rows(series, from, to)?;
        let w = self.gate.weights_batch(&data.windows)?;
        let combined = (0..data.rows()).map(|r| w.row(r).dot(&data.forecasts.row(r))).collect();
        Ok((combined, data.forecasts))
    }

    fn gate_rows(&self, series: &[f64], from: usize, to: usize) -> Result<GateData> {
        gate_rows(&self.experts, series, self.gate.omega, from, to)
    }
}

/// Builds gate rows for indices `from..=to` of `series`.
pub fn gate_rows(experts: &[Expert], series: &[f64], omega: usize, from: usize, to: usize) -> Result<GateData> {
    if from < omega {
        return Err(Error::Data(format!("index {from} has fewer than {omega} past values")));
    }
    let rows = to + 1 - from;
    let mut forecasts = Array2::zeros((rows, experts.len()));
    for (l, e) in experts.iter().enumerate() {
        let f = e.rolling_forecasts(series, from, to)?;
        forecasts.column_mut(l).assign(&Array1::from(f));
    }
    let windows = Array2::from_shape_fn((rows, omega), |(r, c)| series[from + r - omega + c]);
    Ok(GateData {
        windows,
        forecasts,
        truth: series[from..=to].to_vec(),
        child_sum: None,
    })
}

/// Everything the bottom-up pass needs besides the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSetup<'a> {
    pub experts: &'a [ExpertKind],
    pub gate: &'a GateConfig,
    pub seed: u64,
}

impl MixtureSetup<'_> {
    /// First index every expert and the gate can forecast.
    pub fn first_index(&self) -> usize {
        self.experts
            .iter()
            .map(ExpertKind::min_history)
            .max()
            .unwrap_or(0)
            .max(self.gate.omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottomUpResult {
    /// Row order of the hierarchy.
    pub forecasters: Vec<MixtureForecaster>,
    /// Levels in training order.
    pub level_order: Vec<usize>,
    /// Gate span `from..=to`.
    pub span: (usize, usize),
    /// Combined forecasts over the span, row order.
    pub combined: Vec<Vec<f64>>,
}

/// Fits every vertex's experts on the train split, then trains gates level
/// by level from the leaves up. Same-level vertices run in parallel on the
/// current rayon pool; results do not depend on its size.
pub fn train_hierarchy_bottom_up(
    panel: &SeriesPanel,
    hierarchy: &Hierarchy,
    setup: &MixtureSetup<'_>,
) -> Result<BottomUpResult> {
    setup.gate.validate()?;
    if setup.experts.is_empty() {
        return Err(Error::Config("expert roster is empty".into()));
    }
    if panel.ids.len() != hierarchy.len() || panel.ids.iter().zip(hierarchy.vertices()).any(|(a, b)| a != b) {
        return Err(Error::Data("panel series do not match the hierarchy row order".into()));
    }
    let split = panel.split;
    let first = setup.first_index();
    let from = if setup.gate.validation_only {
        split.train_end.max(first)
    } else {
        first
    };
    if split.train_end <= first || split.val_end <= from + 1 {
        return Err(Error::Data(format!(
            "training split of {} rows too short for history {first}",
            split.train_end
        )));
    }
    let to = split.val_end - 1;
    let n = hierarchy.len();

    let fitted: Vec<(Vec<Expert>, GateData)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let series = &panel.values[v];
            let experts = setup
                .experts
                .iter()
                .enumerate()
                .map(|(l, kind)| {
                    let mut e = Expert::new(kind.clone());
                    e.fit(&series[..split.train_end], derive_seed(setup.seed, v as u64, 100 + l as u64))?;
                    Ok(e)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = gate_rows(&experts, series, setup.gate.omega, from, to)?;
            Ok((experts, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut slots: Vec<Option<MixtureForecaster>> = vec![None; n];
    let mut combined: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut level_order = Vec::new();
    for (level, vertices) in hierarchy.levels_bottom_up() {
        level_order.push(level);
        let lambda = setup.gate.lambda_for_level(level);
        let trained: Vec<(usize, MixtureForecaster, Vec<f64>)> = vertices
            .par_iter()
            .map(|&v| {
                let (experts, rows) = &fitted[v];
                let mut data = rows.clone();
                data.child_sum = hierarchy.child_sum(v, &combined);
                let scaler = Standardizer::fit(&panel.values[v][..split.train_end]);
                let (gate, history) = train_gate(&data, scaler, setup.gate, lambda, derive_seed(setup.seed, v as u64, 1))?;
                let out = data.combined(&gate)?;
                let f = MixtureForecaster {
                    vertex: hierarchy.id(v).to_string(),
                    experts: experts.clone(),
                    gate,
                    history,
                };
                Ok((v, f, out))
            })
            .collect::<Result<Vec<_>>>()?;
        for (v, f, out) in trained {
            slots[v] = Some(f);
            combined[v] = out;
        }
    }
    Ok(BottomUpResult {
        forecasters: slots.into_iter().map(|f| f.expect("every level visited")).collect(),
        level_order,
        span: (from, to),
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::simulate_hierarchical;
    use rand::Rng;

    #[test]
    fn combine_hand_cases() {
        let f = vec![vec![1.0, 3.0], vec![3.0, 5.0], vec![-2.0, 9.0]];
        assert_eq!(combine_forecasts(&[0.0, 1.0, 0.0], &f).unwrap(), vec![3.0, 5.0]);
        assert_eq!(combine_forecasts(&[0.5, 0.5], &f[..2]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(combine_forecasts(&[0.25, 0.75], &[vec![4.0], vec![8.0]]).unwrap(), vec![7.0]);
        assert!(combine_forecasts(&[0.5, 0.6], &f[..2]).is_err());
        assert!(combine_forecasts(&[1.0], &f[..2]).is_err());
    }

    #[test]
    fn recon_loss_hand_cases() {
        assert_eq!(recon_loss(&[1.0, 2.0], &[1.0, 2.0], Some(&[1.0, 2.0]), 0.3).unwrap(), 0.0);
        assert_eq!(recon_loss(&[2.0, 0.0], &[1.0, 1.0], Some(&[9.0, 9.0]), 0.0).unwrap(), 1.0);
        assert!((recon_loss(&[2.0], &[1.0], Some(&[3.0]), 0.1).unwrap() - 1.1).abs() < 1e-15);
        assert!(recon_loss(&[2.0], &[1.0], None, -0.1).is_err());
    }

    #[test]
    fn recon_loss_monotone_in_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let c: f64 = rng.random_range(-5.0..5.0);
            let y: f64 = rng.random_range(-5.0..5.0);
            let g1: f64 = rng.random_range(0.0..3.0);
            let g2 = g1 + rng.random_range(0.0..3.0);
            let lam = rng.random_range(0.0..2.0);
            let a = recon_loss(&[c], &[y], Some(&[c - g1]), lam).unwrap();
            let b = recon_loss(&[c], &[y], Some(&[c + g2]), lam).unwrap();
            assert!(b >= a - 1e-12);
        }
    }

    fn synthetic_rows(n: usize, seed: u64) -> GateData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<f64> = (0..n + 4).map(|t| (t as f64 / 3.0).sin() * 2.0).collect();
        let windows = Array2::from_shape_fn((n, 4), |(r, c)| series[r + c]);
        let truth = series[4..].to_vec();
        let forecasts = Array2::from_shape_fn((n, 3), |(r, l)| match l {
            1 => truth[r],
            _ => truth[r] + rng.random_range(2.0..6.0) * if l == 0 { 1.0 } else { -1.0 },
        });
        GateData {
            windows,
            forecasts,
            truth,
            child_sum: None,
        }
    }

    #[test]
    fn gate_finds_the_perfect_expert() {
        let data = synthetic_rows(120, 1);
        let cfg = GateConfig {
            omega: 4,
            hidden: 16,
            lr: 1e-2,
            epochs: 150,
            ..GateConfig::default()
        };
        let (gate, hist) = train_gate(&data, Standardizer::fit(&data.truth), &cfg, 0.1, 7).unwrap();
        assert!(hist.loss.last().unwrap() < &hist.loss[0]);
        let w = gate.weights_batch(&data.windows).unwrap();
        let mean = w.column(1).mean().unwrap();
        assert!(mean >= 0.9, "weight on perfect expert {mean}");
        assert_eq!(gate.lambda, 0.0);
    }

    #[test]
    fn single_expert_gate_is_constant_one() {
        let mut data = synthetic_rows(40, 2);
        data.forecasts = data.forecasts.select(Axis(1), &[0]);
        let cfg = GateConfig {
            omega: 4,
            epochs: 3,
            ..GateConfig::default()
        };
        let (gate, hist) = train_gate(&data, Standardizer::fit(&data.truth), &cfg, 0.1, 0).unwrap();
        let w = gate.weights_batch(&data.windows).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        let combined = data.combined(&gate).unwrap();
        let mse = recon_loss(&combined, &data.truth, None, 0.0).unwrap();
        let scale = Standardizer::fit(&data.truth).scale;
        assert!((hist.loss.last().unwrap() - mse / (scale * scale)).abs() < 1e-9);
    }

    #[test]
    fn large_lambda_pulls_towards_children() {
        let mut data = synthetic_rows(120, 3);
        // children sum to the low expert exactly
        data.child_sum = Some((0..120).map(|r| data.forecasts[[r, 0]]).collect());
        let cfg = GateConfig {
            omega: 4,
            hidden: 16,
            lr: 1e-2,
            epochs: 100,
            ..GateConfig::default()
        };
        let scaler = Standardizer::fit(&data.truth);
        let gap = |lambda: f64| {
            let (gate, _) = train_gate(&data, scaler, &cfg, lambda, 5).unwrap();
            let c = data.combined(&gate).unwrap();
            recon_loss(&c, data.child_sum.as_ref().unwrap(), None, 0.0).unwrap()
        };
        assert!(gap(1e3) < gap(0.0));
    }

    #[test]
    fn mixture_reductions() {
        let series: Vec<f64> = (0..60).map(|t| 10.0 * 0.97f64.powi(t)).collect();
        let mut a = Expert::new(ExpertKind::ArLs { p: 1 });
        a.fit(&series, 0).unwrap();
        let mut b = Expert::new(ExpertKind::MovingAverage { window: 3 });
        b.fit(&series, 0).unwrap();
        let mut gate = GatingNetwork::new(4, 8, 2, 0.0, Standardizer::fit(&series), 0).unwrap();
        // zero weights and a huge bias on expert 0 make a one-hot gate
        let last = gate.net.layers_mut().len() - 1;
        gate.net.layers_mut()[last].weights.fill(0.0);
        gate.net.layers_mut()[last].bias = Array1::from(vec![800.0, 0.0]);
        let m = MixtureForecaster {
            vertex: "x".into(),
            experts: vec![a.clone(), b],
            gate,
            history: TrainingHistory::default(),
        };
        let mix = m.forecast_mixture(&series, 5).unwrap();
        let solo = a.forecast_recursive(&series, 5).unwrap();
        assert!(mix.iter().zip(&solo).all(|(x, y)| (x - y).abs() < 1e-12));
        assert_eq!(m.forecast_mixture(&series, 1).unwrap().len(), 1);
        assert!(m.forecast_mixture(&series[..2], 1).is_err());
    }

    #[test]
    fn equal_weight_two_ar_recursion() {
        let series = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        let mk = |c: f64| {
            let mut e = Expert::new(ExpertKind::ArLs { p: 1 });
            e.fit(&[1.0, c, c * c, c * c * c], 0).unwrap();
            e
        };
        let mut gate = GatingNetwork::new(2, 4, 2, 0.0, Standardizer::fit(&series), 0).unwrap();
        let last = gate.net.layers_mut().len() - 1;
        gate.net.layers_mut()[last].weights.fill(0.0);
        gate.net.layers_mut()[last].bias.fill(0.0);
        let m = MixtureForecaster {
            vertex: "x".into(),
            experts: vec![mk(0.5), mk(1.5)],
            gate,
            history: TrainingHistory::default(),
        };
        // x_{k+1} = 0.5 (0.5 + 1.5) x_k = x_k
        let f = m.forecast_mixture(&series, 3).unwrap();
        assert!(f.iter().all(|v| (v - 16.0).abs() < 1e-6), "{f:?}");
    }

    fn tiny_setup() -> (Vec<ExpertKind>, GateConfig) {
        let experts = vec![
            ExpertKind::ArLs { p: 2 },
            ExpertKind::SeasonalNaive { period: 12 },
            ExpertKind::MovingAverage { window: 4 },
        ];
        let gate = GateConfig {
            omega: 12,
            hidden: 8,
            lr: 1e-3,
            epochs: 5,
            ..GateConfig::default()
        };
        (experts, gate)
    }

    #[test]
    fn bottom_up_order_and_determinism() {
        let h = Hierarchy::seven_vertex();
        let panel = simulate_hierarchical(&h, 200, 12, 4).unwrap();
        let (experts, gate) = tiny_setup();
        let setup = MixtureSetup {
            experts: &experts,
            gate: &gate,
            seed: 9,
        };
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train_hierarchy_bottom_up(&panel, &h, &setup))
            .unwrap();
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| train_hierarchy_bottom_up(&panel, &h, &setup))
            .unwrap();
        assert_eq!(serial.level_order, vec![2, 1, 0]);
        assert_eq!(serial, parallel);
        // leaves train without a coherency term
        for v in 0..h.len() {
            let expect = if h.is_leaf(v) { 0.0 } else { gate.lambda };
            assert_eq!(serial.forecasters[v].gate.lambda, expect);
        }
    }

    #[test]
    fn single_vertex_hierarchy() {
        let h = Hierarchy::single("only");
        let panel = simulate_hierarchical(&h, 120, 12, 1).unwrap();
        let (experts, gate) = tiny_setup();
        let setup = MixtureSetup {
            experts: &experts,
            gate: &gate,
            seed: 0,
        };
        let res = train_hierarchy_bottom_up(&panel, &h, &setup).unwrap();
        assert_eq!(res.forecasters.len(), 1);
        assert_eq!(res.forecasters[0].gate.lambda, 0.0);
    }
}
