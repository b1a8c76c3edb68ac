//! Run-length change-point detection on forecast residuals, and the online
//! loop that shrinks gate weights toward uniform after a detected change.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{check_simplex, GateData, MixtureForecaster};
use crate::neural::AdamState;
use crate::quantile::QuantileGenerator;

/// Normal density with mean `mu` and variance `var_l + sigma2`.
pub fn upm_predictive(x: f64, mu: f64, var_l: f64, sigma2: f64) -> Result<f64> {
    Ok(log_upm_predictive(x, mu, var_l, sigma2)?.exp())
}

pub fn log_upm_predictive(x: f64, mu: f64, var_l: f64, sigma2: f64) -> Result<f64> {
    if !(var_l > 0.0 && sigma2 > 0.0) {
        return Err(Error::Numeric(format!(
            "predictive variance needs positive parts (run-length {var_l}, observation {sigma2})"
        )));
    }
    let v = var_l + sigma2;
    Ok(-0.5 * ((2.0 * PI * v).ln() + (x - mu) * (x - mu) / v))
}

/// One conjugate Normal update with known observation variance.
pub fn posterior_update(mu: f64, var_l: f64, x: f64, sigma2: f64) -> Result<(f64, f64)> {
    if !(var_l > 0.0 && sigma2 > 0.0) {
        return Err(Error::Numeric("posterior update needs positive variances".into()));
    }
    let var = 1.0 / (1.0 / var_l + 1.0 / sigma2);
    Ok((var * (mu / var_l + x / sigma2), var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionRule {
    /// MAP run length equals 1.
    #[default]
    MapIsOne,
    /// MAP run length falls below half its previous value.
    MapReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Probabilities, with a log-space step whenever the evidence underflows.
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BocpdConfig {
    pub hazard: f64,
    pub mu0: f64,
    pub var0: f64,
    pub sigma2: f64,
    pub r_max: usize,
    pub warmup: usize,
    pub rule: DetectionRule,
    pub space: Space,
}

impl Default for BocpdConfig {
    fn default() -> Self {
        BocpdConfig {
            hazard: 1e-3,
            mu0: 0.0,
            var0: 2.0,
            sigma2: 1.0,
            r_max: 500,
            warmup: 20,
            rule: DetectionRule::MapIsOne,
            space: Space::Linear,
        }
    }
}

impl BocpdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hazard > 0.0 && self.hazard < 1.0) {
            return Err(Error::Config(format!("hazard must lie in (0, 1), got {}", self.hazard)));
        }
        if !(self.var0 > 0.0 && self.sigma2 > 0.0) || !self.mu0.is_finite() {
            return Err(Error::Config("prior and observation variances must be positive".into()));
        }
        if self.r_max < 2 {
            return Err(Error::Config("r_max must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Observations seen so far, including this one.
    pub t: usize,
    pub map_run_length: usize,
    pub detected: bool,
    /// MAP run length dropped below half its previous value.
    pub reset: bool,
    /// ln p(x_t | x_{1:t-1})
    pub log_evidence: f64,
}

/// Posterior over run lengths `0..=min(t, r_max)` with Normal parameters
/// per run length.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthState {
    cfg: BocpdConfig,
    /// Probabilities, or log probabilities in `Space::Log`.
    post: Vec<f64>,
    mu: Vec<f64>,
    var: Vec<f64>,
    t: usize,
    prev_map: usize,
    fallbacks: usize,
}

impl RunLengthState {
    pub fn new(cfg: BocpdConfig) -> Result<Self> {
        cfg.validate()?;
        let post = match cfg.space {
            Space::Linear => vec![1.0],
            Space::Log => vec![0.0],
        };
        Ok(RunLengthState {
            mu: vec![cfg.mu0],
            var: vec![cfg.var0],
            cfg,
            post,
            t: 0,
            prev_map: 0,
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &BocpdConfig {
        &self.cfg
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Steps that needed the log-space fallback.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn params(&self) -> (&[f64], &[f64]) {
        (&self.mu, &self.var)
    }

    pub fn posterior(&self) -> Vec<f64> {
        match self.cfg.space {
            Space::Linear => self.post.clone(),
            Space::Log => self.post.iter().map(|l| l.exp()).collect(),
        }
    }

    pub fn log_posterior(&self) -> Vec<f64> {
        match self.cfg.space {
            Space::Linear => self.post.iter().map(|p| p.ln()).collect(),
            Space::Log => self.post.clone(),
        }
    }

    pub fn map_run_length(&self) -> usize {
        argmax(&self.post)
    }

    pub fn step(&mut self, x: f64) -> Result<StepOutcome> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite residual {x} at step {}", self.t + 1)));
        }
        let h = self.cfg.hazard;
        let log_pi = self
            .mu
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| log_upm_predictive(x, m, v, self.cfg.sigma2))
            .collect::<Result<Vec<_>>>()?;

        let (mut post, log_evidence) = match self.cfg.space {
            Space::Linear => {
                let w: Vec<f64> = self.post.iter().zip(&log_pi).map(|(p, l)| p * l.exp()).collect();
                let evidence: f64 = w.iter().sum();
                if evidence.is_normal() {
                    let mut next = Vec::with_capacity(w.len() + 1);
                    next.push(h);
                    next.extend(w.iter().map(|wi| (1.0 - h) * wi / evidence));
                    (next, evidence.ln())
                } else {
                    self.fallbacks += 1;
                    let lp: Vec<f64> = self.post.iter().map(|p| p.ln()).collect();
                    let (next, lse) = log_step(&lp, &log_pi, h);
                    (next.into_iter().map(f64::exp).collect(), lse)
                }
            }
            Space::Log => log_step(&self.post, &log_pi, h),
        };
        if !log_evidence.is_finite() {
            return Err(Error::Numeric(format!("run-length evidence vanished at step {}", self.t + 1)));
        }

        let mut mu = Vec::with_capacity(self.mu.len() + 1);
        let mut var = Vec::with_capacity(self.var.len() + 1);
        mu.push(self.cfg.mu0);
        var.push(self.cfg.var0);
        for (&m, &v) in self.mu.iter().zip(&self.var) {
            let (m2, v2) = posterior_update(m, v, x, self.cfg.sigma2)?;
            mu.push(m2);
            var.push(v2);
        }

        let keep = self.cfg.r_max + 1;
        if post.len() > keep {
            post.truncate(keep);
            mu.truncate(keep);
            var.truncate(keep);
            match self.cfg.space {
                Space::Linear => {
                    let s: f64 = post.iter().sum();
                    post.iter_mut().for_each(|p| *p /= s);
                }
                Space::Log => {
                    let s = log_sum_exp(&post);
                    post.iter_mut().for_each(|p| *p -= s);
                }
            }
        }
        self.post = post;
        self.mu = mu;
        self.var = var;
        self.t += 1;

        let map = self.map_run_length();
        let reset = self.t > 1 && 2 * map < self.prev_map;
        let hit = match self.cfg.rule {
            DetectionRule::MapIsOne => map == 1,
            DetectionRule::MapReset => reset,
        };
        let detected = hit && self.t != 1 && self.t > self.cfg.warmup;
        self.prev_map = map;
        Ok(StepOutcome {
            t: self.t,
            map_run_length: map,
            detected,
            reset,
            log_evidence,
        })
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Growth/change recursion in logs; returns the normalized log posterior and
/// the log evidence.
fn log_step(log_post: &[f64], log_pi: &[f64], h: f64) -> (Vec<f64>, f64) {
    let lw: Vec<f64> = log_post.iter().zip(log_pi).map(|(a, b)| a + b).collect();
    let lse = log_sum_exp(&lw);
    let mut next = Vec::with_capacity(lw.len() + 1);
    next.push(h.ln());
    let g = (1.0 - h).ln();
    next.extend(lw.iter().map(|l| g + l - lse));
    (next, lse)
}

/// Steps since the last detection; `None` when no shrinkage is active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub n: Option<u64>,
    pub beta0: f64,
    pub gamma: f64,
    /// Deactivate once `exp(-N / gamma)` falls below this.
    pub floor: f64,
}

impl ShrinkageState {
    pub fn new(beta0: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta0) {
            return Err(Error::Config(format!("beta0 must lie in [0, 1], got {beta0}")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(ShrinkageState {
            n: None,
            beta0,
            gamma,
            floor: 0.1,
        })
    }

    pub fn is_active(&self) -> bool {
        self.n.is_some()
    }

    fn decay(&self) -> Option<f64> {
        self.n.map(|n| (-(n as f64) / self.gamma).exp())
    }

    /// Blend weight toward uniform.
    pub fn factor(&self) -> f64 {
        self.decay().map_or(0.0, |d| self.beta0 * d)
    }

    pub fn trigger(&mut self) {
        self.n = Some(0);
    }

    /// Called after each step that used the current factor.
    pub fn advance(&mut self) {
        if let (Some(n), Some(d)) = (self.n, self.decay()) {
            self.n = if d < self.floor { None } else { Some(n + 1) };
        }
    }
}

pub fn shrink_weights(g: &[f64], shrink: &ShrinkageState) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&shrink.beta0) {
        return Err(Error::Config(format!("beta0 must lie in [0, 1], got {}", shrink.beta0)));
    }
    check_simplex(g)?;
    let f = shrink.factor();
    if f == 0.0 {
        return Ok(g.to_vec());
    }
    let u = 1.0 / g.len() as f64;
    Ok(g.iter().map(|w| (1.0 - f) * w + f * u).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub bocpd: BocpdConfig,
    pub beta0: f64,
    pub gamma: f64,
    pub mitigation: bool,
    /// Steps per gate update.
    pub batch: usize,
    /// Adam steps per gate update.
    pub epochs: usize,
    pub lr: f64,
    pub update_experts: bool,
    /// Stream prefix used for offline initialization.
    pub init_fraction: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            bocpd: BocpdConfig::default(),
            beta0: 1.0,
            gamma: 2.0,
            mitigation: true,
            batch: 1,
            epochs: 5,
            lr: 1e-3,
            update_experts: false,
            init_fraction: 0.8,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        self.bocpd.validate()?;
        ShrinkageState::new(self.beta0, self.gamma)?;
        if self.batch == 0 {
            return Err(Error::Config("online batch must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("online lr must be positive, got {}", self.lr)));
        }
        if !(self.init_fraction > 0.0 && self.init_fraction < 1.0) {
            return Err(Error::Config("init_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub t: usize,
    pub y: f64,
    pub yhat: f64,
    pub residual: f64,
    pub map_run_length: usize,
    pub detected: bool,
    /// Weights actually used, after shrinkage.
    pub weights: Vec<f64>,
    pub quantiles: Option<Vec<f64>>,
}

/// Runs the online loop over `stream[start..]`. `forecaster` must already
/// be fitted on `stream[..start]`; its gate (and experts when enabled) keep
/// learning as the stream arrives.
pub fn online_loop(
    forecaster: &mut MixtureForecaster,
    quantiles: Option<(&QuantileGenerator, &[f64])>,
    stream: &[f64],
    start: usize,
    cfg: &OnlineConfig,
    seed: u64,
) -> Result<Vec<OnlineRecord>> {
    cfg.validate()?;
    if start < forecaster.min_history() {
        return Err(Error::Data(format!(
            "online start {start} precedes the mixture history {}",
            forecaster.min_history()
        )));
    }
    if start >= stream.len() {
        return Err(Error::Data(format!("stream of length {} exhausted before step {start}", stream.len())));
    }
    let omega = forecaster.gate.omega;
    let l = forecaster.n_experts();
    let mut bocpd = RunLengthState::new(cfg.bocpd.clone())?;
    let mut shrink = ShrinkageState::new(cfg.beta0, cfg.gamma)?;
    let mut adam = AdamState::new(&forecaster.gate.net, cfg.lr);
    let mut pending: Vec<usize> = Vec::with_capacity(cfg.batch);
    let mut out = Vec::with_capacity(stream.len() - start);

    for t in start..stream.len() {
        let history = &stream[..t];
        let f = forecaster.expert_one_step(history)?;
        let g = forecaster.gate.weights(&history[t - omega..])?;
        let w = shrink_weights(&g, &shrink)?;
        let yhat: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        let y = stream[t];
        let residual = y - yhat;
        let step = bocpd.step(residual)?;
        if cfg.mitigation && step.detected {
            shrink.trigger();
        } else {
            shrink.advance();
        }
        let q = match quantiles {
            Some((gen, taus)) => Some(gen.quantiles(&history[t - omega..], yhat, taus)?),
            None => None,
        };
        out.push(OnlineRecord {
            t,
            y,
            yhat,
            residual,
            map_run_length: step.map_run_length,
            detected: step.detected,
            weights: w,
            quantiles: q,
        });

        pending.push(t);
        if pending.len() == cfg.batch {
            let rows = pending.len();
            let mut windows = Array2::zeros((rows, omega));
            let mut forecasts = Array2::zeros((rows, l));
            let mut truth = Vec::with_capacity(rows);
            for (r, &s) in pending.iter().enumerate() {
                for c in 0..omega {
                    windows[[r, c]] = stream[s - omega + c];
                }
                let fs = if s == t { f.clone() } else { forecaster.expert_one_step(&stream[..s])? };
                for k in 0..l {
                    forecasts[[r, k]] = fs[k];
                }
                truth.push(stream[s]);
            }
            let data = GateData {
                windows,
                forecasts,
                truth,
                child_sum: None,
            };
            let idx: Vec<usize> = (0..rows).collect();
            for _ in 0..cfg.epochs {
                forecaster.gate.train_step(&data, &idx, &mut adam)?;
            }
            if cfg.update_experts {
                for (k, e) in forecaster.experts.iter_mut().enumerate() {
                    e.fit(&stream[..=t], crate::gating::derive_seed(seed, t as u64, k as u64))?;
                }
            }
            pending.clear();
        }
    }
    Ok(out)
}

pub fn write_records_csv(path: &Path, records: &[OnlineRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let l = records.first().map_or(0, |r| r.weights.len());
    let nq = records.first().and_then(|r| r.quantiles.as_ref()).map_or(0, Vec::len);
    let mut header = String::from("t,y,yhat,residual,map_runlength,detected");
    for k in 0..l {
        header.push_str(&format!(",w_{k}"));
    }
    for k in 0..nq {
        header.push_str(&format!(",q_{k}"));
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in records {
        let mut line = format!(
            "{},{},{},{},{},{}",
            r.t, r.y, r.yhat, r.residual, r.map_run_length, r.detected as u8
        );
        for x in &r.weights {
            line.push_str(&format!(",{x}"));
        }
        for x in r.quantiles.iter().flatten() {
            line.push_str(&format!(",{x}"));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Sum of squared residuals over `records` with `t` in `from..to`.
pub fn cumulative_sq_error(records: &[OnlineRecord], from: usize, to: usize) -> f64 {
    records
        .iter()
        .filter(|r| (from..to).contains(&r.t))
        .map(|r| r.residual * r.residual)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }

    #[test]
    fn predictive_density() {
        let p = upm_predictive(0.3, 0.3, 0.5, 0.5).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-12);
        let a = upm_predictive(1.7, 1.0, 0.4, 1.0).unwrap();
        let b = upm_predictive(0.3, 1.0, 0.4, 1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
        let peak1 = upm_predictive(0.0, 0.0, 0.5, 0.5).unwrap();
        let peak2 = upm_predictive(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((peak2 / peak1 - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((a - normal_pdf(1.7, 1.0, 1.4)).abs() < 1e-14);
        assert!(upm_predictive(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn conjugate_update() {
        let (m, v) = posterior_update(0.0, 2.0, 1.0, 1.0).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-15 && (v - 2.0 / 3.0).abs() < 1e-15);
        let (m, v) = posterior_update(1.5, 0.7, 1.5, 1.0).unwrap();
        assert!((m - 1.5).abs() < 1e-15 && v < 0.7);

        // batch form with m observations of c
        let (c, s2, m0, v0) = (4.0, 1.0, 0.0, 2.0);
        let (mut mu, mut var) = (m0, v0);
        for _ in 0..100 {
            (mu, var) = posterior_update(mu, var, c, s2).unwrap();
        }
        let vb = 1.0 / (1.0 / v0 + 100.0 / s2);
        let mb = vb * (m0 / v0 + 100.0 * c / s2);
        assert!((mu - mb).abs() < 1e-9 && (var - vb).abs() < 1e-12);
        assert!((mu - c).abs() < 0.05 * c && (var / (s2 / 100.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn first_step_mass_at_one() {
        let mut s = RunLengthState::new(BocpdConfig {
            warmup: 0,
            ..Default::default()
        })
        .unwrap();
        let o = s.step(0.4).unwrap();
        assert_eq!(o.map_run_length, 1);
        assert!(!o.detected);
        let p = s.posterior();
        assert!((p[0] - 1e-3).abs() < 1e-15 && (p[1] - (1.0 - 1e-3)).abs() < 1e-15);
        let (mu, var) = s.params();
        assert_eq!((mu[0], var[0]), (0.0, 2.0));
        assert!((mu[1] - 0.4 * 2.0 / 3.0).abs() < 1e-15);
    }

    /// Brute-force recursion on a short stream, no truncation.
    #[test]
    fn matches_direct_recursion() {
        let xs = [0.2, -0.5, 2.5, 3.1, 2.8, 0.0];
        let (h, m0, v0, s2) = (0.1, 0.0, 2.0, 1.0);
        let mut s = RunLengthState::new(BocpdConfig {
            hazard: h,
            warmup: 0,
            ..Default::default()
        })
        .unwrap();
        // joint over run lengths, with sufficient statistics kept as sums
        let mut joint = vec![1.0];
        let mut sums: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for &x in &xs {
            let pred: Vec<f64> = sums
                .iter()
                .map(|&(n, sx)| {
                    let v = 1.0 / (1.0 / v0 + n / s2);
                    let m = v * (m0 / v0 + sx / s2);
                    normal_pdf(x, m, v + s2)
                })
                .collect();
            let mut next = vec![h * joint.iter().zip(&pred).map(|(a, b)| a * b).sum::<f64>()];
            next.extend(joint.iter().zip(&pred).map(|(a, b)| (1.0 - h) * a * b));
            let mut ns = vec![(0.0, 0.0)];
            ns.extend(sums.iter().map(|&(n, sx)| (n + 1.0, sx + x)));
            joint = next;
            sums = ns;
            s.step(x).unwrap();
            let z: f64 = joint.iter().sum();
            for (a, b) in s.posterior().iter().zip(&joint) {
                assert!((a - b / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_and_variances_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.5).unwrap();
        let mut s = RunLengthState::new(BocpdConfig {
            r_max: 300,
            ..Default::default()
        })
        .unwrap();
        for _ in 0..1000 {
            s.step(n.sample(&mut rng)).unwrap();
            let total: f64 = s.posterior().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            let (mu, var) = s.params();
            assert_eq!((mu[0], var[0]), (0.0, 2.0));
            assert!(var.windows(2).all(|w| w[1] < w[0]));
        }
        assert_eq!(s.posterior().len(), 301);
    }

    #[test]
    fn log_and_linear_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..1000)
            .map(|t| n.sample(&mut rng) + if t >= 600 { 2.5 } else { 0.0 })
            .collect();
        let mut lin = RunLengthState::new(BocpdConfig::default()).unwrap();
        let mut log = RunLengthState::new(BocpdConfig {
            space: Space::Log,
            ..Default::default()
        })
        .unwrap();
        for &x in &xs {
            let a = lin.step(x).unwrap();
            let b = log.step(x).unwrap();
            assert_eq!(a.map_run_length, b.map_run_length);
            assert_eq!(a.detected, b.detected);
            for (p, q) in lin.posterior().iter().zip(log.posterior()) {
                if q > 1e-250 {
                    assert!((p - q).abs() <= 1e-8 * q, "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn underflow_uses_log_fallback() {
        let mut s = RunLengthState::new(BocpdConfig::default()).unwrap();
        for _ in 0..50 {
            s.step(0.0).unwrap();
        }
        // every predictive density underflows to zero here
        let o = s.step(1e3).unwrap();
        assert_eq!(s.fallbacks(), 1);
        assert!((s.posterior().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(o.map_run_length, 1);
        assert!(o.detected);
    }

    #[test]
    fn hazard_sets_change_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..400).map(|_| n.sample(&mut rng)).collect();
        let mut last = 0.0;
        for h in [1e-4, 1e-3, 1e-2] {
            let mut s = RunLengthState::new(BocpdConfig {
                hazard: h,
                ..Default::default()
            })
            .unwrap();
            for &x in &xs {
                s.step(x).unwrap();
            }
            let p0 = s.posterior()[0];
            assert!(p0 > last);
            last = p0;
        }
    }

    #[test]
    fn big_jump_detected_after_warmup_only() {
        let mut s = RunLengthState::new(BocpdConfig::default()).unwrap();
        let mut hits = vec![];
        for t in 1..=200 {
            let x = if t >= 150 { 12.0 } else { 0.1 * ((t % 7) as f64 - 3.0) };
            if s.step(x).unwrap().detected {
                hits.push(t);
            }
        }
        assert_eq!(hits, vec![150]);
    }

    #[test]
    fn shrinkage_blend() {
        let mut s = ShrinkageState::new(1.0, 2.0).unwrap();
        let g = [0.7, 0.2, 0.1];
        assert_eq!(shrink_weights(&g, &s).unwrap(), g.to_vec());
        s.trigger();
        let u = shrink_weights(&g, &s).unwrap();
        assert!(u.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));

        let mut s = ShrinkageState::new(1.0, 2.0).unwrap();
        s.n = Some(2);
        let w = shrink_weights(&[1.0, 0.0], &s).unwrap();
        let e = (-1f64).exp();
        assert!((w[0] - (1.0 - e + e / 2.0)).abs() < 1e-15);
        assert!((w[0] - 0.8161).abs() < 1e-4 && (w[1] - 0.1839).abs() < 1e-4);

        assert!(ShrinkageState::new(1.5, 2.0).is_err());
        let bad = ShrinkageState { beta0: -0.1, ..s };
        assert!(shrink_weights(&[1.0, 0.0], &bad).is_err());
    }

    #[test]
    fn shrinkage_deactivates_after_n_5() {
        let mut s = ShrinkageState::new(1.0, 2.0).unwrap();
        s.trigger();
        let mut used = vec![];
        while s.is_active() {
            used.push(s.n.unwrap());
            s.advance();
        }
        // exp(-5/2) < 0.1 is the first factor below the floor
        assert_eq!(used, vec![0, 1, 2, 3, 4, 5]);
        s.advance();
        assert!(!s.is_active());
    }
}
