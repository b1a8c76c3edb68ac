//! Heterogeneous one-step forecasters sharing a fit / rolling / recursive
//! contract.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Lu, solve};
use crate::neural::{adam_step, minibatches, Activation, AdamState, DenseNet, Standardizer};

const SMOOTHING_GRID: usize = 19;
const AR_RIDGE: f64 = 1e-8;

fn smoothing_value(i: usize) -> f64 {
    0.05 * (i + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertKind {
    ArLs { p: usize },
    ExpSmooth { trend: bool },
    SeasonalNaive { period: usize },
    MovingAverage { window: usize },
    WindowNet {
        omega: usize,
        hidden: Vec<usize>,
        epochs: usize,
        lr: f64,
    },
}

impl ExpertKind {
    pub fn holt() -> Self {
        ExpertKind::ExpSmooth { trend: true }
    }

    pub fn window_net(omega: usize) -> Self {
        ExpertKind::WindowNet {
            omega,
            hidden: vec![16],
            epochs: 300,
            lr: 1e-3,
        }
    }

    /// `ar_ls(4)`, Holt, `seasonal_naive(period)`, `moving_average(8)`,
    /// `window_net(omega)`.
    pub fn default_roster(period: usize, omega: usize) -> Vec<ExpertKind> {
        vec![
            ExpertKind::ArLs { p: 4 },
            ExpertKind::holt(),
            ExpertKind::SeasonalNaive { period },
            ExpertKind::MovingAverage { window: 8 },
            ExpertKind::window_net(omega),
        ]
    }

    /// Observations needed before the first one-step forecast.
    pub fn min_history(&self) -> usize {
        match self {
            ExpertKind::ArLs { p } => *p,
            ExpertKind::ExpSmooth { trend: true } => 2,
            ExpertKind::ExpSmooth { trend: false } => 1,
            ExpertKind::SeasonalNaive { period } => *period,
            ExpertKind::MovingAverage { window } => *window,
            ExpertKind::WindowNet { omega, .. } => *omega,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ExpertKind::ArLs { p } => format!("ar_ls({p})"),
            ExpertKind::ExpSmooth { trend: true } => "holt".into(),
            ExpertKind::ExpSmooth { trend: false } => "exp_smooth".into(),
            ExpertKind::SeasonalNaive { period } => format!("seasonal_naive({period})"),
            ExpertKind::MovingAverage { window } => format!("moving_average({window})"),
            ExpertKind::WindowNet { omega, .. } => format!("window_net({omega})"),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ExpertKind::ArLs { p } => *p >= 1,
            ExpertKind::ExpSmooth { .. } => true,
            ExpertKind::SeasonalNaive { period } => *period >= 1,
            ExpertKind::MovingAverage { window } => *window >= 1,
            ExpertKind::WindowNet {
                omega,
                hidden,
                epochs,
                lr,
            } => *omega >= 1 && hidden.iter().all(|&h| h > 0) && *epochs > 0 && *lr > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid expert parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum FittedState {
    /// `[intercept, a_1, .., a_p]` for `x_t = c + sum a_i x_{t-i}`.
    Ar { coef: Vec<f64>, ridge: bool },
    Smooth { alpha: f64, beta: Option<f64> },
    Seasonal { last_season: Vec<f64> },
    Average,
    Net { net: DenseNet, scaler: Standardizer },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    pub kind: ExpertKind,
    state: Option<FittedState>,
    fit_end: usize,
}

impl Expert {
    pub fn new(kind: ExpertKind) -> Self {
        Expert {
            kind,
            state: None,
            fit_end: 0,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    pub fn state(&self) -> Option<&FittedState> {
        self.state.as_ref()
    }

    /// Length of the series prefix used by the last fit.
    pub fn fit_end(&self) -> usize {
        self.fit_end
    }

    pub fn min_history(&self) -> usize {
        self.kind.min_history()
    }

    /// Fits on the whole of `series`; `seed` only matters for `window_net`.
    pub fn fit(&mut self, series: &[f64], seed: u64) -> Result<()> {
        self.kind.validate()?;
        let need = self.min_history() + 1;
        if series.len() < need {
            return Err(Error::Data(format!(
                "{} needs at least {need} observations, got {}",
                self.kind.label(),
                series.len()
            )));
        }
        if series.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite value in expert training series".into()));
        }
        let state = match &self.kind {
            ExpertKind::ArLs { p } => fit_ar(series, *p)?,
            ExpertKind::ExpSmooth { trend } => fit_smoothing(series, *trend),
            ExpertKind::SeasonalNaive { period } => FittedState::Seasonal {
                last_season: series[series.len() - period..].to_vec(),
            },
            ExpertKind::MovingAverage { .. } => FittedState::Average,
            ExpertKind::WindowNet {
                omega,
                hidden,
                epochs,
                lr,
            } => fit_window_net(series, *omega, hidden, *epochs, *lr, seed)?,
        };
        self.state = Some(state);
        self.fit_end = series.len();
        Ok(())
    }

    /// Forecast of the value following `history`.
    pub fn one_step(&self, history: &[f64]) -> Result<f64> {
        let state = self.state.as_ref().ok_or(Error::NotFitted("expert"))?;
        if history.len() < self.min_history() {
            return Err(Error::Data(format!(
                "{} needs {} past values, got {}",
                self.kind.label(),
                self.min_history(),
                history.len()
            )));
        }
        let n = history.len();
        let y = match (&self.kind, state) {
            (ExpertKind::ArLs { p }, FittedState::Ar { coef, .. }) => {
                coef[0] + (1..=*p).map(|i| coef[i] * history[n - i]).sum::<f64>()
            }
            (_, FittedState::Smooth { alpha, beta }) => smooth_forecast(history, *alpha, *beta),
            (ExpertKind::SeasonalNaive { period }, FittedState::Seasonal { .. }) => history[n - period],
            (ExpertKind::MovingAverage { window }, FittedState::Average) => {
                history[n - window..].iter().sum::<f64>() / *window as f64
            }
            (ExpertKind::WindowNet { omega, .. }, FittedState::Net { net, scaler }) => {
                let window = &history[n - omega..];
                let input = relative_window(window, scaler.scale);
                let zero = Array2::zeros((1, *omega));
                let out = net.predict(&input.insert_axis(ndarray::Axis(0)))?[[0, 0]]
                    - net.predict(&zero)?[[0, 0]];
                window[omega - 1] + scaler.scale * out
            }
            _ => return Err(Error::Config("expert state does not match its kind".into())),
        };
        if !y.is_finite() {
            return Err(Error::Numeric(format!("{} produced a non-finite forecast", self.kind.label())));
        }
        Ok(y)
    }

    /// One-step forecasts for indices `from..=to`; forecast `j` sees only
    /// `series[..j]`.
    pub fn rolling_forecasts(&self, series: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        if from > to || to >= series.len() {
            return Err(Error::Data(format!(
                "rolling range {from}..={to} outside series of length {}",
                series.len()
            )));
        }
        if from < self.min_history() {
            return Err(Error::Data(format!(
                "{} cannot forecast index {from}: needs {} past values",
                self.kind.label(),
                self.min_history()
            )));
        }
        if let Some(FittedState::Smooth { alpha, beta }) = &self.state {
            return Ok(smooth_path(&series[..to], *alpha, *beta)[from..=to].to_vec());
        }
        (from..=to).map(|j| self.one_step(&series[..j])).collect()
    }

    /// `h` steps past the end of `series`, feeding each forecast back.
    pub fn forecast_recursive(&self, series: &[f64], h: usize) -> Result<Vec<f64>> {
        if h == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        let mut buf = series.to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let y = self.one_step(&buf)?;
            buf.push(y);
            out.push(y);
        }
        Ok(out)
    }
}

fn fit_ar(series: &[f64], p: usize) -> Result<FittedState> {
    let rows = series.len() - p;
    let mut x = Array2::<f64>::zeros((rows, p + 1));
    let mut y = Array1::<f64>::zeros(rows);
    for r in 0..rows {
        let t = r + p;
        x[[r, 0]] = 1.0;
        for i in 1..=p {
            x[[r, i]] = series[t - i];
        }
        y[r] = series[t];
    }
    let gram = x.t().dot(&x);
    let rhs = x.t().dot(&y).insert_axis(ndarray::Axis(1));
    let (coef, ridge) = match Lu::new(&gram).and_then(|lu| lu.solve(&rhs)) {
        Ok(c) => (c, false),
        Err(_) => {
            let ridged = &gram + &(Array2::<f64>::eye(p + 1) * AR_RIDGE);
            (solve(&ridged, &rhs)?, true)
        }
    };
    Ok(FittedState::Ar {
        coef: coef.column(0).to_vec(),
        ridge,
    })
}

/// One-step forecasts for every index of `series` plus the one after it.
/// Entries before the first forecastable index repeat the first value.
fn smooth_path(series: &[f64], alpha: f64, beta: Option<f64>) -> Vec<f64> {
    let n = series.len();
    let mut out = vec![series[0]; n + 1];
    match beta {
        None => {
            let mut level = series[0];
            for t in 1..=n {
                out[t] = level;
                if t < n {
                    level = alpha * series[t] + (1.0 - alpha) * level;
                }
            }
        }
        Some(beta) => {
            if n < 2 {
                return out;
            }
            let mut level = series[1];
            let mut trend = series[1] - series[0];
            out[1] = series[0];
            for t in 2..=n {
                out[t] = level + trend;
                if t < n {
                    let prev = level;
                    level = alpha * series[t] + (1.0 - alpha) * (level + trend);
                    trend = beta * (level - prev) + (1.0 - beta) * trend;
                }
            }
        }
    }
    out
}

fn smooth_forecast(history: &[f64], alpha: f64, beta: Option<f64>) -> f64 {
    smooth_path(history, alpha, beta)[history.len()]
}

fn fit_smoothing(series: &[f64], trend: bool) -> FittedState {
    let first = if trend { 2 } else { 1 };
    let sse = |alpha: f64, beta: Option<f64>| -> f64 {
        let path = smooth_path(series, alpha, beta);
        (first..series.len()).map(|t| (series[t] - path[t]).powi(2)).sum()
    };
    let mut best = (f64::INFINITY, smoothing_value(0), None);
    for ai in 0..SMOOTHING_GRID {
        let alpha = smoothing_value(ai);
        let betas: Vec<Option<f64>> = if trend {
            (0..SMOOTHING_GRID).map(|bi| Some(smoothing_value(bi))).collect()
        } else {
            vec![None]
        };
        for beta in betas {
            let s = sse(alpha, beta);
            // ties (up to rounding) stay at the smaller alpha
            if best.0.is_infinite() || s < best.0 - 1e-12 * (1.0 + best.0) {
                best = (s, alpha, beta);
            }
        }
    }
    FittedState::Smooth {
        alpha: best.1,
        beta: best.2,
    }
}

/// Window re-expressed relative to its last value, in scaled units.
fn relative_window(window: &[f64], scale: f64) -> Array1<f64> {
    let last = window[window.len() - 1];
    window.iter().map(|x| (x - last) / scale).collect()
}

/// Predicts `last + scale * (f(d) - f(0))` with `d` the relative window, so
/// a constant window forecasts its own value exactly.
fn fit_window_net(
    series: &[f64],
    omega: usize,
    hidden: &[usize],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<FittedState> {
    let scaler = Standardizer::fit(series);
    let rows = series.len() - omega;
    let mut inputs = Array2::<f64>::zeros((rows, omega));
    let mut targets = Array1::<f64>::zeros(rows);
    for r in 0..rows {
        let window = &series[r..r + omega];
        inputs.row_mut(r).assign(&relative_window(window, scaler.scale));
        targets[r] = (series[r + omega] - window[omega - 1]) / scaler.scale;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec: Vec<(usize, Activation)> = hidden.iter().map(|&h| (h, Activation::Tanh)).collect();
    spec.push((1, Activation::Identity));
    let mut net = DenseNet::new(omega, &spec, &mut rng)?;
    let mut adam = AdamState::new(&net, lr);
    let zero = Array2::<f64>::zeros((1, omega));
    for _ in 0..epochs {
        for batch in minibatches(rows, 16, &mut rng) {
            let x = inputs.select(ndarray::Axis(0), &batch);
            let cache = net.forward(&x)?;
            let cache0 = net.forward(&zero)?;
            let base = cache0.output()[[0, 0]];
            let b = batch.len() as f64;
            let grad = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
                2.0 * (cache.output()[[i, 0]] - base - targets[batch[i]]) / b
            });
            let mut g = net.backward(&cache, &grad)?;
            let g0 = net.backward(&cache0, &Array2::from_elem((1, 1), -grad.sum()))?;
            for (w, w0) in g.weights.iter_mut().zip(&g0.weights) {
                *w += w0;
            }
            for (bb, b0) in g.biases.iter_mut().zip(&g0.biases) {
                *bb += b0;
            }
            adam_step(&mut net, &g, &mut adam)?;
        }
    }
    Ok(FittedState::Net { net, scaler })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn geometric(n: usize) -> Vec<f64> {
        (0..n).map(|t| 0.5f64.powi(t as i32)).collect()
    }

    #[test]
    fn ar1_recovers_coefficient() {
        let mut e = Expert::new(ExpertKind::ArLs { p: 1 });
        e.fit(&geometric(50), 0).unwrap();
        let Some(FittedState::Ar { coef, .. }) = e.state() else { panic!() };
        assert!((coef[1] - 0.5).abs() < 1e-8, "{coef:?}");
        assert!(coef[0].abs() < 1e-8);
    }

    fn ar1_with(c: f64) -> Expert {
        Expert {
            kind: ExpertKind::ArLs { p: 1 },
            state: Some(FittedState::Ar {
                coef: vec![0.0, c],
                ridge: false,
            }),
            fit_end: 2,
        }
    }

    #[test]
    fn ar1_rolling_and_recursive() {
        let e = ar1_with(0.5);
        let series = [3.0, -1.0, 4.0, 2.0, 8.0];
        let f = e.rolling_forecasts(&series, 1, 4).unwrap();
        assert_eq!(f, vec![1.5, -0.5, 2.0, 1.0]);
        assert_eq!(e.forecast_recursive(&series, 3).unwrap(), vec![4.0, 2.0, 1.0]);
        assert_eq!(e.rolling_forecasts(&series, 2, 2).unwrap().len(), 1);
        assert!(e.rolling_forecasts(&series, 3, 5).is_err());
        assert!(e.forecast_recursive(&series, 0).is_err());
    }

    #[test]
    fn seasonal_naive_reproduces_season() {
        let block = [1.0, 4.0, -2.0, 0.5];
        let series: Vec<f64> = block.iter().cycle().take(24).copied().collect();
        let mut e = Expert::new(ExpertKind::SeasonalNaive { period: 4 });
        e.fit(&series[..16], 0).unwrap();
        let Some(FittedState::Seasonal { last_season }) = e.state() else { panic!() };
        assert_eq!(last_season, &block);
        let f = e.rolling_forecasts(&series, 4, 23).unwrap();
        assert!(f.iter().zip(&series[4..]).all(|(a, b)| a == b));
    }

    #[test]
    fn constant_series_is_exact_for_every_kind() {
        let series = vec![7.25; 60];
        for (i, kind) in ExpertKind::default_roster(12, 12).into_iter().enumerate() {
            let mut e = Expert::new(kind.clone());
            e.fit(&series, i as u64).unwrap();
            let f = e.one_step(&series).unwrap();
            assert!((f - 7.25).abs() < 1e-6, "{kind:?}: {f}");
            let rec = e.forecast_recursive(&series, 3).unwrap();
            assert!(rec.iter().all(|v| (v - 7.25).abs() < 1e-6));
        }
    }

    #[test]
    fn moving_average_recursive_on_constant() {
        let mut e = Expert::new(ExpertKind::MovingAverage { window: 3 });
        e.fit(&[2.0; 5], 0).unwrap();
        assert_eq!(e.forecast_recursive(&[2.0; 5], 4).unwrap(), vec![2.0; 4]);
    }

    #[test]
    fn too_short_and_unfitted() {
        let mut e = Expert::new(ExpertKind::ArLs { p: 4 });
        assert!(matches!(e.fit(&[1.0, 2.0, 3.0], 0), Err(Error::Data(_))));
        assert!(matches!(e.one_step(&[1.0; 10]), Err(Error::NotFitted(_))));
    }

    #[test]
    fn holt_follows_a_line() {
        let series: Vec<f64> = (0..40).map(|t| 2.0 + 0.5 * t as f64).collect();
        let mut e = Expert::new(ExpertKind::holt());
        e.fit(&series, 0).unwrap();
        assert!((e.one_step(&series).unwrap() - 22.0).abs() < 1e-9);
        // exact fit at every alpha, beta: the tie goes to the smallest alpha
        let Some(FittedState::Smooth { alpha, .. }) = e.state() else { panic!() };
        assert!((alpha - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rolling_matches_one_step_and_h1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let series: Vec<f64> = (0..80)
            .map(|t| (t as f64 / 5.0).sin() * 3.0 + normal.sample(&mut rng))
            .collect();
        for kind in ExpertKind::default_roster(12, 12) {
            let mut e = Expert::new(kind);
            e.fit(&series[..60], 1).unwrap();
            let roll = e.rolling_forecasts(&series, 20, 79).unwrap();
            for (k, j) in (20..80).enumerate() {
                let direct = e.one_step(&series[..j]).unwrap();
                assert!((roll[k] - direct).abs() < 1e-12);
            }
            let h1 = e.forecast_recursive(&series[..50], 1).unwrap()[0];
            assert!((h1 - roll[30]).abs() < 1e-12);
        }
    }

    #[test]
    fn window_net_is_seeded() {
        let series: Vec<f64> = (0..100).map(|t| (t as f64 / 4.0).sin()).collect();
        let kind = ExpertKind::WindowNet {
            omega: 6,
            hidden: vec![8],
            epochs: 30,
            lr: 1e-3,
        };
        let mut a = Expert::new(kind.clone());
        let mut b = Expert::new(kind.clone());
        let mut c = Expert::new(kind);
        a.fit(&series, 3).unwrap();
        b.fit(&series, 3).unwrap();
        c.fit(&series, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
