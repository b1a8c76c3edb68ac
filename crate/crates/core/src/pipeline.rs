//! End-to-end runs: training on a panel, checkpoints, rolling evaluation
//! with baselines, the coherency-weight sweep and the online experiment.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{online_loop, OnlineRecord};
use crate::config::{RunConfig, StreamKind};
use crate::dataio::{
    load_hierarchy_spec, load_panel_csv, load_series_csv, simulate_gaussian_shift, simulate_hierarchical,
    simulate_piecewise, HierarchySpec, SeriesPanel, Split,
};
use crate::error::{Error, Result};
use crate::gating::{derive_seed, gate_rows, train_hierarchy_bottom_up, MixtureForecaster, MixtureSetup};
use crate::hierarchy::Hierarchy;
use crate::metrics::{EvalInput, EvalReport};
use crate::quantile::QuantileGenerator;
use crate::reconcile::{plan, Method, ReconciliationPlan};

/// FNV-1a; stable across builds, unlike the std hasher.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let text = cfg.to_toml()?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

pub fn load_hierarchy(cfg: &RunConfig) -> Result<Hierarchy> {
    match &cfg.data.hierarchy {
        Some(p) => load_hierarchy_spec(p),
        None => Ok(Hierarchy::seven_vertex()),
    }
}

/// Hierarchy and panel from files, or the synthetic benchmark for `seed`.
pub fn load_inputs(cfg: &RunConfig, seed: u64) -> Result<(Hierarchy, SeriesPanel)> {
    let h = load_hierarchy(cfg)?;
    let panel = match &cfg.data.panel {
        Some(p) => load_panel_csv(p, &h)?,
        None => simulate_hierarchical(&h, cfg.data.length, cfg.data.period, seed)?,
    };
    let split = Split::from_ratios(panel.len(), cfg.data.train, cfg.data.val)?;
    let panel = panel.with_split(split)?;
    panel.check_window(cfg.gate.omega)?;
    Ok((h, panel))
}

pub fn load_stream(cfg: &RunConfig, seed: u64) -> Result<Vec<f64>> {
    let d = &cfg.data;
    match (&d.stream, d.stream_kind) {
        (Some(p), _) => load_series_csv(p),
        (None, StreamKind::Piecewise) => simulate_piecewise(d.stream_length, d.noise_sd, seed),
        (None, StreamKind::GaussianShift) => simulate_gaussian_shift(d.stream_length, d.shift_at, d.shift, seed),
    }
}

fn by_time(rows: &[Vec<f64>]) -> Array2<f64> {
    let t = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((t, rows.len()), |(i, v)| rows[v][i])
}

fn by_vertex(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hierarchy: HierarchySpec,
    pub forecasters: Vec<MixtureForecaster>,
    /// One per vertex, or empty when quantiles are off.
    pub quantiles: Vec<QuantileGenerator>,
    pub quantile_loss: Vec<Vec<f64>>,
    pub split: Split,
    pub seed: u64,
    pub lambda: f64,
    /// Validation-split forecasts per vertex, before any expert refit; the
    /// reconciliation baselines estimate their error covariance from these.
    pub val_truth: Vec<Vec<f64>>,
    pub val_mixture: Vec<Vec<f64>>,
    pub val_average: Vec<Vec<f64>>,
}

impl TrainedModel {
    pub fn hierarchy(&self) -> Result<Hierarchy> {
        self.hierarchy.build()
    }

    pub fn omega(&self) -> usize {
        self.forecasters.first().map_or(0, |f| f.gate.omega)
    }

    pub fn expert_labels(&self) -> Vec<String> {
        self.forecasters
            .first()
            .map(|f| f.experts.iter().map(|e| e.kind.label()).collect())
            .unwrap_or_default()
    }

    fn check_panel(&self, panel: &SeriesPanel) -> Result<()> {
        if panel.ids.len() != self.forecasters.len()
            || panel.ids.iter().zip(&self.forecasters).any(|(a, f)| *a != f.vertex)
        {
            return Err(Error::Data("panel series do not match the checkpoint vertices".into()));
        }
        Ok(())
    }
}

/// Experts on the train split, gates bottom-up, quantile generators on the
/// gate span, then (optionally) experts refit on train + validation.
pub fn train(panel: &SeriesPanel, hierarchy: &Hierarchy, cfg: &RunConfig, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    let roster = cfg.roster();
    let setup = MixtureSetup {
        experts: &roster,
        gate: &cfg.gate,
        seed,
    };
    let bu = train_hierarchy_bottom_up(panel, hierarchy, &setup)?;
    let (from, to) = bu.span;
    let split = panel.split;
    let omega = cfg.gate.omega;
    let mut forecasters = bu.forecasters;

    let v0 = split.train_end.max(from);
    let mut val_truth = Vec::new();
    let mut val_mixture = Vec::new();
    let mut val_average = Vec::new();
    for (v, f) in forecasters.iter().enumerate() {
        let series = &panel.values[v];
        let rows = gate_rows(&f.experts, series, omega, v0, to)?;
        val_truth.push(series[v0..=to].to_vec());
        val_mixture.push(bu.combined[v][v0 - from..].to_vec());
        val_average.push(rows.forecasts.mean_axis(Axis(1)).expect("experts").to_vec());
    }

    let (quantiles, quantile_loss) = if cfg.quantiles {
        let trained = forecasters
            .par_iter()
            .enumerate()
            .map(|(v, f)| {
                let series = &panel.values[v];
                let windows = Array2::from_shape_fn((to + 1 - from, omega), |(r, c)| series[from + r - omega + c]);
                let mut g = QuantileGenerator::new(omega, &cfg.quantile, f.gate.scaler, derive_seed(seed, v as u64, 2))?;
                let loss = g.train(
                    &windows,
                    &bu.combined[v],
                    &series[from..=to],
                    &cfg.quantile,
                    derive_seed(seed, v as u64, 3),
                )?;
                Ok((g, loss))
            })
            .collect::<Result<Vec<_>>>()?;
        trained.into_iter().unzip()
    } else {
        (Vec::new(), Vec::new())
    };

    if cfg.refit_experts {
        forecasters.par_iter_mut().enumerate().try_for_each(|(v, f)| {
            let series = &panel.values[v][..split.val_end];
            f.experts
                .iter_mut()
                .enumerate()
                .try_for_each(|(l, e)| e.fit(series, derive_seed(seed, v as u64, 200 + l as u64)))
        })?;
    }

    Ok(TrainedModel {
        hierarchy: HierarchySpec::from_hierarchy(hierarchy),
        forecasters,
        quantiles,
        quantile_loss,
        split,
        seed,
        lambda: cfg.gate.lambda,
        val_truth,
        val_mixture,
        val_average,
    })
}

/// Writes `model.json`, per-vertex weight trajectories and the quantile
/// loss history into `dir`, replacing it atomically.
pub fn save_checkpoint(model: &TrainedModel, cfg: &RunConfig, dir: &Path) -> Result<()> {
    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let result = write_checkpoint(model, cfg, &tmp);
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
        return result;
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn write_checkpoint(model: &TrainedModel, cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string(model).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = dir.join("model.json");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("run_config.toml");
    fs::write(&p, cfg.to_toml()?).map_err(|e| Error::io(&p, e))?;
    for f in &model.forecasters {
        f.history.write_weights_csv(&dir.join(format!("weights_{}.csv", f.vertex)))?;
    }
    if !model.quantile_loss.is_empty() {
        let p = dir.join("quantile_loss.csv");
        let mut out = String::from("epoch");
        for f in &model.forecasters {
            out.push_str(&format!(",{}", f.vertex));
        }
        out.push('\n');
        for e in 0..model.quantile_loss[0].len() {
            out.push_str(&e.to_string());
            for l in &model.quantile_loss {
                out.push_str(&format!(",{}", l[e]));
            }
            out.push('\n');
        }
        fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainedModel> {
    let p = dir.join("model.json");
    if !p.exists() {
        return Err(Error::Data(format!("no checkpoint at {}", dir.display())));
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&p, e))
}

/// Rolling one-step forecasts over `from..=to`, per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanForecasts {
    pub from: usize,
    pub to: usize,
    pub truth: Vec<Vec<f64>>,
    pub mixture: Vec<Vec<f64>>,
    pub average: Vec<Vec<f64>>,
    /// `experts[v]` is rows x L.
    pub experts: Vec<Array2<f64>>,
    /// `quantiles[v][row]` over `taus`.
    pub quantiles: Option<(Vec<f64>, Vec<Vec<Vec<f64>>>)>,
}

pub fn rolling_span(
    model: &TrainedModel,
    panel: &SeriesPanel,
    from: usize,
    to: usize,
    taus: Option<&[f64]>,
) -> Result<SpanForecasts> {
    model.check_panel(panel)?;
    let omega = model.omega();
    let per_vertex = model
        .forecasters
        .par_iter()
        .enumerate()
        .map(|(v, f)| {
            let series = &panel.values[v];
            let (mixture, experts) = f.rolling(series, from, to)?;
            let average = experts.mean_axis(Axis(1)).expect("experts").to_vec();
            let q = match (taus, model.quantiles.get(v)) {
                (Some(taus), Some(g)) => {
                    let windows = Array2::from_shape_fn((to + 1 - from, omega), |(r, c)| series[from + r - omega + c]);
                    let coeffs = g.compute_coefficients_batch(&windows, &mixture)?;
                    Some(coeffs.iter().map(|c| c.quantiles(taus)).collect::<Result<Vec<_>>>()?)
                }
                _ => None,
            };
            Ok((series[from..=to].to_vec(), mixture, average, experts, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SpanForecasts {
        from,
        to,
        truth: Vec::new(),
        mixture: Vec::new(),
        average: Vec::new(),
        experts: Vec::new(),
        quantiles: None,
    };
    let mut qs = Vec::new();
    for (t, m, a, e, q) in per_vertex {
        out.truth.push(t);
        out.mixture.push(m);
        out.average.push(a);
        out.experts.push(e);
        if let Some(q) = q {
            qs.push(q);
        }
    }
    if let Some(taus) = taus {
        if qs.len() == out.truth.len() && !qs.is_empty() {
            out.quantiles = Some((taus.to_vec(), qs));
        }
    }
    Ok(out)
}

/// Reconciliation plan estimated on the validation forecasts of `base`.
pub fn fit_plan(model: &TrainedModel, method: Method, base: &str, shrinkage: Option<f64>) -> Result<ReconciliationPlan> {
    let h = model.hierarchy()?;
    let s = h.summing_matrix().matrix;
    let val = match base {
        "mixture" => &model.val_mixture,
        "average" => &model.val_average,
        other => return Err(Error::Config(format!("unknown base forecasts `{other}`"))),
    };
    plan(method, &s, &by_time(val), &by_time(&model.val_truth), shrinkage)
}

pub fn reconcile_span(plan: &ReconciliationPlan, base: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(by_vertex(&plan.reconcile_rows(&by_time(base))?))
}

/// Scores on the test split: the mixture (with CRPS when quantiles exist),
/// the equal-weight average, each single expert, and reconciled averages.
pub fn evaluate(model: &TrainedModel, panel: &SeriesPanel, cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let h = model.hierarchy()?;
    let from = panel.split.val_end;
    let to = panel.len() - 1;
    let taus = crate::metrics::crps_grid();
    let span = rolling_span(model, panel, from, to, Some(&taus))?;
    let insample: Vec<Vec<f64>> = panel.values.iter().map(|s| s[..from].to_vec()).collect();
    let hash = config_hash(cfg)?;

    let mut reports = Vec::new();
    let mut push = |name: String, point: &[Vec<f64>], q: Option<(&[f64], &[Vec<Vec<f64>>])>| -> Result<()> {
        let mut r = EvalReport::build(
            name,
            &h,
            &EvalInput {
                insample: &insample,
                truth: &span.truth,
                point,
                quantiles: q,
            },
        )?;
        r.metadata.insert("seed".into(), model.seed.to_string());
        r.metadata.insert("lambda".into(), model.lambda.to_string());
        r.metadata.insert("config_hash".into(), hash.clone());
        r.metadata.insert("test_span".into(), format!("{from}..={to}"));
        reports.push(r);
        Ok(())
    };
    push(
        "mixture".into(),
        &span.mixture,
        span.quantiles.as_ref().map(|(t, q)| (t.as_slice(), q.as_slice())),
    )?;
    if cfg.evaluate.baselines {
        push("average".into(), &span.average, None)?;
        for (l, label) in model.expert_labels().iter().enumerate() {
            let single: Vec<Vec<f64>> = span.experts.iter().map(|e| e.column(l).to_vec()).collect();
            push(label.clone(), &single, None)?;
        }
        for method in [Method::Bu, Method::Ols, Method::MintShr] {
            let p = fit_plan(model, method, "average", cfg.reconcile.shrinkage)?;
            push(format!("average+{}", method.name()), &reconcile_span(&p, &span.average)?, None)?;
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub model: String,
    pub mase: f64,
    pub coherent_loss: f64,
}

/// Trains once per (seed, lambda) without quantiles and scores the test
/// split. Returns sweep rows and, for `lambda == cfg.gate.lambda`, the full
/// reports of every seed.
pub fn lambda_sweep(cfg: &RunConfig, seeds: &[u64]) -> Result<(Vec<SweepRow>, Vec<EvalReport>)> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &seed in seeds {
        let (h, panel) = load_inputs(cfg, seed)?;
        for &lambda in &cfg.evaluate.lambdas {
            let mut c = cfg.clone();
            c.gate.lambda = lambda;
            c.quantiles = false;
            c.evaluate.baselines = lambda == cfg.gate.lambda && cfg.evaluate.baselines;
            let model = train(&panel, &h, &c, seed)?;
            let rs = evaluate(&model, &panel, &c)?;
            for r in &rs {
                if r.model == "mixture" || c.evaluate.baselines {
                    rows.push(SweepRow {
                        lambda,
                        seed,
                        model: r.model.clone(),
                        mase: r.mean_mase(),
                        coherent_loss: r.coherent_loss,
                    });
                }
            }
            if lambda == cfg.gate.lambda {
                reports.extend(rs);
            }
        }
    }
    Ok((rows, reports))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("lambda,seed,model,mase,coherent_loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.lambda, r.seed, r.model, r.mase, r.coherent_loss));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mean and sd over seeds per (lambda, model).
pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = (format!("{:>12.6}", r.lambda), r.model.clone());
        let e = groups.entry(key).or_default();
        e.0.push(r.mase);
        e.1.push(r.coherent_loss);
    }
    let mut out = String::from("lambda,model,mase_mean,mase_sd,coherent_mean,coherent_sd,seeds\n");
    for ((lambda, model), (m, c)) in groups {
        let (mm, ms) = crate::metrics::mean_sd(&m);
        let (cm, cs) = crate::metrics::mean_sd(&c);
        out.push_str(&format!("{},{model},{mm},{ms},{cm},{cs},{}\n", lambda.trim(), m.len()));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// h-step recursive forecasts past the end of the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecasts {
    pub ids: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub quantiles: Option<(Vec<f64>, Vec<Vec<Vec<f64>>>)>,
}

pub fn forecast(model: &TrainedModel, panel: &SeriesPanel, h: usize, taus: &[f64]) -> Result<Forecasts> {
    model.check_panel(panel)?;
    if h == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let omega = model.omega();
    let mut points = Vec::new();
    let mut qs = Vec::new();
    for (v, f) in model.forecasters.iter().enumerate() {
        let series = &panel.values[v];
        let path = f.forecast_mixture(series, h)?;
        if let Some(g) = model.quantiles.get(v) {
            let mut buf = series.clone();
            let mut rows = Vec::with_capacity(h);
            for &y in &path {
                rows.push(g.quantiles(&buf[buf.len() - omega..], y, taus)?);
                buf.push(y);
            }
            qs.push(rows);
        }
        points.push(path);
    }
    Ok(Forecasts {
        ids: panel.ids.clone(),
        quantiles: (!qs.is_empty()).then(|| (taus.to_vec(), qs)),
        points,
    })
}

impl Forecasts {
    /// `forecasts.csv` (`series_id,step,point`) and, when present,
    /// `quantiles.csv` (`series_id,step,q_<tau>...`).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let p = dir.join("forecasts.csv");
        let mut out = String::from("series_id,step,point\n");
        for (id, row) in self.ids.iter().zip(&self.points) {
            for (k, y) in row.iter().enumerate() {
                out.push_str(&format!("{id},{},{y}\n", k + 1));
            }
        }
        fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
        let mut written = vec![p];
        if let Some((taus, q)) = &self.quantiles {
            let p = dir.join("quantiles.csv");
            let mut out = String::from("series_id,step");
            for t in taus {
                out.push_str(&format!(",q_{t}"));
            }
            out.push('\n');
            for (id, rows) in self.ids.iter().zip(q) {
                for (k, row) in rows.iter().enumerate() {
                    out.push_str(&format!("{id},{}", k + 1));
                    for x in row {
                        out.push_str(&format!(",{x}"));
                    }
                    out.push('\n');
                }
            }
            fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Offline initialization on `stream[..start]` with a single-vertex
/// hierarchy; returns the forecaster, an optional quantile generator and
/// `start`.
pub fn init_online(
    stream: &[f64],
    cfg: &RunConfig,
    seed: u64,
) -> Result<(MixtureForecaster, Option<QuantileGenerator>, usize)> {
    let start = (cfg.online.init_fraction * stream.len() as f64).floor() as usize;
    let h = Hierarchy::single("y");
    let panel = SeriesPanel::new(vec!["y".into()], (0..start as i64).collect(), vec![stream[..start].to_vec()])?;
    let split = Split {
        train_end: (0.75 * start as f64) as usize,
        val_end: start.saturating_sub(1),
    };
    let panel = panel.with_split(split)?;
    let mut c = cfg.clone();
    c.refit_experts = false;
    let model = train(&panel, &h, &c, seed)?;
    let mut f = model.forecasters.into_iter().next().expect("one vertex");
    if cfg.refit_experts {
        for (l, e) in f.experts.iter_mut().enumerate() {
            e.fit(&stream[..start], derive_seed(seed, 0, 200 + l as u64))?;
        }
    }
    Ok((f, model.quantiles.into_iter().next(), start))
}

/// Initializes on the prefix and runs the online loop over the rest.
pub fn run_online(stream: &[f64], cfg: &RunConfig, seed: u64) -> Result<(Vec<OnlineRecord>, usize)> {
    let (mut f, q, start) = init_online(stream, cfg, seed)?;
    let grid = cfg.quantile.grid.clone();
    let records = online_loop(
        &mut f,
        q.as_ref().map(|g| (g, grid.as_slice())),
        stream,
        start,
        &cfg.online,
        seed,
    )?;
    Ok((records, start))
}

pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let p = dir.join("report.json");
    let text = serde_json::to_string_pretty(reports).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    crate::metrics::write_level_table(&dir.join("levels.csv"), reports)
}

/// `series_id,timestamp,base,reconciled`
pub fn write_reconciled_csv(
    path: &Path,
    ids: &[String],
    timestamps: &[i64],
    base: &[Vec<f64>],
    reconciled: &[Vec<f64>],
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "series_id,timestamp,base,reconciled").map_err(io)?;
    for (v, id) in ids.iter().enumerate() {
        for (t, ts) in timestamps.iter().enumerate() {
            writeln!(w, "{id},{ts},{},{}", base[v][t], reconciled[v][t]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
