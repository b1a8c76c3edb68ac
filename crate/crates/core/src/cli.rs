//! Subcommands behind the `hiermix` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::changepoint::{cumulative_sq_error, write_records_csv};
use crate::config::{RunConfig, StreamKind};
use crate::dataio::{piecewise_change_index, save_hierarchy_spec, write_series_csv};
use crate::error::{Error, Result};
use crate::metrics::write_level_table;
use crate::pipeline::{self, load_checkpoint, load_inputs, load_stream, save_checkpoint};

#[derive(Debug, Parser)]
#[command(name = "hiermix", version, about = "Gated expert mixtures for hierarchical forecasting")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    /// Hierarchical panel plus hierarchy spec.
    Panel,
    /// Single stream for `online`.
    Stream,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic data under --out.
    Simulate {
        #[arg(long, value_enum, default_value = "all")]
        kind: SimKind,
    },
    /// Train experts, gates and quantile generators; write a checkpoint.
    Train,
    /// Point and quantile forecasts past the end of the panel.
    Forecast {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Test-split scores, baselines and the coherency-weight sweep.
    Evaluate {
        /// Skip the multi-seed sweep.
        #[arg(long)]
        no_sweep: bool,
    },
    /// Reconcile test-split base forecasts with the configured method.
    Reconcile,
    /// Online loop with change-point mitigation over a stream.
    Online {
        #[arg(long)]
        no_mitigation: bool,
    },
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    pool.install(|| match &cli.command {
        Command::Simulate { kind } => cmd_simulate(&cfg, *kind),
        Command::Train => cmd_train(&cfg),
        Command::Forecast { horizon } => cmd_forecast(&cfg, horizon.unwrap_or(cfg.horizon)),
        Command::Evaluate { no_sweep } => cmd_evaluate(&cfg, !no_sweep && cfg.evaluate.sweep),
        Command::Reconcile => cmd_reconcile(&cfg),
        Command::Online { no_mitigation } => cmd_online(&cfg, !no_mitigation && cfg.online.mitigation),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_simulate(cfg: &RunConfig, kind: SimKind) -> Result<()> {
    if kind != SimKind::Stream {
        let (h, panel) = load_inputs(cfg, cfg.seed)?;
        panel.write_csv(&cfg.out.join("panel.csv"))?;
        save_hierarchy_spec(&h, &cfg.out.join("hierarchy.toml"))?;
        println!("panel: {} series x {} steps -> {}", panel.ids.len(), panel.len(), cfg.out.join("panel.csv").display());
    }
    if kind != SimKind::Panel {
        let stream = load_stream(cfg, cfg.seed)?;
        write_series_csv(&cfg.out.join("stream.csv"), &stream)?;
        let at = match cfg.data.stream_kind {
            StreamKind::Piecewise => piecewise_change_index(stream.len()),
            StreamKind::GaussianShift => cfg.data.shift_at,
        };
        println!("stream: {} steps, change at {at} -> {}", stream.len(), cfg.out.join("stream.csv").display());
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let (h, panel) = load_inputs(cfg, cfg.seed)?;
    let model = pipeline::train(&panel, &h, cfg, cfg.seed)?;
    let dir = cfg.checkpoint_dir();
    save_checkpoint(&model, cfg, &dir)?;
    println!(
        "trained {} vertices x {} experts (lambda {}), checkpoint {}",
        model.forecasters.len(),
        model.expert_labels().len(),
        model.lambda,
        dir.display()
    );
    Ok(())
}

pub fn cmd_forecast(cfg: &RunConfig, horizon: usize) -> Result<()> {
    let model = load_checkpoint(&cfg.checkpoint_dir())?;
    let (_, panel) = load_inputs(cfg, model.seed)?;
    let f = pipeline::forecast(&model, &panel, horizon, &cfg.quantile.grid)?;
    for p in f.write(&cfg.out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, sweep: bool) -> Result<()> {
    let model = load_checkpoint(&cfg.checkpoint_dir())?;
    let (_, panel) = load_inputs(cfg, model.seed)?;
    let reports = pipeline::evaluate(&model, &panel, cfg)?;
    pipeline::write_reports(&cfg.out, &reports)?;
    for r in &reports {
        match r.mean_crps() {
            Some(c) => println!("{:<22} MASE {:8.3} ({:.4})  coherent {:.4}", r.model, r.mean_mase(), c, r.coherent_loss),
            None => println!("{:<22} MASE {:8.3}  coherent {:.4}", r.model, r.mean_mase(), r.coherent_loss),
        }
    }
    if sweep {
        let seeds: Vec<u64> = (0..cfg.evaluate.seeds as u64).map(|k| cfg.seed + k).collect();
        let (rows, seed_reports) = pipeline::lambda_sweep(cfg, &seeds)?;
        pipeline::write_sweep_csv(&cfg.out.join("lambda_sweep.csv"), &rows)?;
        pipeline::write_sweep_summary(&cfg.out.join("lambda_summary.csv"), &rows)?;
        write_level_table(&cfg.out.join("levels_by_seed.csv"), &seed_reports)?;
        println!("sweep: {} rows over {} seeds -> lambda_sweep.csv", rows.len(), seeds.len());
    }
    Ok(())
}

pub fn cmd_reconcile(cfg: &RunConfig) -> Result<()> {
    let model = load_checkpoint(&cfg.checkpoint_dir())?;
    let (h, panel) = load_inputs(cfg, model.seed)?;
    let from = panel.split.val_end;
    let to = panel.len() - 1;
    let span = pipeline::rolling_span(&model, &panel, from, to, None)?;
    let base = if cfg.reconcile.base == "average" { &span.average } else { &span.mixture };
    let plan = pipeline::fit_plan(&model, cfg.reconcile.method, &cfg.reconcile.base, cfg.reconcile.shrinkage)?;
    let rec = pipeline::reconcile_span(&plan, base)?;
    pipeline::write_reconciled_csv(&cfg.out.join("reconciled.csv"), &panel.ids, &panel.timestamps[from..=to], base, &rec)?;
    let mut p = String::new();
    for row in plan.p.rows() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        p.push_str(&cells.join(","));
        p.push('\n');
    }
    write_text(&cfg.out.join("p_matrix.csv"), &p)?;
    let before = h.coherent_loss(base)?;
    let after = h.coherent_loss(&rec)?;
    println!(
        "{} on {} forecasts: coherent loss {before:.6} -> {after:.6}",
        cfg.reconcile.method.name(),
        cfg.reconcile.base
    );
    Ok(())
}

pub fn cmd_online(cfg: &RunConfig, mitigation: bool) -> Result<()> {
    let stream = load_stream(cfg, cfg.seed)?;
    let name = if mitigation { "online.csv" } else { "online_no_mitigation.csv" };
    if stream.is_empty() {
        println!("empty stream, nothing to do");
        return Ok(());
    }
    let mut c = cfg.clone();
    c.online.mitigation = mitigation;
    let (records, start) = pipeline::run_online(&stream, &c, c.seed)?;
    write_records_csv(&cfg.out.join(name), &records)?;
    let detections: Vec<usize> = records.iter().filter(|r| r.detected).map(|r| r.t).collect();
    let total = cumulative_sq_error(&records, start, stream.len());
    println!(
        "online from step {start}: {} steps, detections at {detections:?}, squared error {total:.4} -> {}",
        records.len(),
        cfg.out.join(name).display()
    );
    Ok(())
}
