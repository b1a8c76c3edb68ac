//! Run configuration, read from TOML. Every section is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::changepoint::OnlineConfig;
use crate::dataio::{PIECEWISE_LEN, PIECEWISE_NOISE_SD, TRAIN_RATIO, VAL_RATIO};
use crate::error::{Error, Result};
use crate::experts::ExpertKind;
use crate::gating::GateConfig;
use crate::quantile::QuantileConfig;
use crate::reconcile::{Method, DEFAULT_SHRINKAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Smooth trend with a regime change at 90%.
    #[default]
    Piecewise,
    /// Unit-variance Gaussian noise whose mean jumps at `shift_at`.
    GaussianShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Hierarchy spec (TOML or JSON); the built-in 7-vertex tree when unset.
    pub hierarchy: Option<PathBuf>,
    /// Long-format panel CSV; simulated when unset.
    pub panel: Option<PathBuf>,
    /// `timestamp,value` stream for `online`; simulated when unset.
    pub stream: Option<PathBuf>,
    pub length: usize,
    pub period: usize,
    pub train: f64,
    pub val: f64,
    pub stream_kind: StreamKind,
    pub stream_length: usize,
    pub noise_sd: f64,
    pub shift_at: usize,
    pub shift: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            hierarchy: None,
            panel: None,
            stream: None,
            length: 500,
            period: 12,
            train: TRAIN_RATIO,
            val: VAL_RATIO,
            stream_kind: StreamKind::Piecewise,
            stream_length: PIECEWISE_LEN,
            noise_sd: PIECEWISE_NOISE_SD,
            shift_at: 500,
            shift: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconcileConfig {
    pub method: Method,
    /// Shrinkage intensity for `mint_shr`; estimated from the errors when unset.
    pub shrinkage: Option<f64>,
    /// Base forecasts to reconcile: `mixture` or `average`.
    pub base: String,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        ReconcileConfig {
            method: Method::MintShr,
            shrinkage: Some(DEFAULT_SHRINKAGE),
            base: "mixture".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub lambdas: Vec<f64>,
    /// Seeds `seed, seed+1, ...` used for the sweep and the baseline table.
    pub seeds: usize,
    pub baselines: bool,
    pub sweep: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            lambdas: vec![0.0, 0.01, 0.1, 0.5, 1.0, 10.0],
            seeds: 5,
            baselines: true,
            sweep: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
    /// Checkpoint directory read by `forecast`, `evaluate` and `reconcile`;
    /// `<out>/checkpoint` when unset.
    pub checkpoint: Option<PathBuf>,
    pub horizon: usize,
    pub data: DataConfig,
    /// Expert roster; the default roster for `data.period` and `gate.omega`
    /// when empty.
    pub experts: Vec<ExpertKind>,
    /// Refit experts on train + validation after the gates are trained.
    pub refit_experts: bool,
    pub gate: GateConfig,
    pub quantiles: bool,
    pub quantile: QuantileConfig,
    pub reconcile: ReconcileConfig,
    pub online: OnlineConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            jobs: None,
            checkpoint: None,
            horizon: 1,
            data: DataConfig::default(),
            experts: Vec::new(),
            refit_experts: true,
            gate: GateConfig::default(),
            quantiles: true,
            quantile: QuantileConfig::default(),
            reconcile: ReconcileConfig::default(),
            online: OnlineConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.quantile.validate()?;
        self.online.validate()?;
        // TOML integers are i64; checkpoints store the config as TOML
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must not exceed {}", i64::MAX)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.evaluate.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("sweep lambdas must be non-negative".into()));
        }
        if !matches!(self.reconcile.base.as_str(), "mixture" | "average") {
            return Err(Error::Config(format!(
                "reconcile.base must be `mixture` or `average`, got `{}`",
                self.reconcile.base
            )));
        }
        if let Some(a) = self.reconcile.shrinkage {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("shrinkage must lie in [0, 1], got {a}")));
            }
        }
        Ok(())
    }

    pub fn roster(&self) -> Vec<ExpertKind> {
        if self.experts.is_empty() {
            ExpertKind::default_roster(self.data.period, self.gate.omega)
        } else {
            self.experts.clone()
        }
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn table_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.gate.lambda, c.gate.lr, c.gate.epochs, c.gate.batch), (0.1, 1e-4, 1200, 16));
        assert_eq!((c.quantile.d, c.quantile.epochs), (16, 600));
        assert_eq!(c.quantile.grid, vec![0.05, 0.3, 0.5, 0.7, 0.95]);
        let b = &c.online.bocpd;
        assert_eq!((b.hazard, b.mu0, b.var0, b.sigma2), (1e-3, 0.0, 2.0, 1.0));
        assert_eq!((c.online.gamma, c.online.batch, c.online.epochs), (2.0, 1, 5));
    }

    #[test]
    fn partial_and_bad_configs() {
        let c = RunConfig::from_toml(
            "seed = 9\n[gate]\nlambda = 0.5\n[[experts]]\nkind = \"ar_ls\"\np = 2\n[reconcile]\nmethod = \"ols\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.gate.lambda, 0.5);
        assert_eq!(c.gate.epochs, 1200);
        assert_eq!(c.experts, vec![ExpertKind::ArLs { p: 2 }]);
        assert_eq!(c.reconcile.method, Method::Ols);

        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[gate]\nlr = -1.0"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[online]\nbeta0 = 2.0").is_err());
        assert!(RunConfig::from_toml("[reconcile]\nmethod = \"median\"").is_err());
    }
}
