//! Panel and hierarchy loading, chronological splits, sliding windows and
//! synthetic series generators.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Edge, Hierarchy, Sign};

pub const TRAIN_RATIO: f64 = 0.6;
pub const VAL_RATIO: f64 = 0.2;

/// Chronological split points: `[0, train_end)` train, `[train_end, val_end)`
/// validation, `[val_end, len)` test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_end: usize,
    pub val_end: usize,
}

impl Split {
    pub fn from_ratios(len: usize, train: f64, val: f64) -> Result<Self> {
        if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum below 1 (train {train}, val {val})"
            )));
        }
        let train_end = (train * len as f64 + 1e-9).floor() as usize;
        let val_end = ((train + val) * len as f64 + 1e-9).floor() as usize;
        let split = Split { train_end, val_end };
        split.validate(len)?;
        Ok(split)
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if 0 < self.train_end && self.train_end < self.val_end && self.val_end < len {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "invalid split {}/{} for series of length {len}",
                self.train_end, self.val_end
            )))
        }
    }
}

/// Aligned per-vertex series in hierarchy row order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    pub ids: Vec<String>,
    pub timestamps: Vec<i64>,
    pub values: Vec<Vec<f64>>,
    pub split: Split,
}

impl SeriesPanel {
    pub fn new(ids: Vec<String>, timestamps: Vec<i64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let len = timestamps.len();
        if ids.len() != values.len() {
            return Err(Error::dim("panel series", ids.len(), values.len()));
        }
        if let Some(bad) = values.iter().position(|v| v.len() != len) {
            return Err(Error::Data(format!(
                "ragged lengths: series '{}' has {} values, expected {len}",
                ids[bad],
                values[bad].len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("timestamps must be strictly increasing".into()));
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite value in panel".into()));
        }
        let split = Split::from_ratios(len, TRAIN_RATIO, VAL_RATIO)?;
        Ok(SeriesPanel {
            ids,
            timestamps,
            values,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn series(&self, id: &str) -> Option<&[f64]> {
        self.ids
            .iter()
            .position(|s| s == id)
            .map(|i| self.values[i].as_slice())
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.len())?;
        self.split = split;
        Ok(self)
    }

    pub fn check_window(&self, omega: usize) -> Result<()> {
        if self.len() < omega + 2 {
            return Err(Error::Data(format!(
                "series length {} too short for window {omega}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        w.write_record(["series_id", "timestamp", "value"])
            .map_err(|e| Error::parse(path, e))?;
        for (id, vals) in self.ids.iter().zip(&self.values) {
            for (t, v) in self.timestamps.iter().zip(vals) {
                w.write_record([id.as_str(), &t.to_string(), &v.to_string()])
                    .map_err(|e| Error::parse(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    series_id: String,
    timestamp: String,
    value: String,
}

/// Reads a long-format `series_id,timestamp,value` file into a panel aligned
/// to the hierarchy's row order.
pub fn load_panel_csv(path: &Path, hierarchy: &Hierarchy) -> Result<SeriesPanel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel_csv(&text, hierarchy).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path, message),
        other => other,
    })
}

pub fn parse_panel_csv(text: &str, hierarchy: &Hierarchy) -> Result<SeriesPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse("<panel>", e))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Data("no rows".into()));
    }
    if headers.iter().collect::<Vec<_>>() != ["series_id", "timestamp", "value"] {
        return Err(Error::parse(
            "<panel>",
            format!("expected header series_id,timestamp,value, got {headers:?}"),
        ));
    }
    let mut per_series: HashMap<String, BTreeMap<i64, f64>> = HashMap::new();
    let mut rows = 0usize;
    for (line, rec) in reader.deserialize::<PanelRow>().enumerate() {
        let rec = rec.map_err(|e| Error::parse("<panel>", e))?;
        rows += 1;
        let ts: i64 = rec.timestamp.parse().map_err(|_| {
            Error::Data(format!(
                "row {}: non-integer timestamp '{}'",
                line + 2,
                rec.timestamp
            ))
        })?;
        let value: f64 = rec.value.parse().map_err(|_| {
            Error::Data(format!("row {}: non-numeric value '{}'", line + 2, rec.value))
        })?;
        if !value.is_finite() {
            return Err(Error::Data(format!("row {}: missing value", line + 2)));
        }
        if hierarchy.index_of(&rec.series_id).is_none() {
            return Err(Error::Data(format!(
                "series '{}' is not a vertex of the hierarchy",
                rec.series_id
            )));
        }
        let entry = per_series.entry(rec.series_id.clone()).or_default();
        if entry.insert(ts, value).is_some() {
            return Err(Error::Data(format!(
                "duplicate row for series '{}' at timestamp {ts}",
                rec.series_id
            )));
        }
    }
    if rows == 0 {
        return Err(Error::Data("no rows".into()));
    }

    let mut values = Vec::with_capacity(hierarchy.len());
    let mut timestamps: Option<Vec<i64>> = None;
    for id in hierarchy.vertices() {
        let series = per_series
            .get(id)
            .ok_or_else(|| Error::Data(format!("missing vertex '{id}' in panel")))?;
        let ts: Vec<i64> = series.keys().copied().collect();
        match &timestamps {
            None => timestamps = Some(ts),
            Some(reference) if reference.len() != ts.len() => {
                return Err(Error::Data(format!(
                    "ragged lengths: series '{id}' has {} rows, expected {}",
                    ts.len(),
                    reference.len()
                )));
            }
            Some(reference) if *reference != ts => {
                return Err(Error::Data(format!(
                    "series '{id}' timestamps differ from the other series"
                )));
            }
            Some(_) => {}
        }
        values.push(series.values().copied().collect());
    }
    SeriesPanel::new(
        hierarchy.vertices().to_vec(),
        timestamps.unwrap_or_default(),
        values,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchySpec {
    #[serde(default)]
    pub vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub parent: String,
    pub child: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<i64>,
}

impl HierarchySpec {
    pub fn build(&self) -> Result<Hierarchy> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let sign = match e.sign {
                    Some(s) => Sign::try_from(s)?,
                    None => Sign::Plus,
                };
                Ok(Edge::new(e.parent.clone(), e.child.clone(), sign))
            })
            .collect::<Result<Vec<_>>>()?;
        if edges.is_empty() {
            return match self.vertices.as_slice() {
                [only] => Ok(Hierarchy::single(only.clone())),
                _ => Err(Error::Hierarchy(
                    "hierarchy spec needs edges or exactly one vertex".into(),
                )),
            };
        }
        Hierarchy::with_vertices(&self.vertices, &edges)
    }

    pub fn from_hierarchy(h: &Hierarchy) -> Self {
        HierarchySpec {
            vertices: h.vertices().to_vec(),
            edges: h
                .edges()
                .iter()
                .map(|e| EdgeSpec {
                    parent: e.parent.clone(),
                    child: e.child.clone(),
                    sign: Some(e.sign.into()),
                })
                .collect(),
        }
    }
}

/// Loads a hierarchy spec; `.json` files are read as JSON, anything else as TOML.
pub fn load_hierarchy_spec(path: &Path) -> Result<Hierarchy> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: HierarchySpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?
    } else {
        toml::from_str(&text).map_err(|e| Error::parse(path, e))?
    };
    spec.build()
}

pub fn save_hierarchy_spec(h: &Hierarchy, path: &Path) -> Result<()> {
    let text = toml::to_string(&HierarchySpec::from_hierarchy(h))
        .map_err(|e| Error::parse(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sliding windows over a series with next-step targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `(t - omega + 1) x omega`
    pub inputs: Array2<f64>,
    /// `targets[r]` follows row `r`; the final row has none.
    pub targets: Vec<Option<f64>>,
    pub omega: usize,
}

impl WindowBatch {
    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }
}

pub fn sliding_windows(series: &[f64], omega: usize) -> Result<WindowBatch> {
    if omega == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    if series.len() < omega {
        return Err(Error::Data(format!(
            "series of length {} shorter than window {omega}",
            series.len()
        )));
    }
    let rows = series.len() - omega + 1;
    let mut inputs = Array2::zeros((rows, omega));
    for r in 0..rows {
        for c in 0..omega {
            inputs[[r, c]] = series[r + c];
        }
    }
    let targets = (0..rows).map(|r| series.get(r + omega).copied()).collect();
    Ok(WindowBatch {
        inputs,
        targets,
        omega,
    })
}

/// Deterministic part of the piecewise change-point benchmark.
pub fn piecewise_value(x: f64) -> f64 {
    if x < 0.8 {
        3.0 + 3.0 * x + 0.1 * (60.0 * x).sin()
    } else if x < 0.9 {
        3.0 + 3.0 * x + 0.1 * x * x * (60.0 * x).sin()
    } else {
        10.0 + 5.0 * x.powi(4) + (60.0 * x).sin()
    }
}

pub const PIECEWISE_NOISE_SD: f64 = 0.223_606_797_749_979; // sqrt(0.05)
pub const PIECEWISE_LEN: usize = 2000;

/// Samples `f(i / n) + noise` for `i in 0..n`; the regime change sits at
/// index `0.9 n`.
pub fn simulate_piecewise(n: usize, noise_sd: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 10 {
        return Err(Error::Config("piecewise series needs at least 10 samples".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Config("noise_sd must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            piecewise_value(x) + eps
        })
        .collect())
}

pub fn piecewise_change_index(n: usize) -> usize {
    (0..n).find(|&i| i as f64 / n as f64 >= 0.9).unwrap_or(n)
}

/// Unit-variance Gaussian noise whose mean steps from 0 to `shift` at index
/// `at`.
pub fn simulate_gaussian_shift(n: usize, at: usize, shift: f64, seed: u64) -> Result<Vec<f64>> {
    if at > n || !shift.is_finite() {
        return Err(Error::Config(format!("shift index {at} outside a stream of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid sd");
    Ok((0..n)
        .map(|t| noise.sample(&mut rng) + if t >= at { shift } else { 0.0 })
        .collect())
}

/// Leaf processes cycle through four shapes (seasonal AR, drifting walk,
/// stationary AR(2), trend plus season) with seeded parameters; aggregates
/// are formed with [`Hierarchy::aggregate`] so the panel is coherent.
pub fn simulate_hierarchical(
    hierarchy: &Hierarchy,
    len: usize,
    period: usize,
    seed: u64,
) -> Result<SeriesPanel> {
    if len < 10 {
        return Err(Error::Config("hierarchical series needs at least 10 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let std_normal = Normal::new(0.0, 1.0).expect("valid sd");
    let period = period.max(2) as f64;
    let m = hierarchy.n_leaves();
    let mut leaves: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let level = 20.0 + 30.0 * unit.sample(&mut rng);
        let amp = 2.0 + 6.0 * unit.sample(&mut rng);
        let phase = std::f64::consts::TAU * unit.sample(&mut rng);
        let noise_sd = 0.5 + 1.5 * unit.sample(&mut rng);
        let mut series = Vec::with_capacity(len);
        match j % 4 {
            0 => {
                let phi = 0.3 + 0.5 * unit.sample(&mut rng);
                let mut e = 0.0;
                for t in 0..len {
                    e = phi * e + noise_sd * std_normal.sample(&mut rng);
                    let season = amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                    series.push(level + season + e);
                }
            }
            1 => {
                let drift = 0.02 + 0.08 * unit.sample(&mut rng);
                let mut x = level;
                for _ in 0..len {
                    x += drift + 0.5 * noise_sd * std_normal.sample(&mut rng);
                    series.push(x);
                }
            }
            2 => {
                let (a1, a2) = (0.6 + 0.3 * unit.sample(&mut rng), -0.3);
                let (mut x1, mut x2) = (0.0, 0.0);
                for _ in 0..len {
                    let x = a1 * x1 + a2 * x2 + noise_sd * std_normal.sample(&mut rng);
                    x2 = x1;
                    x1 = x;
                    series.push(level + x);
                }
            }
            _ => {
                let slope = 0.01 + 0.04 * unit.sample(&mut rng);
                for t in 0..len {
                    let season = amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                    series.push(
                        level + slope * t as f64 + season + noise_sd * std_normal.sample(&mut rng),
                    );
                }
            }
        }
        leaves.push(series);
    }
    let mut values = vec![Vec::with_capacity(len); hierarchy.len()];
    for t in 0..len {
        let b: Vec<f64> = leaves.iter().map(|s| s[t]).collect();
        for (v, x) in hierarchy.aggregate(&b)?.into_iter().enumerate() {
            values[v].push(x);
        }
    }
    SeriesPanel::new(
        hierarchy.vertices().to_vec(),
        (0..len as i64).collect(),
        values,
    )
}

/// Writes a single series as `timestamp,value`.
pub fn write_series_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("timestamp,value\n");
    for (t, v) in values.iter().enumerate() {
        out.push_str(&format!("{t},{v}\n"));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a `timestamp,value` stream (header required).
pub fn load_series_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::parse(path, "stream file needs a 'value' column"))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let raw = rec.get(col).unwrap_or("");
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Data(format!("non-numeric value '{raw}' in stream")))?;
        if !v.is_finite() {
            return Err(Error::Data("missing value in stream".into()));
        }
        out.push(v);
    }
    Ok(out)
}
