//! Crossing-free multi-quantile generator: `d` positive integrand networks
//! evaluated at the Chebyshev roots, a cosine transform, term-wise
//! integration and a point-forecast constraint on the constant term.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    adam_step, minibatches, positive_transform, positive_transform_grad, Activation, AdamState,
    DenseNet, Standardizer,
};

/// `t_k = cos(pi (k + 1/2) / d)` for `k = 0..d`, strictly decreasing.
pub fn chebyshev_roots(d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Config("Chebyshev degree must be at least 1".into()));
    }
    Ok((0..d)
        .map(|k| (PI * (k as f64 + 0.5) / d as f64).cos())
        .collect())
}

/// `T_k(z)` by the three-term recurrence.
pub fn chebyshev_t(k: usize, z: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => z,
        _ => {
            let (mut prev, mut cur) = (1.0, z);
            for _ in 1..k {
                let next = 2.0 * z * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Unnormalised cosine sums `c_i = sum_k v_k cos(i pi (k + 1/2) / d)`.
pub fn dct_coefficients(values: &[f64], d: usize) -> Result<Vec<f64>> {
    if values.len() != d {
        return Err(Error::dim("integrand values", d, values.len()));
    }
    let df = d as f64;
    Ok((0..d)
        .map(|i| {
            values
                .iter()
                .enumerate()
                .map(|(k, v)| v * (i as f64 * PI * (k as f64 + 0.5) / df).cos())
                .sum()
        })
        .collect())
}

/// `C_1..C_{d-1}` from `c_0..c_{d-1}`; entry `k - 1` holds `C_k`.
pub fn integrate_coefficients(raw: &[f64]) -> Result<Vec<f64>> {
    let d = raw.len();
    if d < 2 {
        return Err(Error::Config("integration needs at least two coefficients".into()));
    }
    Ok((1..d)
        .map(|k| {
            let kf = k as f64;
            if k < d - 1 {
                (raw[k - 1] - raw[k + 1]) / (4.0 * kf)
            } else {
                raw[k - 1] / (4.0 * kf)
            }
        })
        .collect())
}

/// How node values become the integrand between the roots.
///
/// The degree `d - 1` interpolant of positive node values is not positive in
/// general, so `Linear` can cross. `Squared` interpolates `sqrt(P_k)` and
/// squares the result: same node values, non-negative everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntegrandForm {
    #[default]
    Squared,
    Linear,
}

/// Cosine sums (same convention as [`dct_coefficients`], length `2d`) of
/// `g^2`, where `g` interpolates `roots_values` at the `d` roots.
fn squared_raw(roots_values: &[f64]) -> Result<Vec<f64>> {
    let d = roots_values.len();
    let b = dct_coefficients(roots_values, d)?;
    let df = d as f64;
    // Chebyshev coefficients of g
    let a: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(k, &bk)| if k == 0 { bk / df } else { 2.0 * bk / df })
        .collect();
    // T_i T_j = (T_{i+j} + T_{|i-j|}) / 2
    let mut e = vec![0.0; 2 * d];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &aj) in a.iter().enumerate() {
            let h = 0.5 * ai * aj;
            e[i + j] += h;
            e[i.abs_diff(j)] += h;
        }
    }
    // trailing zero keeps the top antiderivative term
    Ok(e.iter()
        .enumerate()
        .map(|(k, &ek)| if k == 0 { df * ek } else { 0.5 * df * ek })
        .collect())
}

/// Cosine sums of the squared interpolant of positive node values.
pub fn squared_coefficients(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Numeric(format!("integrand value {v} is negative")));
    }
    let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    squared_raw(&roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    /// The point forecast is `q(0.5)`.
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(ConstraintKind::Median),
            "mean" => Ok(ConstraintKind::Mean),
            other => Err(Error::Config(format!("unknown constraint kind `{other}`"))),
        }
    }
}

/// Offset `a_k` such that `C_0 = 2 yhat - 2 sum_k a_k C_k`.
fn constraint_offset(kind: ConstraintKind, k: usize) -> f64 {
    match kind {
        ConstraintKind::Median => {
            if k % 2 == 0 {
                if (k / 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        }
        ConstraintKind::Mean => {
            if k % 2 == 1 {
                let kf = k as f64;
                2.0 / (kf * kf - 4.0)
            } else {
                0.0
            }
        }
    }
}

pub fn constrain_c0(point: f64, integrated: &[f64], kind: ConstraintKind) -> f64 {
    let s: f64 = integrated
        .iter()
        .enumerate()
        .map(|(i, c)| constraint_offset(kind, i + 1) * c)
        .sum();
    2.0 * point - 2.0 * s
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Config(format!("quantile level {tau} outside [0, 1]")))
    }
}

/// `C_0 / 2 + sum_k C_k T_k(2 tau - 1)`.
pub fn eval_quantile(c0: f64, integrated: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let z = 2.0 * tau - 1.0;
    let (mut prev, mut cur) = (1.0, z);
    let mut acc = 0.5 * c0;
    for (i, c) in integrated.iter().enumerate() {
        if i > 0 {
            let next = 2.0 * z * cur - prev;
            prev = cur;
            cur = next;
        }
        acc += c * cur;
    }
    Ok(acc)
}

/// `(y - q)(tau - 1[y < q])`.
pub fn pinball_loss(truth: f64, q: f64, tau: f64) -> f64 {
    let ind = if truth < q { 1.0 } else { 0.0 };
    (truth - q) * (tau - ind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevCoeffs {
    pub raw: Vec<f64>,
    /// `C_1..C_{d-1}`.
    pub integrated: Vec<f64>,
    pub c0: f64,
}

impl ChebyshevCoeffs {
    pub fn from_values(values: &[f64], point: f64, kind: ConstraintKind) -> Result<Self> {
        Self::from_raw(dct_coefficients(values, values.len())?, point, kind)
    }

    /// [`IntegrandForm::Squared`] counterpart of [`ChebyshevCoeffs::from_values`].
    pub fn from_values_squared(values: &[f64], point: f64, kind: ConstraintKind) -> Result<Self> {
        Self::from_raw(squared_coefficients(values)?, point, kind)
    }

    pub fn from_raw(raw: Vec<f64>, point: f64, kind: ConstraintKind) -> Result<Self> {
        let integrated = integrate_coefficients(&raw)?;
        let c0 = constrain_c0(point, &integrated, kind);
        Ok(ChebyshevCoeffs {
            raw,
            integrated,
            c0,
        })
    }

    pub fn quantile(&self, tau: f64) -> Result<f64> {
        eval_quantile(self.c0, &self.integrated, tau)
    }

    pub fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        taus.iter().map(|&t| self.quantile(t)).collect()
    }
}

/// `J[s, j] = dq(tau_s) / dp_j` for positive integrand values `p`; the
/// pipeline is linear so `q = yhat + J p`.
pub fn quantile_jacobian(d: usize, kind: ConstraintKind, taus: &[f64]) -> Result<Array2<f64>> {
    let mut jac = Array2::zeros((taus.len(), d));
    let mut unit = vec![0.0; d];
    for j in 0..d {
        unit[j] = 1.0;
        let coeffs = ChebyshevCoeffs::from_values(&unit, 0.0, kind)?;
        for (s, &tau) in taus.iter().enumerate() {
            jac[[s, j]] = coeffs.quantile(tau)?;
        }
        unit[j] = 0.0;
    }
    Ok(jac)
}

/// `A_s` with `q(tau_s) = yhat + r^T A_s r` for root values `r = sqrt(p)`
/// under [`IntegrandForm::Squared`]; built by polarisation.
pub fn quantile_quadratic_forms(d: usize, kind: ConstraintKind, taus: &[f64]) -> Result<Vec<Array2<f64>>> {
    let form = |r: &[f64]| -> Result<Vec<f64>> {
        let c = ChebyshevCoeffs::from_raw(squared_raw(r)?, 0.0, kind)?;
        c.quantiles(taus)
    };
    let mut out = vec![Array2::zeros((d, d)); taus.len()];
    let mut diag = Vec::with_capacity(d);
    let mut x = vec![0.0; d];
    for i in 0..d {
        x[i] = 1.0;
        diag.push(form(&x)?);
        x[i] = 0.0;
    }
    for i in 0..d {
        for (s, a) in out.iter_mut().enumerate() {
            a[[i, i]] = diag[i][s];
        }
        for j in i + 1..d {
            x[i] = 1.0;
            x[j] = 1.0;
            let both = form(&x)?;
            x[i] = 0.0;
            x[j] = 0.0;
            for (s, a) in out.iter_mut().enumerate() {
                let v = 0.5 * (both[s] - diag[i][s] - diag[j][s]);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
    }
    Ok(out)
}

/// Evenly spaced levels `0.01..=0.99`.
pub fn dense_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantileConfig {
    pub d: usize,
    pub hidden: Vec<usize>,
    pub grid: Vec<f64>,
    pub constraint: ConstraintKind,
    pub integrand: IntegrandForm,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        QuantileConfig {
            d: 16,
            hidden: vec![32, 16],
            grid: vec![0.05, 0.3, 0.5, 0.7, 0.95],
            constraint: ConstraintKind::Median,
            integrand: IntegrandForm::Squared,
            lr: 1e-4,
            epochs: 600,
            batch: 16,
        }
    }
}

impl QuantileConfig {
    /// The wide integrand architecture `120, 120, 60, 60, 10` (ReLU).
    pub fn wide() -> Self {
        QuantileConfig {
            hidden: vec![120, 120, 60, 60, 10],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config("quantile degree d must be at least 2".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("quantile training grid is empty".into()));
        }
        for &t in &self.grid {
            check_tau(t)?;
        }
        if self.lr <= 0.0 || self.batch == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("invalid quantile optimiser settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGenerator {
    pub d: usize,
    pub omega: usize,
    pub constraint: ConstraintKind,
    pub integrand: IntegrandForm,
    roots: Vec<f64>,
    /// Net `j` sees `[t_j, scaled window]` and emits one raw output.
    nets: Vec<DenseNet>,
    scaler: Standardizer,
    trained: bool,
}

impl QuantileGenerator {
    pub fn new(omega: usize, config: &QuantileConfig, scaler: Standardizer, seed: u64) -> Result<Self> {
        config.validate()?;
        if omega == 0 {
            return Err(Error::Config("quantile window must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let act = if config.hidden.len() > 2 {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let mut spec: Vec<(usize, Activation)> = config.hidden.iter().map(|&h| (h, act)).collect();
        spec.push((1, Activation::Identity));
        let nets = (0..config.d)
            .map(|_| DenseNet::new(omega + 1, &spec, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantileGenerator {
            d: config.d,
            omega,
            constraint: config.constraint,
            integrand: config.integrand,
            roots: chebyshev_roots(config.d)?,
            nets,
            scaler,
            trained: false,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn nets(&self) -> &[DenseNet] {
        &self.nets
    }

    pub fn scaler(&self) -> Standardizer {
        self.scaler
    }

    fn scaled_windows(&self, windows: &Array2<f64>) -> Result<Array2<f64>> {
        if windows.ncols() != self.omega {
            return Err(Error::dim("quantile window width", self.omega, windows.ncols()));
        }
        Ok(windows.mapv(|x| self.scaler.transform(x)))
    }

    fn net_input(&self, scaled: &Array2<f64>, j: usize) -> Array2<f64> {
        let mut x = Array2::from_elem((scaled.nrows(), self.omega + 1), self.roots[j]);
        x.slice_mut(ndarray::s![.., 1..]).assign(scaled);
        x
    }

    /// Raw outputs `O` (rows x d) on scaled windows.
    fn raw_outputs(&self, scaled: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((scaled.nrows(), self.d));
        for j in 0..self.d {
            let o = self.nets[j].predict(&self.net_input(scaled, j))?;
            out.column_mut(j).assign(&o.column(0));
        }
        Ok(out)
    }

    /// Positive integrand values at the roots, rows x d, in scaled units.
    pub fn integrand_values(&self, windows: &Array2<f64>) -> Result<Array2<f64>> {
        let scaled = self.scaled_windows(windows)?;
        Ok(self.raw_outputs(&scaled)?.mapv(positive_transform))
    }

    /// Per-row coefficients in the original units of the series.
    pub fn compute_coefficients_batch(
        &self,
        windows: &Array2<f64>,
        points: &[f64],
    ) -> Result<Vec<ChebyshevCoeffs>> {
        if points.len() != windows.nrows() {
            return Err(Error::dim("point forecasts", windows.nrows(), points.len()));
        }
        if self.nets.len() != self.d {
            return Err(Error::dim("integrand networks", self.d, self.nets.len()));
        }
        let values = self.integrand_values(windows)?;
        let scale = self.scaler.scale;
        values
            .rows()
            .into_iter()
            .zip(points)
            .map(|(row, &point)| {
                let row = row.as_slice().expect("row-major");
                let raw = match self.integrand {
                    IntegrandForm::Linear => dct_coefficients(row, self.d)?,
                    IntegrandForm::Squared => squared_coefficients(row)?,
                };
                ChebyshevCoeffs::from_raw(raw.into_iter().map(|c| c * scale).collect(), point, self.constraint)
            })
            .collect()
    }

    pub fn quantiles(&self, window: &[f64], point: f64, taus: &[f64]) -> Result<Vec<f64>> {
        let w = Array2::from_shape_vec((1, window.len()), window.to_vec())
            .map_err(|e| Error::Data(e.to_string()))?;
        self.compute_coefficients_batch(&w, &[point])?[0].quantiles(taus)
    }

    /// Minimises the summed pinball loss over `config.grid`; returns the mean
    /// loss per epoch (scaled units).
    pub fn train(
        &mut self,
        windows: &Array2<f64>,
        points: &[f64],
        truth: &[f64],
        config: &QuantileConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        let rows = windows.nrows();
        if points.len() != rows || truth.len() != rows {
            return Err(Error::dim("quantile training targets", rows, truth.len().min(points.len())));
        }
        if rows == 0 {
            return Err(Error::Data("no quantile training rows".into()));
        }
        let scaled = self.scaled_windows(windows)?;
        let yhat: Vec<f64> = points.iter().map(|&p| self.scaler.transform(p)).collect();
        let y: Vec<f64> = truth.iter().map(|&p| self.scaler.transform(p)).collect();
        let (jac, forms) = match self.integrand {
            IntegrandForm::Linear => (quantile_jacobian(self.d, self.constraint, &config.grid)?, Vec::new()),
            IntegrandForm::Squared => (
                Array2::zeros((0, 0)),
                quantile_quadratic_forms(self.d, self.constraint, &config.grid)?,
            ),
        };
        let inputs: Vec<Array2<f64>> = (0..self.d).map(|j| self.net_input(&scaled, j)).collect();
        let mut adams: Vec<AdamState> = self.nets.iter().map(|n| AdamState::new(n, config.lr)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            let mut epoch_loss = 0.0;
            for batch in minibatches(rows, config.batch, &mut rng) {
                let b = batch.len();
                let caches = (0..self.d)
                    .map(|j| self.nets[j].forward(&inputs[j].select(Axis(0), &batch)))
                    .collect::<Result<Vec<_>>>()?;
                let raw = Array2::from_shape_fn((b, self.d), |(r, j)| caches[j].output()[[r, 0]]);
                let pos = raw.mapv(positive_transform);
                // linear: q[r, s] = yhat_r + sum_j J[s, j] p[r, j]
                // squared: q[r, s] = yhat_r + r_r^T A_s r_r with r = sqrt(p)
                let root = pos.mapv(f64::sqrt);
                let sides: Vec<Array2<f64>> = forms.iter().map(|a| root.dot(a)).collect();
                let mut q = match self.integrand {
                    IntegrandForm::Linear => pos.dot(&jac.t()),
                    IntegrandForm::Squared => {
                        let mut q = Array2::zeros((b, config.grid.len()));
                        for (s, m) in sides.iter().enumerate() {
                            q.column_mut(s).assign(&(m * &root).sum_axis(Axis(1)));
                        }
                        q
                    }
                };
                let mut dq = Array2::<f64>::zeros(q.raw_dim());
                for (r, &i) in batch.iter().enumerate() {
                    for (s, &tau) in config.grid.iter().enumerate() {
                        q[[r, s]] += yhat[i];
                        epoch_loss += pinball_loss(y[i], q[[r, s]], tau);
                        let ind = if y[i] < q[[r, s]] { 1.0 } else { 0.0 };
                        dq[[r, s]] = (ind - tau) / b as f64;
                    }
                }
                let dp = match self.integrand {
                    IntegrandForm::Linear => dq.dot(&jac),
                    IntegrandForm::Squared => {
                        // dq/dp_j = (A r)_j / r_j
                        let mut dp = Array2::<f64>::zeros((b, self.d));
                        for (s, m) in sides.iter().enumerate() {
                            dp += &(m * &dq.column(s).insert_axis(Axis(1)));
                        }
                        dp / &root
                    }
                };
                let d_raw = &dp * &raw.mapv(positive_transform_grad);
                for j in 0..self.d {
                    let g = d_raw.column(j).to_owned().insert_axis(Axis(1));
                    let grads = self.nets[j].backward(&caches[j], &g)?;
                    adam_step(&mut self.nets[j], &grads, &mut adams[j])?;
                }
            }
            history.push(epoch_loss / rows as f64);
        }
        self.trained = true;
        Ok(history)
    }
}

/// Checks `q` is non-decreasing along `taus`.
pub fn is_monotone(q: &[f64]) -> bool {
    q.windows(2).all(|w| w[1] >= w[0])
}

/// Quantiles for every row, `rows x taus`.
pub fn quantile_table(coeffs: &[ChebyshevCoeffs], taus: &[f64]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((coeffs.len(), taus.len()));
    for (r, c) in coeffs.iter().enumerate() {
        let q = c.quantiles(taus)?;
        out.row_mut(r).assign(&Array1::from(q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn roots_closed_form() {
        assert!(chebyshev_roots(1).unwrap()[0].abs() < 1e-16);
        let r2 = chebyshev_roots(2).unwrap();
        assert!((r2[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r2[1] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let r4 = chebyshev_roots(4).unwrap();
        for (k, r) in r4.iter().enumerate() {
            assert_eq!(*r, (PI * (2 * k + 1) as f64 / 8.0).cos());
        }
        assert!(r4.windows(2).all(|w| w[0] > w[1]));
        assert!(chebyshev_roots(0).is_err());
    }

    #[test]
    fn chebyshev_polynomials() {
        assert_eq!(chebyshev_t(0, 0.3), 1.0);
        assert_eq!(chebyshev_t(1, 0.3), 0.3);
        assert!((chebyshev_t(2, 0.5) + 0.5).abs() < 1e-15);
        assert!(chebyshev_t(3, (PI / 6.0).cos()).abs() < 1e-15);
        for k in 0..20 {
            for i in 0..=20 {
                let z = -1.0 + i as f64 / 10.0;
                let trig = (k as f64 * z.acos()).cos();
                assert!((chebyshev_t(k, z) - trig).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dct_hand_cases() {
        let c = dct_coefficients(&[2.5; 6], 6).unwrap();
        assert!((c[0] - 15.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-10));
        assert_eq!(dct_coefficients(&[4.0], 1).unwrap(), vec![4.0]);
        assert!(dct_coefficients(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn integration_hand_cases() {
        assert_eq!(integrate_coefficients(&[4.0, 8.0, 12.0]).unwrap(), vec![-2.0, 1.0]);
        assert_eq!(integrate_coefficients(&[0.0; 5]).unwrap(), vec![0.0; 4]);
        assert_eq!(integrate_coefficients(&[3.0, 7.0]).unwrap(), vec![0.75]);
        assert!(integrate_coefficients(&[1.0]).is_err());
    }

    #[test]
    fn constraint_hand_cases() {
        for kind in [ConstraintKind::Median, ConstraintKind::Mean] {
            assert_eq!(constrain_c0(1.5, &[0.0; 7], kind), 3.0);
        }
        assert_eq!(constrain_c0(0.0, &[0.0, 1.0], ConstraintKind::Median), 2.0);
        let c0 = constrain_c0(0.0, &[1.0, 0.0, 0.0], ConstraintKind::Mean);
        assert!((c0 - 4.0 / 3.0).abs() < 1e-15);
        assert!("mode".parse::<ConstraintKind>().is_err());
    }

    #[test]
    fn flat_and_median_pinned() {
        for tau in [0.0, 0.2, 0.5, 1.0] {
            assert!((eval_quantile(6.0, &[0.0; 4], tau).unwrap() - 3.0).abs() < 1e-15);
        }
        assert!(eval_quantile(0.0, &[], 1.2).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let d = rng.random_range(2..20);
            let vals: Vec<f64> = (0..d).map(|_| rng.random_range(0.001..5.0)).collect();
            let y = rng.random_range(-100.0..100.0);
            let c = ChebyshevCoeffs::from_values(&vals, y, ConstraintKind::Median).unwrap();
            assert!((c.quantile(0.5).unwrap() - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn constant_integrand_is_affine() {
        // c0 = d v  =>  q(tau) = yhat + (d v / 4) z
        let (d, v, y) = (2, 1.3, 0.4);
        let c = ChebyshevCoeffs::from_values(&vec![v; d], y, ConstraintKind::Median).unwrap();
        for tau in [0.0, 0.25, 0.5, 0.9] {
            let z = 2.0 * tau - 1.0;
            let expect = y + d as f64 * v / 4.0 * z;
            assert!((c.quantile(tau).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn pinball_hand_cases() {
        assert!((pinball_loss(1.0, 0.0, 0.9) - 0.9).abs() < 1e-15);
        assert_eq!(pinball_loss(2.0, 2.0, 0.3), 0.0);
        assert!((pinball_loss(0.0, 1.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn jacobian_reproduces_pipeline() {
        let taus = dense_grid();
        let jac = quantile_jacobian(7, ConstraintKind::Median, &taus).unwrap();
        let vals = [0.5, 1.0, 2.0, 0.1, 0.3, 1.5, 0.9];
        let c = ChebyshevCoeffs::from_values(&vals, 2.0, ConstraintKind::Median).unwrap();
        let via_jac = jac.dot(&Array1::from(vals.to_vec()));
        for (s, &tau) in taus.iter().enumerate() {
            assert!((c.quantile(tau).unwrap() - (2.0 + via_jac[s])).abs() < 1e-12);
        }
    }

    fn gaussian_windows(n: usize, omega: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let series: Vec<f64> = (0..n + omega).map(|_| normal.sample(&mut rng)).collect();
        let windows = Array2::from_shape_fn((n, omega), |(r, c)| series[r + c]);
        (windows, series[omega..].to_vec())
    }

    #[test]
    fn batch_rows_are_independent() {
        let cfg = QuantileConfig {
            d: 6,
            hidden: vec![8],
            ..QuantileConfig::default()
        };
        let g = QuantileGenerator::new(4, &cfg, Standardizer { mean: 1.0, scale: 2.0 }, 0).unwrap();
        let row = Array2::from_shape_vec((1, 4), vec![0.5, 1.0, -1.0, 2.0]).unwrap();
        let many = Array2::from_shape_fn((3, 4), |(_, c)| row[[0, c]]);
        let one = g.compute_coefficients_batch(&row, &[0.7]).unwrap();
        let three = g.compute_coefficients_batch(&many, &[0.7; 3]).unwrap();
        assert!(three.iter().all(|c| *c == one[0]));
        assert!(g.compute_coefficients_batch(&row, &[0.7, 0.1]).is_err());
    }

    #[test]
    fn learns_gaussian_interval_width() {
        let (windows, truth) = gaussian_windows(2000, 4, 11);
        let cfg = QuantileConfig {
            d: 8,
            hidden: vec![16],
            epochs: 40,
            lr: 1e-3,
            ..QuantileConfig::default()
        };
        let mut g = QuantileGenerator::new(4, &cfg, Standardizer::fit(&truth), 2).unwrap();
        g.train(&windows, &vec![0.0; 2000], &truth, &cfg, 3).unwrap();
        let coeffs = g
            .compute_coefficients_batch(&windows.slice(ndarray::s![..200, ..]).to_owned(), &[0.0; 200])
            .unwrap();
        let width: f64 = coeffs
            .iter()
            .map(|c| c.quantile(0.95).unwrap() - c.quantile(0.05).unwrap())
            .sum::<f64>()
            / 200.0;
        let truth_width = 2.0 * 1.644_853_626_951_472_2;
        assert!((width / truth_width - 1.0).abs() < 0.25, "width {width}");
    }

    #[test]
    fn degenerate_targets_collapse() {
        let (windows, _) = gaussian_windows(300, 3, 5);
        let cfg = QuantileConfig {
            d: 4,
            hidden: vec![8],
            epochs: 60,
            lr: 1e-2,
            ..QuantileConfig::default()
        };
        let points = vec![1.0; 300];
        let mut g = QuantileGenerator::new(3, &cfg, Standardizer { mean: 0.0, scale: 1.0 }, 0).unwrap();
        let hist = g.train(&windows, &points, &points, &cfg, 0).unwrap();
        assert!(hist.last().unwrap() < &(hist[0] * 0.2), "{:?}", &hist[..3]);
    }

    #[test]
    fn squared_matches_linear_on_constants() {
        let taus = dense_grid();
        for d in [2, 5, 16] {
            let vals = vec![1.7; d];
            let lin = ChebyshevCoeffs::from_values(&vals, 0.4, ConstraintKind::Median).unwrap();
            let sq = ChebyshevCoeffs::from_values_squared(&vals, 0.4, ConstraintKind::Median).unwrap();
            for &t in &taus {
                assert!((lin.quantile(t).unwrap() - sq.quantile(t).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn squared_integrand_against_trapezoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let d = rng.random_range(2..20);
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shift = a.iter().map(|x| x.abs()).sum::<f64>() + 0.05;
            // g > 0 of degree d - 1, so sqrt(g^2) = g is interpolated exactly
            let g = |z: f64| shift + a.iter().enumerate().map(|(k, ak)| ak * chebyshev_t(k, z)).sum::<f64>();
            let vals: Vec<f64> = chebyshev_roots(d).unwrap().iter().map(|&t| g(t).powi(2)).collect();
            let c = ChebyshevCoeffs::from_values_squared(&vals, 0.0, ConstraintKind::Median).unwrap();
            let phi = |z: f64| c.quantile((z + 1.0) / 2.0).unwrap();
            let z = rng.random_range(-1.0..1.0);
            let n = 100_000;
            let h = (z + 1.0) / n as f64;
            let trap = h * ((0..=n).map(|i| g(-1.0 + i as f64 * h).powi(2)).sum::<f64>()
                - 0.5 * (g(-1.0).powi(2) + g(z).powi(2)));
            let got = 4.0 / d as f64 * (phi(z) - phi(-1.0));
            assert!((got - trap).abs() < 1e-6 * trap.max(1.0), "d {d}: {got} vs {trap}");
        }
    }

    #[test]
    fn linear_interpolant_can_cross_squared_cannot() {
        let vals: Vec<f64> = (0..8).map(|k| if k % 2 == 0 { 1e-3 } else { 5.0 }).collect();
        let taus = dense_grid();
        let lin = ChebyshevCoeffs::from_values(&vals, 0.0, ConstraintKind::Median).unwrap();
        assert!(!is_monotone(&lin.quantiles(&taus).unwrap()));
        let sq = ChebyshevCoeffs::from_values_squared(&vals, 0.0, ConstraintKind::Median).unwrap();
        assert!(is_monotone(&sq.quantiles(&taus).unwrap()));
        assert!(ChebyshevCoeffs::from_values_squared(&[1.0, -0.1], 0.0, ConstraintKind::Median).is_err());
    }

    #[test]
    fn quadratic_forms_reproduce_pipeline() {
        let taus = [0.05, 0.3, 0.5, 0.7, 0.95];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [ConstraintKind::Median, ConstraintKind::Mean] {
            let forms = quantile_quadratic_forms(9, kind, &taus).unwrap();
            let p: Vec<f64> = (0..9).map(|_| rng.random_range(0.01..3.0)).collect();
            let r = Array1::from(p.iter().map(|x| x.sqrt()).collect::<Vec<_>>());
            let c = ChebyshevCoeffs::from_values_squared(&p, 1.5, kind).unwrap();
            for (s, &tau) in taus.iter().enumerate() {
                let q = 1.5 + r.dot(&forms[s].dot(&r));
                assert!((c.quantile(tau).unwrap() - q).abs() < 1e-10);
                // dq/dp_j = (A r)_j / r_j against central differences
                let grad = forms[s].dot(&r) / &r;
                for j in 0..9 {
                    let h = 1e-6;
                    let (mut up, mut dn) = (p.clone(), p.clone());
                    up[j] += h;
                    dn[j] -= h;
                    let f = |v: &[f64]| ChebyshevCoeffs::from_values_squared(v, 1.5, kind).unwrap().quantile(tau).unwrap();
                    let fd = (f(&up) - f(&dn)) / (2.0 * h);
                    assert!((fd - grad[j]).abs() < 1e-6 * fd.abs().max(1.0));
                }
            }
        }
    }
}
