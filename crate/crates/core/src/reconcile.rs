//! Linear reconciliation `y~ = S P y^` with bottom-up, OLS, MinT and ERM
//! choices of `P`.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, inverse, solve, Lu};

pub const ERM_RIDGE: f64 = 1e-8;
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bu,
    Ols,
    MintSam,
    MintShr,
    MintOls,
    Erm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bu,
        Method::Ols,
        Method::MintSam,
        Method::MintShr,
        Method::MintOls,
        Method::Erm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bu => "bu",
            Method::Ols => "ols",
            Method::MintSam => "mint_sam",
            Method::MintShr => "mint_shr",
            Method::MintOls => "mint_ols",
            Method::Erm => "erm",
        }
    }

    /// Whether `S P S = S` holds by construction.
    pub fn preserves_unbiasedness(self) -> bool {
        self != Method::Erm
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown reconciliation method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MintKind {
    Sam,
    /// `W = (1 - alpha) W_s + alpha diag(W_s)`; `None` estimates alpha.
    Shr { alpha: Option<f64> },
    Ols,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationPlan {
    pub method: Method,
    /// `n x m`
    pub s: Array2<f64>,
    /// `m x n`
    pub p: Array2<f64>,
    pub w: Option<Array2<f64>>,
    pub alpha: Option<f64>,
    pub ridge: Option<f64>,
}

impl ReconciliationPlan {
    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn m(&self) -> usize {
        self.s.ncols()
    }

    pub fn sp(&self) -> Array2<f64> {
        self.s.dot(&self.p)
    }

    pub fn reconcile(&self, base: &[f64]) -> Result<Vec<f64>> {
        if base.len() != self.n() {
            return Err(Error::dim("base forecast length", self.n(), base.len()));
        }
        let y = Array1::from(base.to_vec());
        Ok(self.s.dot(&self.p.dot(&y)).to_vec())
    }

    /// Rows are time steps, columns vertices.
    pub fn reconcile_rows(&self, base: &Array2<f64>) -> Result<Array2<f64>> {
        if base.ncols() != self.n() {
            return Err(Error::dim("base forecast columns", self.n(), base.ncols()));
        }
        Ok(base.dot(&self.sp().t()))
    }
}

fn check_s(s: &Array2<f64>) -> Result<()> {
    let (n, m) = s.dim();
    if m == 0 || n < m {
        return Err(Error::dim("summing matrix rows", m.max(1), n));
    }
    Ok(())
}

/// `P = [0 | I_m]`; leaves occupy the last `m` rows of `S`.
pub fn bu_plan(s: &Array2<f64>) -> Result<ReconciliationPlan> {
    check_s(s)?;
    let (n, m) = s.dim();
    let mut p = Array2::zeros((m, n));
    p.slice_mut(s![.., n - m..]).assign(&Array2::eye(m));
    Ok(ReconciliationPlan {
        method: Method::Bu,
        s: s.to_owned(),
        p,
        w: None,
        alpha: None,
        ridge: None,
    })
}

/// `P = (S^T S)^{-1} S^T`.
pub fn ols_plan(s: &Array2<f64>) -> Result<ReconciliationPlan> {
    check_s(s)?;
    let p = solve(&s.t().dot(s), &s.t().to_owned())?;
    Ok(ReconciliationPlan {
        method: Method::Ols,
        s: s.to_owned(),
        p,
        w: None,
        alpha: None,
        ridge: None,
    })
}

/// `P = (S^T W^{-1} S)^{-1} S^T W^{-1}` for a given positive-definite `W`.
pub fn gls_projection(s: &Array2<f64>, w: &Array2<f64>) -> Result<Array2<f64>> {
    check_s(s)?;
    let n = s.nrows();
    if w.dim() != (n, n) {
        return Err(Error::dim("covariance size", n, w.nrows()));
    }
    let w_inv_s = Lu::new(w)
        .map_err(|e| Error::Numeric(format!("covariance is singular ({e}); use shrinkage")))?
        .solve(s)?;
    let gram = s.t().dot(&w_inv_s);
    solve(&gram, &w_inv_s.t().to_owned())
}

/// Uncentred one-step error covariance `(1/T) sum e e^T`; rows of `errors`
/// are time steps.
pub fn sample_covariance(errors: &Array2<f64>) -> Result<Array2<f64>> {
    let t = errors.nrows();
    if t == 0 {
        return Err(Error::Data("no base-forecast errors for covariance".into()));
    }
    if errors.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite base-forecast error".into()));
    }
    Ok(errors.t().dot(errors) / t as f64)
}

/// Data-driven intensity for a diagonal shrinkage target, computed on
/// standardised errors and clamped to `[0, 1]`.
pub fn estimate_shrinkage(errors: &Array2<f64>) -> Result<f64> {
    let (t, n) = errors.dim();
    if t < 3 {
        return Err(Error::Data("shrinkage estimation needs at least 3 error rows".into()));
    }
    let tf = t as f64;
    let mean = errors.mean_axis(Axis(0)).expect("non-empty");
    let sd = errors.std_axis(Axis(0), 1.0);
    let z = Array2::from_shape_fn((t, n), |(r, c)| {
        if sd[c] > 0.0 {
            (errors[[r, c]] - mean[c]) / sd[c]
        } else {
            0.0
        }
    });
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w: Vec<f64> = (0..t).map(|k| z[[k, i]] * z[[k, j]]).collect();
            let wbar = w.iter().sum::<f64>() / tf;
            let r = wbar * tf / (tf - 1.0);
            let var_r = tf / (tf - 1.0).powi(3) * w.iter().map(|x| (x - wbar).powi(2)).sum::<f64>();
            num += var_r;
            den += r * r;
        }
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

pub fn mint_plan(s: &Array2<f64>, errors: &Array2<f64>, kind: MintKind) -> Result<ReconciliationPlan> {
    check_s(s)?;
    let n = s.nrows();
    if errors.ncols() != n && kind != MintKind::Ols {
        return Err(Error::dim("error columns", n, errors.ncols()));
    }
    let (method, w, alpha) = match kind {
        MintKind::Ols => (Method::MintOls, Array2::eye(n), None),
        MintKind::Sam => {
            let w = sample_covariance(errors)?;
            if errors.nrows() <= n {
                return Err(Error::Numeric(format!(
                    "sample covariance from {} rows is singular for {n} series; use mint_shr",
                    errors.nrows()
                )));
            }
            (Method::MintSam, w, None)
        }
        MintKind::Shr { alpha } => {
            let alpha = match alpha {
                Some(a) => a,
                None => estimate_shrinkage(errors)?.max(1e-6),
            };
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Config(format!("shrinkage alpha {alpha} outside (0, 1]")));
            }
            let ws = sample_covariance(errors)?;
            let mut w = &ws * (1.0 - alpha);
            for i in 0..n {
                w[[i, i]] += alpha * ws[[i, i]];
            }
            (Method::MintShr, w, Some(alpha))
        }
    };
    cholesky(&w).map_err(|e| match kind {
        MintKind::Sam => Error::Numeric(format!("sample covariance not positive definite ({e}); use mint_shr")),
        _ => e,
    })?;
    let p = gls_projection(s, &w)?;
    Ok(ReconciliationPlan {
        method,
        s: s.to_owned(),
        p,
        w: Some(w),
        alpha,
        ridge: None,
    })
}

/// Minimises `sum_t |y_t - S P y^_t|^2`; rows are time steps. The Gram
/// matrix always carries a `1e-8` ridge.
pub fn erm_plan(s: &Array2<f64>, base: &Array2<f64>, truth: &Array2<f64>) -> Result<ReconciliationPlan> {
    check_s(s)?;
    let n = s.nrows();
    if base.ncols() != n || truth.ncols() != n {
        return Err(Error::dim("validation columns", n, base.ncols().min(truth.ncols())));
    }
    if base.nrows() != truth.nrows() || base.nrows() == 0 {
        return Err(Error::dim("validation rows", base.nrows(), truth.nrows()));
    }
    let gram = base.t().dot(base) + Array2::<f64>::eye(n) * ERM_RIDGE;
    let cross = truth.t().dot(base);
    // B = cross gram^{-1}  (gram symmetric)
    let b = solve(&gram, &cross.t().to_owned())?.t().to_owned();
    let proj = inverse(&s.t().dot(s))?.dot(&s.t());
    let p = proj.dot(&b);
    Ok(ReconciliationPlan {
        method: Method::Erm,
        s: s.to_owned(),
        p,
        w: None,
        alpha: None,
        ridge: Some(ERM_RIDGE),
    })
}

/// Builds any plan; `errors`, `base` and `truth` are validation-window
/// matrices with one row per step.
pub fn plan(
    method: Method,
    s: &Array2<f64>,
    base: &Array2<f64>,
    truth: &Array2<f64>,
    shrinkage: Option<f64>,
) -> Result<ReconciliationPlan> {
    match method {
        Method::Bu => bu_plan(s),
        Method::Ols => ols_plan(s),
        Method::MintOls => mint_plan(s, base, MintKind::Ols),
        Method::MintSam => mint_plan(s, &(truth - base), MintKind::Sam),
        Method::MintShr => mint_plan(s, &(truth - base), MintKind::Shr { alpha: shrinkage }),
        Method::Erm => erm_plan(s, base, truth),
    }
}
