//! Dense LU with partial pivoting and a Cholesky probe. Matrices here are at
//! most a few hundred rows.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Fails when a pivot falls below `n * eps * max|a|`.
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("square matrix columns", n, a.ncols()));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite matrix entry".into()));
        }
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = (n.max(1) as f64) * f64::EPSILON * scale;
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[[i, k]].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tol || scale == 0.0 {
                return Err(Error::Numeric(format!("singular matrix (pivot {pivot:e} at column {k})")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
            }
            let d = lu[[k, k]];
            for i in k + 1..n {
                let f = lu[[i, k]] / d;
                lu[[i, k]] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[[i, j]] -= f * lu[[k, j]];
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dim("right-hand side length", n, b.len()));
        }
        let mut x: Array1<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        Ok(x)
    }

    pub fn solve(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::dim("right-hand side rows", self.dim(), b.nrows()));
        }
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            let x = self.solve_vec(&col.to_owned())?;
            out.column_mut(j).assign(&x);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Array2<f64>> {
        self.solve(&Array2::eye(self.dim()))
    }
}

pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    Lu::new(a)?.solve(b)
}

pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    Lu::new(a)?.inverse()
}

/// Lower-triangular factor of a symmetric positive-definite matrix. Pivots
/// below `n * eps * max(diag)` count as rank deficiency.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("square matrix columns", n, a.ncols()));
    }
    let tol = n as f64 * f64::EPSILON * a.diag().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > tol) || s == 0.0 {
                    return Err(Error::Numeric(format!(
                        "matrix is not positive definite (pivot {s:e} at {i})"
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_with_pivoting() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = array![1.0, -2.0, 0.5];
        let b = a.dot(&x);
        let got = Lu::new(&a).unwrap().solve_vec(&b).unwrap();
        for (g, e) in got.iter().zip(x.iter()) {
            assert!((g - e).abs() < 1e-14);
        }
        let inv = inverse(&a).unwrap();
        let eye = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_rejected() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(Lu::new(&a), Err(Error::Numeric(_))));
        assert!(Lu::new(&Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn cholesky_checks_definiteness() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }
}
