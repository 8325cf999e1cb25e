//! Structured symmetric matrices used by the Newton inner solvers.

use nalgebra::{DMatrix, DVector};

/// A symmetric matrix in one of three storage formats.
#[derive(Debug, Clone)]
pub enum SymMatrix {
    Diag(Vec<f64>),
    /// Symmetric tridiagonal: `diag` has length n, `off` has length n−1.
    Tri { diag: Vec<f64>, off: Vec<f64> },
    Dense(DMatrix<f64>),
}

impl SymMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SymMatrix::Diag(d) => d.len(),
            SymMatrix::Tri { diag, .. } => diag.len(),
            SymMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymMatrix::Diag(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            SymMatrix::Tri { diag, off } => {
                let n = diag.len();
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = diag[i];
                    if i + 1 < n {
                        m[(i, i + 1)] = off[i];
                        m[(i + 1, i)] = off[i];
                    }
                }
                m
            }
            SymMatrix::Dense(m) => m.clone(),
        }
    }

    /// Sum of two symmetric matrices, keeping the sparsest common format.
    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        use SymMatrix::*;
        match (self, other) {
            (Diag(a), Diag(b)) => Diag(a.iter().zip(b).map(|(x, y)| x + y).collect()),
            (Diag(a), Tri { diag, off }) | (Tri { diag, off }, Diag(a)) => Tri {
                diag: diag.iter().zip(a).map(|(x, y)| x + y).collect(),
                off: off.clone(),
            },
            (Tri { diag: d1, off: o1 }, Tri { diag: d2, off: o2 }) => Tri {
                diag: d1.iter().zip(d2).map(|(x, y)| x + y).collect(),
                off: o1.iter().zip(o2).map(|(x, y)| x + y).collect(),
            },
            (a, b) => Dense(a.to_dense() + b.to_dense()),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SymMatrix::Diag(d) => DVector::from_iterator(d.len(), d.iter().zip(x.iter()).map(|(a, b)| a * b)),
            SymMatrix::Tri { diag, off } => {
                let n = diag.len();
                DVector::from_fn(n, |i, _| {
                    let mut s = diag[i] * x[i];
                    if i > 0 {
                        s += off[i - 1] * x[i - 1];
                    }
                    if i + 1 < n {
                        s += off[i] * x[i + 1];
                    }
                    s
                })
            }
            SymMatrix::Dense(m) => m * x,
        }
    }

    /// Largest absolute entry, used to scale Levenberg damping.
    pub fn max_abs(&self) -> f64 {
        match self {
            SymMatrix::Diag(d) => d.iter().fold(0.0, |m, v| m.max(v.abs())),
            SymMatrix::Tri { diag, off } => diag.iter().chain(off).fold(0.0, |m, v| m.max(v.abs())),
            SymMatrix::Dense(m) => m.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }

    /// Solves `(A + μI) x = b`, returning `None` unless the shifted matrix
    /// is numerically positive definite.
    pub fn solve_spd(&self, mu: f64, b: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            SymMatrix::Diag(d) => {
                let mut x = b.clone();
                for i in 0..d.len() {
                    let p = d[i] + mu;
                    if p <= 0.0 || !p.is_finite() {
                        return None;
                    }
                    x[i] /= p;
                }
                Some(x)
            }
            SymMatrix::Tri { diag, off } => tridiag_ldl_solve(diag, off, mu, b),
            SymMatrix::Dense(m) => {
                let mut a = m.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += mu;
                }
                a.cholesky().map(|c| c.solve(b))
            }
        }
    }
}

fn tridiag_ldl_solve(diag: &[f64], off: &[f64], mu: f64, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = diag.len();
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = diag[0] + mu;
    if d[0] <= 0.0 || !d[0].is_finite() {
        return None;
    }
    for i in 1..n {
        l[i - 1] = off[i - 1] / d[i - 1];
        d[i] = diag[i] + mu - l[i - 1] * off[i - 1];
        if d[i] <= 0.0 || !d[i].is_finite() {
            return None;
        }
    }
    let mut y = b.clone();
    for i in 1..n {
        y[i] -= l[i - 1] * y[i - 1];
    }
    for i in 0..n {
        y[i] /= d[i];
    }
    for i in (0..n.saturating_sub(1)).rev() {
        y[i] -= l[i] * y[i + 1];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve_matches_dense() {
        let t = SymMatrix::Tri { diag: vec![4.0, 5.0, 6.0, 7.0], off: vec![1.0, -2.0, 0.5] };
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let x = t.solve_spd(0.1, &b).unwrap();
        let mut a = t.to_dense();
        for i in 0..4 {
            a[(i, i)] += 0.1;
        }
        assert!((a * &x - b).norm() < 1e-12);
    }

    #[test]
    fn indefinite_is_rejected() {
        let t = SymMatrix::Tri { diag: vec![1.0, 1.0], off: vec![2.0] };
        assert!(t.solve_spd(0.0, &DVector::from_vec(vec![1.0, 1.0])).is_none());
    }
}
