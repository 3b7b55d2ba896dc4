//! Dense symmetric positive-definite factorization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `A = L Lᵀ` of a dense row-major matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Scalar> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `a` (row-major, `n × n`). Only the lower triangle is read.
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Contract(format!("matrix has {} entries, expected {}", a.len(), n * n)));
        }
        for j in 0..n {
            let (row_j, below) = a[j * n..].split_at_mut(n);
            let mut diag = row_j[j];
            for &v in &row_j[..j] {
                diag -= v * v;
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Numerical(format!(
                    "Cholesky pivot {j} of {n} is {diag}; matrix is not positive definite"
                )));
            }
            let d = diag.sqrt();
            row_j[j] = d;
            for row_i in below.chunks_exact_mut(n) {
                let mut s = row_i[j];
                for k in 0..j {
                    s -= row_i[k] * row_j[k];
                }
                row_i[j] = s / d;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                a[i * n + j] = T::zero();
            }
        }
        Ok(Self { n, l: a })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Contract(format!("right-hand side has {} entries, expected {n}", b.len())));
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = y[i];
            for (k, &lik) in row.iter().enumerate() {
                s -= lik * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("solution entry {i} is not finite")));
        }
        Ok(y)
    }
}

/// `y = A x` for a dense row-major square matrix.
pub fn matvec<T: Scalar>(a: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n).map(|i| crate::scalar::dot(&a[i * n..(i + 1) * n], x)).collect()
}
