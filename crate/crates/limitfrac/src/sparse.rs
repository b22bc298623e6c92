//! Minimal CSR matrix and a Jacobi-preconditioned conjugate gradient solver.
//!
//! Triplets are accumulated in element order and merged by a stable sort, so
//! assembly and the solve are deterministic for any thread count.

use crate::par;

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from unordered triplets, summing duplicates.
    /// The sort is stable, so duplicates merge in insertion order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_counts = vec![0usize; n];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_counts[i] += 1;
                last = Some((i, j));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut Vec<f64>) {
        y.resize(self.n, 0.0);
        par::fill_indexed(y, |i| {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }
}

#[derive(Debug, thiserror::Error)]
#[error("conjugate gradient did not converge in {iterations} iterations (residual {achieved:.3e}, target {target:.3e})")]
pub struct CgFailure {
    pub iterations: usize,
    pub achieved: f64,
    pub target: f64,
    /// Best iterate found; callers may inspect it but must treat the solve as failed.
    pub last_iterate: Vec<f64>,
}

/// Jacobi-preconditioned CG for symmetric positive definite systems.
///
/// Returns `x` with `||A x - b||_2 <= tol * ||b||_2`. A zero right-hand side
/// returns the zero vector immediately.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, CgFailure> {
    let n = a.n;
    let norm_b = par::dot(b, b).sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = tol * norm_b;
    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut ax = Vec::new();
    a.matvec(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut res = par::dot(&r, &r).sqrt();
    if res <= target {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = Vec::new();
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            // Matrix is not SPD on this subspace; report as non-convergence.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = par::dot(&r, &r).sqrt();
        if res <= target {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(CgFailure { iterations: max_iter, achieved: res, target, last_iterate: x })
}
