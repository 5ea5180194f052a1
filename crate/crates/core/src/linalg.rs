//! Dense symmetric eigensolver and a banded SPD solver.
//!
//! The eigensolver is cyclic Jacobi. It is slower than tridiagonal QR for
//! large matrices but needs no shifts or deflation logic and produces
//! orthogonal eigenvectors to working precision, which is all the active
//! subspace and Gauss–Hermite code needs at dimensions up to a few hundred.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative off-diagonal tolerance for Jacobi sweeps.
pub const JACOBI_TOL: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

/// Relative asymmetry `‖A − Aᵀ‖_F / ‖A‖_F` (0 for the zero matrix).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

/// Frobenius norm of `WᵀW − I`.
pub fn orthonormality_defect(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    (gram - DMatrix::identity(w.ncols(), w.ncols())).norm()
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `JACOBI_TOL · ‖A‖_F`. Eigenvectors are normalised so that each column's
/// largest-magnitude entry is positive (lowest index wins ties).
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut m = a.clone();
    // Work on the exactly symmetric part.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();
    let mut sweeps = 0;

    if scale > 0.0 {
        let tol = JACOBI_TOL * scale;
        loop {
            let off = off_diagonal_norm(&m);
            if off <= tol {
                break;
            }
            if sweeps == JACOBI_MAX_SWEEPS {
                return Err(Error::EigenNoConvergence {
                    sweeps,
                    off_norm: off,
                });
            }
            sweeps += 1;
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order for equal eigenvalues.
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut column = v.column(src).into_owned();
        fix_sign(&mut column);
        vectors.set_column(col, &column);
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.nrows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Flip `column` so its largest-magnitude entry is positive.
pub fn fix_sign(column: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..column.len() {
        if column[i].abs() > column[best].abs() {
            best = i;
        }
    }
    if !column.is_empty() && column[best] < 0.0 {
        column.neg_mut();
    }
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn symmetric_spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let eig = symmetric_eigen(a)?;
    Ok(eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Symmetric positive definite matrix in lower band storage.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    // row i holds A[i, i - bandwidth ..= i]
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (self.bandwidth - (i - j))
    }

    /// Adds `value` to `A[i, j]` (and implicitly `A[j, i]`).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bandwidth, "entry ({i}, {j}) outside the band");
        let s = self.slot(r, c);
        self.data[s] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            return 0.0;
        }
        self.data[self.slot(r, c)]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Band Cholesky factorisation `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bandwidth;
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (bw - (i - j));
        for j in 0..n {
            let kmin_j = j.saturating_sub(bw);
            let mut diag = l[idx(j, j)];
            for k in kmin_j..j {
                let v = l[idx(j, k)];
                diag -= v * v;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::SingularSystem {
                    row: j,
                    pivot: diag,
                });
            }
            let ljj = diag.sqrt();
            l[idx(j, j)] = ljj;
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let kmin = i.saturating_sub(bw);
                let mut s = l[idx(i, j)];
                for k in kmin..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                l[idx(i, j)] = s / ljj;
            }
        }
        Ok(BandedCholesky {
            n,
            bandwidth: bw,
            data: l,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bandwidth + 1) + (self.bandwidth - (i - j))]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let bw = self.bandwidth;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            let kmax = (i + bw).min(self.n - 1);
            for k in (i + 1)..=kmax {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }
}
