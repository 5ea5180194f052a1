//! Poisson equation `−∇·(a ∇u) = 1` on the unit square with a log-normal
//! coefficient given by a truncated Karhunen–Loève expansion.
//!
//! Boundary conditions: `u = 0` on the bottom, left and top edges, zero flux
//! on the right edge `s₁ = 1`. Observations are `u` at points on the right
//! edge, linearly interpolated between grid nodes.
//!
//! # Discretisation
//!
//! Nodes sit at `(i h, j h)`, `h = 1/(grid_n − 1)`. The unknowns are the
//! nodes with `1 ≤ i ≤ grid_n − 1` and `1 ≤ j ≤ grid_n − 2`, ordered with
//! `j` fastest. Each unknown carries a finite-volume balance over its dual
//! cell; the cells on the Neumann edge are halved. Face conductances use the
//! harmonic mean of the nodal coefficients, so the system matrix is a
//! symmetric M-matrix and the adjoint system is the forward system.
//!
//! # Karhunen–Loève modes
//!
//! The kernel `exp(−‖s − t‖₁/β)` factors as `k(s₁,t₁) k(s₂,t₂)`, so the
//! grid covariance is the Kronecker product of two 1-D kernel matrices and
//! its eigenpairs are products of 1-D eigenpairs. Modes are orthonormal in
//! the discrete (nodal) inner product.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fix_sign, symmetric_eigen, BandedCholesky, BandedSpd};
use crate::posterior::{BayesProblem, ForwardModel};
use crate::rng::{standard_normal_vec, stream};

/// Observation heights on the right edge.
pub const DEFAULT_OBS_POINTS: [f64; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
/// Noise variance as a fraction of `‖m(x_true)‖²`.
pub const NOISE_FRACTION: f64 = 1e-4;
/// Grids with more nodes than this are flagged as expensive.
pub const EXPENSIVE_NODES: usize = 64 * 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonKlConfig {
    pub grid_n: usize,
    pub m_kl: usize,
    pub beta: f64,
    pub seed: u64,
    #[serde(default = "default_obs_points")]
    pub obs_points: Vec<f64>,
}

fn default_obs_points() -> Vec<f64> {
    DEFAULT_OBS_POINTS.to_vec()
}

impl PoissonKlConfig {
    /// 32×32 grid, 20 modes, β = 0.02.
    pub fn desk(seed: u64) -> Self {
        Self {
            grid_n: 32,
            m_kl: 20,
            beta: 0.02,
            seed,
            obs_points: default_obs_points(),
        }
    }

    /// 100×100 grid, 100 modes, β = 0.02.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            grid_n: 100,
            m_kl: 100,
            beta: 0.02,
            seed,
            obs_points: default_obs_points(),
        }
    }

    pub fn is_expensive(&self) -> bool {
        self.grid_n * self.grid_n > EXPENSIVE_NODES
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 16 {
            return Err(Error::InvalidArgument(format!(
                "grid_n must be at least 16, got {}",
                self.grid_n
            )));
        }
        if self.m_kl == 0 || self.m_kl > self.grid_n * self.grid_n {
            return Err(Error::InvalidArgument(format!(
                "m_kl must lie in [1, grid_n²] = [1, {}], got {}",
                self.grid_n * self.grid_n,
                self.m_kl
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument("correlation length must be positive".into()));
        }
        if self.obs_points.is_empty() || self.obs_points.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidArgument("observation points must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Leading eigenpairs of the grid covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBasis {
    /// Descending eigenvalues `σᵢ`.
    pub values: Vec<f64>,
    /// Modes as columns over the `grid_n²` nodes, node `(i, j)` at row
    /// `i·grid_n + j`.
    pub modes: DMatrix<f64>,
}

impl KlBasis {
    pub fn new(grid_n: usize, beta: f64, count: usize) -> Result<Self> {
        let h = 1.0 / (grid_n - 1) as f64;
        let kernel = DMatrix::from_fn(grid_n, grid_n, |a, b| {
            (-((a as f64 - b as f64).abs() * h) / beta).exp()
        });
        let eig = symmetric_eigen(&kernel)?;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(grid_n * grid_n);
        for a in 0..grid_n {
            for b in 0..grid_n {
                pairs.push((eig.values[a] * eig.values[b], a, b));
            }
        }
        // Stable: equal products keep (a, b) lexicographic order.
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
        let nodes = grid_n * grid_n;
        let mut modes = DMatrix::<f64>::zeros(nodes, count);
        let mut values = Vec::with_capacity(count);
        for (k, &(value, a, b)) in pairs.iter().take(count).enumerate() {
            let mut col = DVector::from_fn(nodes, |idx, _| {
                let (i, j) = (idx / grid_n, idx % grid_n);
                eig.vectors[(i, a)] * eig.vectors[(j, b)]
            });
            fix_sign(&mut col);
            modes.set_column(k, &col);
            values.push(value);
        }
        Ok(Self { values, modes })
    }

    /// Dense grid covariance `exp(−‖sₚ − s_q‖₁ / β)`.
    pub fn grid_covariance(grid_n: usize, beta: f64) -> DMatrix<f64> {
        let h = 1.0 / (grid_n - 1) as f64;
        let nodes = grid_n * grid_n;
        DMatrix::from_fn(nodes, nodes, |p, q| {
            let (pi, pj) = ((p / grid_n) as f64, (p % grid_n) as f64);
            let (qi, qj) = ((q / grid_n) as f64, (q % grid_n) as f64);
            (-(((pi - qi).abs() + (pj - qj).abs()) * h) / beta).exp()
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `log a = Σ √σᵢ φᵢ xᵢ` at every node.
    pub fn log_field(&self, x: &[f64]) -> Vec<f64> {
        let scaled = DVector::from_iterator(
            self.len(),
            x.iter().zip(&self.values).map(|(xi, s)| xi * s.sqrt()),
        );
        (&self.modes * scaled).as_slice().to_vec()
    }

    /// Prior pointwise variance of `log a`, `Σ σᵢ φᵢ(s)²`.
    pub fn pointwise_variance(&self) -> Vec<f64> {
        (0..self.modes.nrows())
            .map(|p| {
                self.values
                    .iter()
                    .enumerate()
                    .map(|(k, s)| s * self.modes[(p, k)].powi(2))
                    .sum()
            })
            .collect()
    }
}

/// Discrete PDE solution.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    /// `u` at all `grid_n²` nodes, Dirichlet nodes included.
    pub field: Vec<f64>,
    pub observations: Vec<f64>,
}

#[derive(Debug)]
pub struct PoissonKlModel {
    grid_n: usize,
    kl: KlBasis,
    /// Per observation: `(unknown index, weight)` pairs.
    obs: Vec<Vec<(usize, f64)>>,
    solves: AtomicU64,
}

struct Face {
    p: usize,
    q: Option<usize>,
    node_p: usize,
    node_q: usize,
    weight: f64,
}

impl PoissonKlModel {
    pub fn new(grid_n: usize, kl: KlBasis, obs_points: &[f64]) -> Result<Self> {
        if kl.modes.nrows() != grid_n * grid_n {
            return Err(Error::Dimension("KL modes do not match the grid".into()));
        }
        let h = 1.0 / (grid_n - 1) as f64;
        let i = grid_n - 1;
        let mut obs = Vec::with_capacity(obs_points.len());
        for &s in obs_points {
            let t = s / h;
            let j0 = (t.floor() as usize).min(grid_n - 2);
            let frac = t - j0 as f64;
            let mut stencil = Vec::new();
            for (j, w) in [(j0, 1.0 - frac), (j0 + 1, frac)] {
                if w != 0.0 && j >= 1 && j <= grid_n - 2 {
                    stencil.push(((i - 1) * (grid_n - 2) + (j - 1), w));
                }
            }
            obs.push(stencil);
        }
        Ok(Self {
            grid_n,
            kl,
            obs,
            solves: AtomicU64::new(0),
        })
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn kl(&self) -> &KlBasis {
        &self.kl
    }

    /// Linear solves performed so far.
    pub fn solve_count(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    fn unknowns(&self) -> usize {
        (self.grid_n - 1) * (self.grid_n - 2)
    }

    fn unknown(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.grid_n;
        (i >= 1 && j >= 1 && j <= n - 2).then(|| (i - 1) * (n - 2) + (j - 1))
    }

    fn faces(&self) -> Vec<Face> {
        let n = self.grid_n;
        let node = |i: usize, j: usize| i * n + j;
        let mut faces = Vec::new();
        // faces between (i, j) and (i + 1, j)
        for j in 1..=n - 2 {
            for i in 0..n - 1 {
                let (a, b) = (self.unknown(i, j), self.unknown(i + 1, j));
                let (p, q, np, nq) = match (a, b) {
                    (Some(a), b) => (a, b, node(i, j), node(i + 1, j)),
                    (None, Some(b)) => (b, None, node(i + 1, j), node(i, j)),
                    (None, None) => continue,
                };
                faces.push(Face { p, q, node_p: np, node_q: nq, weight: 1.0 });
            }
        }
        // faces between (i, j) and (i, j + 1); half length on the Neumann edge
        for i in 1..=n - 1 {
            let weight = if i == n - 1 { 0.5 } else { 1.0 };
            for j in 0..n - 1 {
                let (a, b) = (self.unknown(i, j), self.unknown(i, j + 1));
                let (p, q, np, nq) = match (a, b) {
                    (Some(a), b) => (a, b, node(i, j), node(i, j + 1)),
                    (None, Some(b)) => (b, None, node(i, j + 1), node(i, j)),
                    (None, None) => continue,
                };
                faces.push(Face { p, q, node_p: np, node_q: nq, weight });
            }
        }
        faces
    }

    fn assemble(&self, a: &[f64], faces: &[Face]) -> BandedSpd {
        let mut k = BandedSpd::zeros(self.unknowns(), self.grid_n - 2);
        for f in faces {
            let c = f.weight * harmonic(a[f.node_p], a[f.node_q]);
            k.add(f.p, f.p, c);
            if let Some(q) = f.q {
                k.add(q, q, c);
                k.add(f.p, q, -c);
            }
        }
        k
    }

    fn load(&self) -> Vec<f64> {
        let n = self.grid_n;
        let h = 1.0 / (n - 1) as f64;
        let mut b = vec![h * h; self.unknowns()];
        for j in 1..=n - 2 {
            b[self.unknown(n - 1, j).unwrap()] *= 0.5;
        }
        b
    }

    fn solve(&self, chol: &BandedCholesky, rhs: &mut [f64]) {
        self.solves.fetch_add(1, Ordering::Relaxed);
        chol.solve_in_place(rhs);
    }

    fn observe(&self, u: &[f64]) -> Vec<f64> {
        self.obs
            .iter()
            .map(|st| st.iter().map(|&(k, w)| w * u[k]).sum())
            .collect()
    }

    fn scatter(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid_n;
        let mut field = vec![0.0; n * n];
        for i in 1..n {
            for j in 1..n - 1 {
                field[i * n + j] = u[self.unknown(i, j).unwrap()];
            }
        }
        field
    }

    fn coefficient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.kl.len() {
            return Err(Error::Dimension(format!(
                "expected {} KL coefficients, got {}",
                self.kl.len(),
                x.len()
            )));
        }
        let a: Vec<f64> = self.kl.log_field(x).into_iter().map(f64::exp).collect();
        if a.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Forward("coefficient field overflowed".into()));
        }
        Ok(a)
    }

    /// Solves the PDE for a nodal coefficient field `a > 0`.
    pub fn solve_coefficient(&self, a: &[f64]) -> Result<PdeSolution> {
        if a.len() != self.grid_n * self.grid_n {
            return Err(Error::Dimension("coefficient field does not match the grid".into()));
        }
        let faces = self.faces();
        let chol = self.assemble(a, &faces).cholesky()?;
        let mut u = self.load();
        self.solve(&chol, &mut u);
        Ok(PdeSolution {
            observations: self.observe(&u),
            field: self.scatter(&u),
        })
    }

    pub fn solve_pde(&self, x: &[f64]) -> Result<PdeSolution> {
        self.solve_coefficient(&self.coefficient(x)?)
    }

    /// Dense system matrix and load vector for `a`, for reference solves.
    pub fn dense_system(&self, a: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.assemble(a, &self.faces());
        (k.to_dense(), DVector::from_vec(self.load()))
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl ForwardModel for PoissonKlModel {
    fn param_dim(&self) -> usize {
        self.kl.len()
    }

    fn obs_dim(&self) -> usize {
        self.obs.len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_pde(x)?.observations)
    }

    /// One forward solve and one adjoint solve with the same factorisation.
    fn forward_and_pullback(
        &self,
        x: &[f64],
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = self.coefficient(x)?;
        let faces = self.faces();
        let chol = self.assemble(&a, &faces).cholesky()?;
        let mut u = self.load();
        self.solve(&chol, &mut u);
        let out = self.observe(&u);

        let w = cotangent(&out);
        let mut lambda = vec![0.0; self.unknowns()];
        for (st, wk) in self.obs.iter().zip(&w) {
            for &(k, weight) in st {
                lambda[k] += weight * wk;
            }
        }
        self.solve(&chol, &mut lambda);

        // d(wᵀ B u) = −λᵀ dK u; accumulate per node through the harmonic means.
        let mut node_sens = vec![0.0; a.len()];
        for f in &faces {
            let (ap, aq) = (a[f.node_p], a[f.node_q]);
            let (du, dl) = match f.q {
                Some(q) => (u[f.p] - u[q], lambda[f.p] - lambda[q]),
                None => (u[f.p], lambda[f.p]),
            };
            let s = -f.weight * du * dl;
            let denom = (ap + aq) * (ap + aq);
            node_sens[f.node_p] += s * 2.0 * aq * aq / denom;
            node_sens[f.node_q] += s * 2.0 * ap * ap / denom;
        }
        // chain rule through a = exp(Σ √σₖ φₖ xₖ)
        let weighted = DVector::from_iterator(a.len(), node_sens.iter().zip(&a).map(|(s, a)| s * a));
        let proj = self.kl.modes.transpose() * weighted;
        let grad = proj
            .iter()
            .zip(&self.kl.values)
            .map(|(g, s)| g * s.sqrt())
            .collect();
        Ok((out, grad))
    }

    fn is_expensive(&self) -> bool {
        true
    }
}

/// The synthetic PDE inverse problem with its generating truth.
#[derive(Debug, Clone)]
pub struct PoissonKlProblem {
    pub config: PoissonKlConfig,
    pub model: Arc<PoissonKlModel>,
    pub x_true: Vec<f64>,
    /// `m(x_true)` before noise.
    pub clean_observations: Vec<f64>,
    pub data: Vec<f64>,
    pub noise_var: f64,
}

impl PoissonKlProblem {
    pub fn bayes_problem(&self) -> Result<BayesProblem> {
        BayesProblem::new(self.model.clone(), self.data.clone(), self.noise_var)
    }

    /// Same problem with externally supplied data.
    pub fn with_data(mut self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::Dimension(format!(
                "expected {} observations, got {}",
                self.data.len(),
                data.len()
            )));
        }
        self.data = data;
        Ok(self)
    }
}

/// Builds the KL basis, draws `x_true` from stream 0 of the seed, solves the
/// PDE and adds Gaussian noise (stream 1) with variance
/// `1e-4 ‖m(x_true)‖²`.
pub fn poisson_kl_problem(config: &PoissonKlConfig) -> Result<PoissonKlProblem> {
    config.validate()?;
    let kl = KlBasis::new(config.grid_n, config.beta, config.m_kl)?;
    let model = Arc::new(PoissonKlModel::new(config.grid_n, kl, &config.obs_points)?);
    let x_true = standard_normal_vec(&mut stream(config.seed, 0), config.m_kl);
    let clean = model.forward(&x_true)?;
    let noise_var = NOISE_FRACTION * clean.iter().map(|v| v * v).sum::<f64>();
    let noise = standard_normal_vec(&mut stream(config.seed, 1), clean.len());
    let data = clean
        .iter()
        .zip(&noise)
        .map(|(m, e)| m + noise_var.sqrt() * e)
        .collect();
    Ok(PoissonKlProblem {
        config: config.clone(),
        model,
        x_true,
        clean_observations: clean,
        data,
        noise_var,
    })
}
