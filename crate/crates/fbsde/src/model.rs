//! FBSDE problem definitions and analytically constructed test problems.
//!
//! A problem bundles the forward coefficients `b`, `σ`, the generator `f`,
//! the terminal function `φ`, and optional symbolic derivatives of the
//! coefficients. Test problems are built the other way around: pick a
//! smooth `u(t, x)`, read off
//!
//! ```text
//! Y_t = u(t, X_t),    Z_t = u_x(t, X_t) σ(t, X_t),
//! ```
//!
//! and back-solve `f` from the parabolic PDE
//!
//! ```text
//! u_t + ½ Σ_{i,j} [σσᵀ]_{ij} u_{x_i x_j} + Σ_i b_i u_{x_i} + f(t, x, u, u_x σ) = 0,
//! u(T, x) = φ(x),
//! ```
//!
//! so exact reference values for `Y` and `Z` exist at every `(t, x)`.
//! [`feynman_kac_residual`] evaluates the left-hand side and is the
//! self-check that a constructed problem and its claimed solution actually
//! match.

use std::sync::Arc;

use crate::error::{FbsdeError, Result};
use crate::fd;

/// Scalar field of `(t, x)`.
pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Vector field of `(t, x)`, length `d`.
pub type VectorFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Matrix field of `(t, x)`, shape `d × d` as `[row][col]`.
pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;
/// Rank-3 field of `(t, x)` (first-derivative tensors of matrix fields).
pub type Tensor3Fn = Arc<dyn Fn(f64, &[f64]) -> Vec<Vec<Vec<f64>>> + Send + Sync>;
/// Rank-4 field of `(t, x)` (second-derivative tensors of matrix fields).
pub type Tensor4Fn = Arc<dyn Fn(f64, &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> + Send + Sync>;
/// Generator `f(t, x, y, z)` with `z` a row vector of length `d`.
pub type GeneratorFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// Terminal condition `φ(x)`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A decoupled FBSDE:
///
/// ```text
/// dX_t = b(t, X_t) dt + σ(t, X_t) dW_t,            X_0 = x0,
/// -dY_t = f(t, X_t, Y_t, Z_t) dt − Z_t dW_t,       Y_T = φ(X_T).
/// ```
///
/// All callbacks must be pure: evaluating a coefficient twice at the same
/// `(t, x)` must give identical results. Derivative callbacks are optional;
/// whenever one is absent the accessor methods substitute central finite
/// differences (step `eps^(1/3)·max(1,|x|)` for first derivatives,
/// `eps^(1/4)·max(1,|x|)` for second), and the problem reports itself as
/// having approximate derivatives.
#[derive(Clone)]
pub struct FbsdeProblem {
    /// Spatial dimension of `X` and `W`.
    pub dim: usize,
    /// Horizon `T > 0`.
    pub horizon: f64,
    /// Initial state, length `dim`.
    pub x0: Vec<f64>,
    /// Drift `b(t, x)`, length `dim`.
    pub drift: VectorFn,
    /// Diffusion `σ(t, x)`, `dim × dim`.
    pub diffusion: MatrixFn,
    /// Generator `f(t, x, y, z)`.
    pub generator: GeneratorFn,
    /// Terminal condition `φ(x)`.
    pub terminal: TerminalFn,
    /// `∂b_i/∂x_k` as `[i][k]`.
    pub drift_dx: Option<MatrixFn>,
    /// `∂b/∂t`, length `dim`.
    pub drift_dt: Option<VectorFn>,
    /// `∂²b_i/∂x_k ∂x_l` as `[i][k][l]`.
    pub drift_dxx: Option<Tensor3Fn>,
    /// `∂σ/∂t` as `[i][j]`.
    pub sigma_dt: Option<MatrixFn>,
    /// `∂σ_{ij}/∂x_k` as `[i][j][k]`.
    pub sigma_dx: Option<Tensor3Fn>,
    /// `∂²σ_{ij}/∂x_k ∂x_l` as `[i][j][k][l]`.
    pub sigma_dxx: Option<Tensor4Fn>,
    /// Lipschitz constant of `f` in `y`, used by the Picard contraction
    /// check. Factories set it; defaults to 0 (generator independent of y).
    pub lipschitz_y: f64,
}

impl FbsdeProblem {
    /// Builds a problem from the four defining callbacks. Derivative
    /// callbacks start out absent; assign the `*_dx`/`*_dt` fields to make
    /// the coefficient derivatives exact.
    pub fn new(
        dim: usize,
        horizon: f64,
        x0: Vec<f64>,
        drift: VectorFn,
        diffusion: MatrixFn,
        generator: GeneratorFn,
        terminal: TerminalFn,
    ) -> Self {
        assert_eq!(x0.len(), dim, "x0 length must equal dim");
        assert!(horizon > 0.0, "horizon must be positive");
        FbsdeProblem {
            dim,
            horizon,
            x0,
            drift,
            diffusion,
            generator,
            terminal,
            drift_dx: None,
            drift_dt: None,
            drift_dxx: None,
            sigma_dt: None,
            sigma_dx: None,
            sigma_dxx: None,
            lipschitz_y: 0.0,
        }
    }

    /// True when every coefficient derivative used by the weak order-2
    /// one-step map comes from a symbolic callback rather than a finite
    /// difference. Reports should flag runs where this is false.
    pub fn has_exact_derivatives(&self) -> bool {
        self.drift_dx.is_some()
            && self.sigma_dt.is_some()
            && self.sigma_dx.is_some()
            && self.sigma_dxx.is_some()
    }

    /// `∂b_i/∂x_k` as `[i][k]`, symbolic or finite-difference.
    pub fn drift_jacobian(&self, t: f64, x: &[f64]) -> Vec<Vec<f64>> {
        if let Some(cb) = &self.drift_dx {
            return cb(t, x);
        }
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| fd::ddx(|t, x| (self.drift)(t, x)[i], t, x, k))
                    .collect()
            })
            .collect()
    }

    /// `∂b/∂t`, symbolic or finite-difference.
    pub fn drift_time_deriv(&self, t: f64, x: &[f64]) -> Vec<f64> {
        if let Some(cb) = &self.drift_dt {
            return cb(t, x);
        }
        (0..self.dim)
            .map(|i| fd::ddt(|t, x| (self.drift)(t, x)[i], t, x))
            .collect()
    }

    /// `∂²b_i/∂x_k ∂x_l` as `[i][k][l]`, symbolic or finite-difference.
    pub fn drift_hessian(&self, t: f64, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        if let Some(cb) = &self.drift_dxx {
            return cb(t, x);
        }
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| {
                        (0..d)
                            .map(|l| fd::d2dx(|t, x| (self.drift)(t, x)[i], t, x, k, l))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `∂σ/∂t` as `[i][j]`, symbolic or finite-difference.
    pub fn sigma_time_deriv(&self, t: f64, x: &[f64]) -> Vec<Vec<f64>> {
        if let Some(cb) = &self.sigma_dt {
            return cb(t, x);
        }
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| fd::ddt(|t, x| (self.diffusion)(t, x)[i][j], t, x))
                    .collect()
            })
            .collect()
    }

    /// `∂σ_{ij}/∂x_k` as `[i][j][k]`, symbolic or finite-difference.
    pub fn sigma_jacobian(&self, t: f64, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        if let Some(cb) = &self.sigma_dx {
            return cb(t, x);
        }
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|k| fd::ddx(|t, x| (self.diffusion)(t, x)[i][j], t, x, k))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `∂²σ_{ij}/∂x_k ∂x_l` as `[i][j][k][l]`, symbolic or finite-difference.
    pub fn sigma_hessian(&self, t: f64, x: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
        if let Some(cb) = &self.sigma_dxx {
            return cb(t, x);
        }
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|k| {
                                (0..d)
                                    .map(|l| {
                                        fd::d2dx(|t, x| (self.diffusion)(t, x)[i][j], t, x, k, l)
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Smallest eigenvalue of `σσᵀ` at `(t, x)`. Solver runs that assume
    /// uniform ellipticity record the minimum seen over all sampled points.
    pub fn min_diffusion_eigenvalue(&self, t: f64, x: &[f64]) -> f64 {
        let s = (self.diffusion)(t, x);
        let d = self.dim;
        let mut a = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += s[i][k] * s[j][k];
                }
                a[i][j] = acc;
            }
        }
        sym_min_eig(&a)
    }
}

/// Smallest eigenvalue of a symmetric matrix, closed form for d ≤ 2 and
/// Jacobi sweeps for the small dimensions beyond.
fn sym_min_eig(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        0 => 0.0,
        1 => a[0][0],
        2 => {
            let tr = a[0][0] + a[1][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            tr / 2.0 - disc
        }
        d => {
            // Cyclic Jacobi; plenty for d = 3 with symmetric input.
            let mut m: Vec<Vec<f64>> = a.to_vec();
            for _ in 0..50 {
                let mut off = 0.0;
                for i in 0..d {
                    for j in (i + 1)..d {
                        off += m[i][j] * m[i][j];
                    }
                }
                if off < 1e-30 {
                    break;
                }
                for p in 0..d {
                    for q in (p + 1)..d {
                        if m[p][q].abs() < 1e-300 {
                            continue;
                        }
                        let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..d {
                            let mkp = m[k][p];
                            let mkq = m[k][q];
                            m[k][p] = c * mkp - s * mkq;
                            m[k][q] = s * mkp + c * mkq;
                        }
                        for k in 0..d {
                            let mpk = m[p][k];
                            let mqk = m[q][k];
                            m[p][k] = c * mpk - s * mqk;
                            m[q][k] = s * mpk + c * mqk;
                        }
                    }
                }
            }
            (0..d).map(|i| m[i][i]).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Known smooth solution `u(t, x)` of the PDE behind a test problem,
/// together with the derivatives needed for residual checking.
#[derive(Clone)]
pub struct AnalyticSolution {
    /// `u(t, x)`; equals `Y` along the state.
    pub u: ScalarFn,
    /// Gradient `u_x(t, x)`, length `d`.
    pub u_x: VectorFn,
    /// `∂u/∂t`.
    pub u_t: Option<ScalarFn>,
    /// Hessian `u_{x_i x_j}` as `[i][j]`.
    pub u_xx: Option<MatrixFn>,
}

impl AnalyticSolution {
    /// Exact `Y` at `(t, x)`, i.e. `u(t, x)`.
    pub fn exact_y(&self, t: f64, x: &[f64]) -> f64 {
        (self.u)(t, x)
    }

    /// Exact `Z` at `(t, x)`, i.e. the row vector `u_x(t, x) σ(t, x)`.
    pub fn exact_z(&self, prob: &FbsdeProblem, t: f64, x: &[f64]) -> Vec<f64> {
        let grad = (self.u_x)(t, x);
        let sigma = (prob.diffusion)(t, x);
        let d = prob.dim;
        (0..d)
            .map(|j| (0..d).map(|i| grad[i] * sigma[i][j]).sum())
            .collect()
    }
}

/// Exact `(Y, Z)` of a constructed test problem at `(t, x)`:
/// `Y = u(t, x)` and `Z = u_x(t, x) σ(t, x)`.
pub fn exact_yz(sol: &AnalyticSolution, prob: &FbsdeProblem, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
    (sol.exact_y(t, x), sol.exact_z(prob, t, x))
}

/// Residual of the parabolic PDE at `(t, x)`:
///
/// ```text
/// u_t + ½ Σ_{i,j} [σσᵀ]_{ij} u_{x_i x_j} + Σ_i b_i u_{x_i} + f(t, x, u, u_x σ)
/// ```
///
/// Zero (up to rounding) exactly when the problem and the claimed solution
/// satisfy the PDE, i.e. when the test problem is constructed correctly.
pub fn feynman_kac_residual(
    sol: &AnalyticSolution,
    prob: &FbsdeProblem,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let u_t = sol
        .u_t
        .as_ref()
        .ok_or(FbsdeError::MissingDerivative("u_t"))?(t, x);
    let u_xx = sol
        .u_xx
        .as_ref()
        .ok_or(FbsdeError::MissingDerivative("u_xx"))?(t, x);
    let grad = (sol.u_x)(t, x);
    let sigma = (prob.diffusion)(t, x);
    let b = (prob.drift)(t, x);
    let d = prob.dim;

    let mut second = 0.0;
    for i in 0..d {
        for j in 0..d {
            // [σσᵀ]_{ij} = Σ_k σ_{ik} σ_{jk}
            let mut a_ij = 0.0;
            for k in 0..d {
                a_ij += sigma[i][k] * sigma[j][k];
            }
            second += a_ij * u_xx[i][j];
        }
    }

    let mut first = 0.0;
    for i in 0..d {
        first += b[i] * grad[i];
    }

    let y = (sol.u)(t, x);
    let z: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| grad[i] * sigma[i][j]).sum())
        .collect();
    let f = (prob.generator)(t, x, y, &z);

    Ok(u_t + 0.5 * second + first + f)
}

/// Identity matrix field.
fn identity_matrix(d: usize) -> MatrixFn {
    Arc::new(move |_t, _x| {
        (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    })
}

/// Zero vector field.
fn zero_vector(d: usize) -> VectorFn {
    Arc::new(move |_t, _x| vec![0.0; d])
}

/// Test problem with `b = 0`, `σ = I`, `u(t, x) = sin(t + Σ x_i)` and the
/// generator back-solved from the PDE:
///
/// ```text
/// f(t, x, y, z) = (d/2)·y − (1/d)·Σ_j z_j,    φ(x) = sin(T + Σ x_i).
/// ```
///
/// For `d = 1` this is `f = y/2 − z`. The residual vanishes identically:
/// `u_t = cos`, `½ Σ u_{x_i x_j} = −(d/2)·sin`, and `f = (d/2)·sin − cos`.
/// Lipschitz constant in `y` is `d/2`.
///
/// The start point is `x₀ = 0.5` per component: a generic point. At the
/// symmetry point `x = 0` the leading error coefficient of first-order
/// schemes happens to cancel for this `u`, which would mask the intended
/// Crank-Nicolson/Euler rate contrast in studies anchored at `x₀`.
pub fn make_sin_problem(horizon: f64, dim: usize) -> (FbsdeProblem, AnalyticSolution) {
    assert!(horizon > 0.0 && dim >= 1);
    let d = dim;
    let df = d as f64;
    let t_end = horizon;

    let sum = |x: &[f64]| -> f64 { x.iter().sum() };

    let mut prob = FbsdeProblem::new(
        d,
        horizon,
        vec![0.5; d],
        zero_vector(d),
        identity_matrix(d),
        Arc::new(move |_t, _x, y: f64, z: &[f64]| {
            let zsum: f64 = z.iter().sum();
            0.5 * df * y - zsum / df
        }),
        Arc::new(move |x: &[f64]| (t_end + sum(x)).sin()),
    );
    prob.lipschitz_y = 0.5 * df;
    // Constant coefficients: all derivatives vanish.
    prob.drift_dx = Some(Arc::new(move |_t, _x| vec![vec![0.0; d]; d]));
    prob.drift_dt = Some(zero_vector(d));
    prob.drift_dxx = Some(Arc::new(move |_t, _x| vec![vec![vec![0.0; d]; d]; d]));
    prob.sigma_dt = Some(Arc::new(move |_t, _x| vec![vec![0.0; d]; d]));
    prob.sigma_dx = Some(Arc::new(move |_t, _x| vec![vec![vec![0.0; d]; d]; d]));
    prob.sigma_dxx = Some(Arc::new(move |_t, _x| {
        vec![vec![vec![vec![0.0; d]; d]; d]; d]
    }));

    let sol = AnalyticSolution {
        u: Arc::new(move |t, x: &[f64]| (t + sum(x)).sin()),
        u_x: Arc::new(move |t, x: &[f64]| vec![(t + sum(x)).cos(); d]),
        u_t: Some(Arc::new(move |t, x: &[f64]| (t + sum(x)).cos())),
        u_xx: Some(Arc::new(move |t, x: &[f64]| {
            vec![vec![-(t + sum(x)).sin(); d]; d]
        })),
    };
    (prob, sol)
}

/// One-dimensional test problem with nonconstant diffusion:
///
/// ```text
/// b = 0,  σ(t, x) = s₀·√(1 + x²),  u(t, x) = e^{−t}·atan(x),
/// f(t, x, y, z) = y + s₀·x·z/√(1 + x²),  φ(x) = e^{−T}·atan(x),
/// ```
///
/// with `s₀ = 0.4` and `x₀ = 1`. Since `σ_x ≠ 0`, the `L¹σ` and `L⁰σ`
/// correction terms of the weak order-2 one-step map are genuinely
/// exercised, unlike with any constant-diffusion problem. `σ ≥ s₀ > 0`
/// keeps the diffusion uniformly elliptic; the Lipschitz constant in `y`
/// is 1 (and `|∂f/∂z| ≤ s₀`).
pub fn make_atan_problem(horizon: f64) -> (FbsdeProblem, AnalyticSolution) {
    assert!(horizon > 0.0);
    let s0 = 0.4;
    let t_end = horizon;

    let mut prob = FbsdeProblem::new(
        1,
        horizon,
        vec![1.0],
        zero_vector(1),
        Arc::new(move |_t, x: &[f64]| vec![vec![s0 * (1.0 + x[0] * x[0]).sqrt()]]),
        Arc::new(move |_t, x: &[f64], y: f64, z: &[f64]| {
            y + s0 * x[0] * z[0] / (1.0 + x[0] * x[0]).sqrt()
        }),
        Arc::new(move |x: &[f64]| (-t_end).exp() * x[0].atan()),
    );
    prob.lipschitz_y = 1.0;
    prob.drift_dx = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.drift_dt = Some(zero_vector(1));
    prob.drift_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dt = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    // σ_x = s₀·x/√(1+x²), σ_xx = s₀/(1+x²)^{3/2}
    prob.sigma_dx = Some(Arc::new(move |_t, x: &[f64]| {
        vec![vec![vec![s0 * x[0] / (1.0 + x[0] * x[0]).sqrt()]]]
    }));
    prob.sigma_dxx = Some(Arc::new(move |_t, x: &[f64]| {
        vec![vec![vec![vec![s0 / (1.0 + x[0] * x[0]).powf(1.5)]]]]
    }));

    let sol = AnalyticSolution {
        u: Arc::new(|t, x: &[f64]| (-t).exp() * x[0].atan()),
        u_x: Arc::new(|t, x: &[f64]| vec![(-t).exp() / (1.0 + x[0] * x[0])]),
        u_t: Some(Arc::new(|t, x: &[f64]| -(-t).exp() * x[0].atan())),
        u_xx: Some(Arc::new(|t, x: &[f64]| {
            let q = 1.0 + x[0] * x[0];
            vec![vec![-(-t).exp() * 2.0 * x[0] / (q * q)]]
        })),
    };
    (prob, sol)
}

/// Geometric Brownian motion `dX = μX dt + σ₀X dW` as a forward-SDE
/// benchmark (weak-order studies of the one-step maps). The backward data
/// is a placeholder: `f ≡ 0` and `φ(x) = x`, so the closed-form moments
/// `E[X_T] = x₀e^{μT}` and `E[X_T²] = x₀²e^{(2μ+σ₀²)T}` serve as oracles.
pub fn make_gbm_problem(mu: f64, sigma0: f64, x0: f64) -> FbsdeProblem {
    let mut prob = FbsdeProblem::new(
        1,
        1.0,
        vec![x0],
        Arc::new(move |_t, x: &[f64]| vec![mu * x[0]]),
        Arc::new(move |_t, x: &[f64]| vec![vec![sigma0 * x[0]]]),
        Arc::new(|_t, _x, _y, _z| 0.0),
        Arc::new(|x: &[f64]| x[0]),
    );
    prob.drift_dx = Some(Arc::new(move |_t, _x| vec![vec![mu]]));
    prob.drift_dt = Some(zero_vector(1));
    prob.drift_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dt = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.sigma_dx = Some(Arc::new(move |_t, _x| vec![vec![vec![sigma0]]]));
    prob.sigma_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![vec![0.0]]]]));
    prob
}

/// Degenerate check problem: `φ ≡ c`, `f ≡ 0`, `b = 0`, `σ = I`. Every
/// layer of any scheme must reproduce `Y ≡ c`, `Z ≡ 0` to rounding.
pub fn make_constant_problem(horizon: f64, c: f64) -> (FbsdeProblem, AnalyticSolution) {
    let mut prob = FbsdeProblem::new(
        1,
        horizon,
        vec![0.0],
        zero_vector(1),
        identity_matrix(1),
        Arc::new(|_t, _x, _y, _z| 0.0),
        Arc::new(move |_x| c),
    );
    prob.drift_dx = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.drift_dt = Some(zero_vector(1));
    prob.drift_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dt = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.sigma_dx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![vec![0.0]]]]));

    let sol = AnalyticSolution {
        u: Arc::new(move |_t, _x| c),
        u_x: Arc::new(|_t, _x| vec![0.0]),
        u_t: Some(Arc::new(|_t, _x| 0.0)),
        u_xx: Some(Arc::new(|_t, _x| vec![vec![0.0]])),
    };
    (prob, sol)
}

/// Degenerate check problem: `φ(x) = x`, `f ≡ 0`, `b = 0`, `σ = 1`, d = 1.
/// Exact solution `Y = x`, `Z = 1` at every level; starts at `x₀ = 0.5`.
pub fn make_linear_problem(horizon: f64) -> (FbsdeProblem, AnalyticSolution) {
    let mut prob = FbsdeProblem::new(
        1,
        horizon,
        vec![0.5],
        zero_vector(1),
        identity_matrix(1),
        Arc::new(|_t, _x, _y, _z| 0.0),
        Arc::new(|x: &[f64]| x[0]),
    );
    prob.drift_dx = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.drift_dt = Some(zero_vector(1));
    prob.drift_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dt = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.sigma_dx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![vec![0.0]]]]));

    let sol = AnalyticSolution {
        u: Arc::new(|_t, x: &[f64]| x[0]),
        u_x: Arc::new(|_t, _x| vec![1.0]),
        u_t: Some(Arc::new(|_t, _x| 0.0)),
        u_xx: Some(Arc::new(|_t, _x| vec![vec![0.0]])),
    };
    (prob, sol)
}

/// Names of the registered stock problems, in registry order.
pub fn registry_names() -> &'static [&'static str] {
    &["sin1d", "atan1d", "const1d", "linear1d"]
}

/// Looks up a stock problem by registry name. All stock problems use
/// horizon `T = 1`.
pub fn lookup(name: &str) -> Option<(FbsdeProblem, AnalyticSolution)> {
    match name {
        "sin1d" => Some(make_sin_problem(1.0, 1)),
        "atan1d" => Some(make_atan_problem(1.0)),
        "const1d" => Some(make_constant_problem(1.0, 10.0)),
        "linear1d" => Some(make_linear_problem(1.0)),
        _ => None,
    }
}
