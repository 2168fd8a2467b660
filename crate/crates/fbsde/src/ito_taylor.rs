//! Multi-index machinery, the differential operators `L⁰`/`Lʲ`, Itô
//! coefficient functions, and the forward one-step maps.
//!
//! The operators act on smooth scalar fields `ψ(t, x)`:
//!
//! ```text
//! L⁰ψ = ∂_t ψ + Σ_k b_k ∂_{x_k} ψ + ½ Σ_{k,l} Σ_j σ_{kj} σ_{lj} ∂²_{x_k x_l} ψ,
//! Lʲψ = Σ_i σ_{ij} ∂_{x_i} ψ,   1 ≤ j ≤ d,
//! ```
//!
//! and build the Itô coefficient functions by the recursion
//! `g_α = L^{j₁} g_{−α}` (first index applied to the coefficient of the
//! shortened index). The weak order-2 one-step map advances the forward
//! SDE by
//!
//! ```text
//! φᵢ = bᵢΔ + Σ_{j₁} σ_{ij₁} I_{(j₁)} + Σ_{j₁,j₂} L^{j₁}σ_{ij₂} I_{(j₁,j₂)}
//!      + ½ Σ_{j₁} (L^{j₁}bᵢ + L⁰σ_{ij₁}) Δ·I_{(j₁)} + ½ L⁰bᵢ Δ²,
//! ```
//!
//! with `I_{(j)} = ΔW_j` and `I_{(j₁,j₂)}` the iterated Itô integrals.
//! Only the multi-indices of length ≤ 2 used by this map are implemented;
//! longer requests error out rather than silently truncating.

use crate::error::{FbsdeError, Result};
use crate::fd;
use crate::model::FbsdeProblem;

/// Multi-index over `{0, …, d}`. The empty index has length zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    /// The empty multi-index `v` with `l(v) = 0`.
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    /// Length-one index `(j)`.
    pub fn single(j: usize) -> Self {
        MultiIndex(vec![j])
    }

    /// Length-two index `(j₁, j₂)`.
    pub fn pair(j1: usize, j2: usize) -> Self {
        MultiIndex(vec![j1, j2])
    }

    /// `l(α)`, the number of components.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    /// `−α`: the index with its first component removed.
    pub fn drop_first(&self) -> Self {
        MultiIndex(self.0[1..].to_vec())
    }

    /// The set `Γ₂ = {α : l(α) ≤ 2}` for channel dimension `d`, enumerated
    /// deterministically: `v`, `(0)`, `(1)`, …, `(d)`, `(0,0)`, `(0,1)`,
    /// …, `(d,d)`.
    pub fn gamma2(d: usize) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::empty()];
        for j in 0..=d {
            out.push(MultiIndex::single(j));
        }
        for j1 in 0..=d {
            for j2 in 0..=d {
                out.push(MultiIndex::pair(j1, j2));
            }
        }
        out
    }
}

/// Brownian increments over one step together with the double Itô
/// integrals the weak order-2 map consumes.
///
/// Invariants (up to rounding in the off-diagonal case):
///
/// * `i2[j][j] = (dw[j]² − Δ)/2` exactly — the Itô diagonal identity;
/// * `i2[j₁][j₂] + i2[j₂][j₁] = dw[j₁]·dw[j₂] − δ_{j₁j₂}·Δ` — integration
///   by parts for the iterated integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    /// `ΔW`, length `d`.
    pub dw: Vec<f64>,
    /// `I_{(j₁,j₂)}` as `[j₁][j₂]`.
    pub i2: Vec<Vec<f64>>,
}

impl WienerIncrements {
    /// Builds the increments used on the quadrature path: given `ΔW`, the
    /// diagonal is the induced function `(ΔW_j² − Δ)/2` and the
    /// off-diagonal entries take their conditional mean `½·ΔW_{j₁}ΔW_{j₂}`
    /// (antisymmetric auxiliaries fixed to zero).
    pub fn from_dw(dw: &[f64], delta: f64) -> Self {
        let d = dw.len();
        let mut i2 = vec![vec![0.0; d]; d];
        for j1 in 0..d {
            for j2 in 0..d {
                if j1 == j2 {
                    i2[j1][j1] = (dw[j1] * dw[j1] - delta) / 2.0;
                } else {
                    i2[j1][j2] = 0.5 * (dw[j1] * dw[j2]);
                }
            }
        }
        WienerIncrements {
            dw: dw.to_vec(),
            i2,
        }
    }
}

/// Realizes `WienerIncrements` from standard normal draws `ξ` and the
/// antisymmetric Bernoulli auxiliaries `v` (entries `±Δ`, zero diagonal):
///
/// ```text
/// ΔW = √Δ·ξ,   I_{(j,j)} = (ΔW_j² − Δ)/2,
/// I_{(j₁,j₂)} = ½(ΔW_{j₁}ΔW_{j₂} + v_{j₁j₂})   for j₁ ≠ j₂.
/// ```
///
/// The off-diagonal form is the standard weak substitute for the iterated
/// integrals: it matches all moments the weak order-2 analysis needs
/// without simulating Lévy areas.
pub fn increments_from_gaussian(
    xi: &[f64],
    v: &[Vec<f64>],
    delta: f64,
) -> Result<WienerIncrements> {
    let d = xi.len();
    if v.len() != d || v.iter().any(|row| row.len() != d) {
        return Err(FbsdeError::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    let sqrt_delta = delta.sqrt();
    let dw: Vec<f64> = xi.iter().map(|z| sqrt_delta * z).collect();
    let mut i2 = vec![vec![0.0; d]; d];
    for j1 in 0..d {
        for j2 in 0..d {
            if j1 == j2 {
                i2[j1][j1] = (dw[j1] * dw[j1] - delta) / 2.0;
            } else {
                i2[j1][j2] = 0.5 * (dw[j1] * dw[j2] + v[j1][j2]);
            }
        }
    }
    Ok(WienerIncrements { dw, i2 })
}

/// A scalar field `ψ(t, x)` with the derivatives the operators `L⁰`/`Lʲ`
/// consume. Derivative lookups may fail when the field cannot supply them.
pub trait SmoothField {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn dt(&self, t: f64, x: &[f64]) -> Result<f64>;
    fn grad(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
    fn hess(&self, t: f64, x: &[f64]) -> Result<Vec<Vec<f64>>>;
}

type Sf = Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type Vf = Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
type Mf = Box<dyn Fn(f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// [`SmoothField`] backed by closures. Derivatives are either supplied
/// symbolically, substituted by central finite differences
/// ([`ClosureField::with_finite_differences`]), or reported missing.
pub struct ClosureField {
    value: Sf,
    dt: Option<Sf>,
    grad: Option<Vf>,
    hess: Option<Mf>,
    fd_fallback: bool,
}

impl ClosureField {
    /// Field whose derivative lookups fail unless set explicitly.
    pub fn new(value: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ClosureField {
            value: Box::new(value),
            dt: None,
            grad: None,
            hess: None,
            fd_fallback: false,
        }
    }

    /// Field whose missing derivatives fall back to central finite
    /// differences of the value callback.
    pub fn with_finite_differences(
        value: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ClosureField {
            value: Box::new(value),
            dt: None,
            grad: None,
            hess: None,
            fd_fallback: true,
        }
    }

    pub fn dt(mut self, f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.dt = Some(Box::new(f));
        self
    }

    pub fn grad(mut self, f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(f));
        self
    }

    pub fn hess(
        mut self,
        f: impl Fn(f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Box::new(f));
        self
    }
}

impl SmoothField for ClosureField {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    fn dt(&self, t: f64, x: &[f64]) -> Result<f64> {
        if let Some(f) = &self.dt {
            return Ok(f(t, x));
        }
        if self.fd_fallback {
            return Ok(fd::ddt(&self.value, t, x));
        }
        Err(FbsdeError::MissingDerivative("psi_t"))
    }

    fn grad(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(f) = &self.grad {
            return Ok(f(t, x));
        }
        if self.fd_fallback {
            return Ok((0..x.len()).map(|k| fd::ddx(&self.value, t, x, k)).collect());
        }
        Err(FbsdeError::MissingDerivative("psi_x"))
    }

    fn hess(&self, t: f64, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if let Some(f) = &self.hess {
            return Ok(f(t, x));
        }
        if self.fd_fallback {
            let d = x.len();
            return Ok((0..d)
                .map(|k| (0..d).map(|l| fd::d2dx(&self.value, t, x, k, l)).collect())
                .collect());
        }
        Err(FbsdeError::MissingDerivative("psi_xx"))
    }
}

/// A coefficient entry of the problem (`b_i` or `σ_{ij}`) viewed as a
/// smooth field; derivatives come from the problem's accessors, which fall
/// back to finite differences when no symbolic callback exists.
enum Coefficient {
    Drift(usize),
    Diffusion(usize, usize),
}

struct CoefficientField<'a> {
    prob: &'a FbsdeProblem,
    which: Coefficient,
}

impl SmoothField for CoefficientField<'_> {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self.which {
            Coefficient::Drift(i) => (self.prob.drift)(t, x)[i],
            Coefficient::Diffusion(i, j) => (self.prob.diffusion)(t, x)[i][j],
        }
    }

    fn dt(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(match self.which {
            Coefficient::Drift(i) => self.prob.drift_time_deriv(t, x)[i],
            Coefficient::Diffusion(i, j) => self.prob.sigma_time_deriv(t, x)[i][j],
        })
    }

    fn grad(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self.which {
            Coefficient::Drift(i) => self.prob.drift_jacobian(t, x)[i].clone(),
            Coefficient::Diffusion(i, j) => self.prob.sigma_jacobian(t, x)[i][j].clone(),
        })
    }

    fn hess(&self, t: f64, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(match self.which {
            Coefficient::Drift(i) => self.prob.drift_hessian(t, x)[i].clone(),
            Coefficient::Diffusion(i, j) => self.prob.sigma_hessian(t, x)[i][j].clone(),
        })
    }
}

/// Applies the generator operator
/// `L⁰ψ = ∂_t ψ + Σ_k b_k ∂_{x_k} ψ + ½ Σ_{k,l} [σσᵀ]_{kl} ∂²_{x_k x_l} ψ`.
pub fn apply_l0(psi: &dyn SmoothField, t: f64, x: &[f64], prob: &FbsdeProblem) -> Result<f64> {
    let d = prob.dim;
    let b = (prob.drift)(t, x);
    let sigma = (prob.diffusion)(t, x);
    let grad = psi.grad(t, x)?;
    let hess = psi.hess(t, x)?;
    let mut out = psi.dt(t, x)?;
    for k in 0..d {
        out += b[k] * grad[k];
    }
    for k in 0..d {
        for l in 0..d {
            let mut a_kl = 0.0;
            for j in 0..d {
                a_kl += sigma[k][j] * sigma[l][j];
            }
            out += 0.5 * a_kl * hess[k][l];
        }
    }
    Ok(out)
}

/// Applies the diffusion directional derivative
/// `Lʲψ = Σ_i σ_{ij} ∂_{x_i} ψ` for channel `j ∈ 1..=d`.
pub fn apply_lj(
    psi: &dyn SmoothField,
    j: usize,
    t: f64,
    x: &[f64],
    prob: &FbsdeProblem,
) -> Result<f64> {
    let d = prob.dim;
    if j < 1 || j > d {
        return Err(FbsdeError::ChannelOutOfRange { channel: j, dim: d });
    }
    let sigma = (prob.diffusion)(t, x);
    let grad = psi.grad(t, x)?;
    let mut out = 0.0;
    for i in 0..d {
        out += sigma[i][j - 1] * grad[i];
    }
    Ok(out)
}

/// Itô coefficient function `g_α(t, x)` as a vector of length `d`:
///
/// * `g_v = x`, `g_{(0)} = b`, `g_{(j)} = σ·e_j` (the `j`-th column);
/// * for `l(α) = 2`, `g_α = L^{j₁} g_{−α}` applied componentwise.
///
/// Lengths above 2 are not used by the weak order-2 map and error out.
pub fn ito_coefficient(
    alpha: &MultiIndex,
    t: f64,
    x: &[f64],
    prob: &FbsdeProblem,
) -> Result<Vec<f64>> {
    let d = prob.dim;
    match alpha.components() {
        [] => Ok(x.to_vec()),
        [0] => Ok((prob.drift)(t, x)),
        [j] => {
            if *j > d {
                return Err(FbsdeError::ChannelOutOfRange { channel: *j, dim: d });
            }
            let sigma = (prob.diffusion)(t, x);
            Ok((0..d).map(|i| sigma[i][j - 1]).collect())
        }
        [j1, j2] => {
            if *j1 > d || *j2 > d {
                return Err(FbsdeError::ChannelOutOfRange {
                    channel: (*j1).max(*j2),
                    dim: d,
                });
            }
            let mut out = Vec::with_capacity(d);
            for i in 0..d {
                let which = if *j2 == 0 {
                    Coefficient::Drift(i)
                } else {
                    Coefficient::Diffusion(i, j2 - 1)
                };
                let field = CoefficientField { prob, which };
                let v = if *j1 == 0 {
                    apply_l0(&field, t, x, prob)?
                } else {
                    apply_lj(&field, *j1, t, x, prob)?
                };
                out.push(v);
            }
            Ok(out)
        }
        longer => Err(FbsdeError::UnsupportedMultiIndex(longer.len())),
    }
}

/// Weak order-2 one-step map frozen at `(t, x)`: all Itô coefficients are
/// evaluated once so the map can be applied to many increments (e.g. every
/// quadrature node) cheaply.
pub struct Weak2Map {
    dim: usize,
    delta: f64,
    x: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    /// `L^{j₁}σ_{i,j₂}` as `[j1][i][j2]` (0-based channels).
    l_sigma: Vec<Vec<Vec<f64>>>,
    /// `L^{j₁}b_i` as `[j1][i]`.
    l_b: Vec<Vec<f64>>,
    /// `L⁰σ_{ij}` as `[i][j]`.
    l0_sigma: Vec<Vec<f64>>,
    /// `L⁰b_i`.
    l0_b: Vec<f64>,
}

impl Weak2Map {
    pub fn new(prob: &FbsdeProblem, t: f64, x: &[f64], delta: f64) -> Self {
        let d = prob.dim;
        let b = (prob.drift)(t, x);
        let sigma = (prob.diffusion)(t, x);
        let b_t = prob.drift_time_deriv(t, x);
        let b_x = prob.drift_jacobian(t, x);
        let b_xx = prob.drift_hessian(t, x);
        let s_t = prob.sigma_time_deriv(t, x);
        let s_x = prob.sigma_jacobian(t, x);
        let s_xx = prob.sigma_hessian(t, x);

        // [σσᵀ]_{kl}
        let mut a = vec![vec![0.0; d]; d];
        for k in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += sigma[k][j] * sigma[l][j];
                }
                a[k][l] = acc;
            }
        }

        let l_sigma = (0..d)
            .map(|j1| {
                (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j2| (0..d).map(|k| sigma[k][j1] * s_x[i][j2][k]).sum())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let l_b = (0..d)
            .map(|j1| {
                (0..d)
                    .map(|i| (0..d).map(|k| sigma[k][j1] * b_x[i][k]).sum())
                    .collect()
            })
            .collect();

        let l0_sigma = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut v = s_t[i][j];
                        for k in 0..d {
                            v += b[k] * s_x[i][j][k];
                        }
                        for k in 0..d {
                            for l in 0..d {
                                v += 0.5 * a[k][l] * s_xx[i][j][k][l];
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();

        let l0_b = (0..d)
            .map(|i| {
                let mut v = b_t[i];
                for k in 0..d {
                    v += b[k] * b_x[i][k];
                }
                for k in 0..d {
                    for l in 0..d {
                        v += 0.5 * a[k][l] * b_xx[i][k][l];
                    }
                }
                v
            })
            .collect();

        Weak2Map {
            dim: d,
            delta,
            x: x.to_vec(),
            b,
            sigma,
            l_sigma,
            l_b,
            l0_sigma,
            l0_b,
        }
    }

    /// The increment `φ` for given Wiener increments.
    pub fn phi(&self, w: &WienerIncrements) -> Vec<f64> {
        let d = self.dim;
        let delta = self.delta;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut v = self.b[i] * delta + 0.5 * self.l0_b[i] * delta * delta;
            for j1 in 0..d {
                v += self.sigma[i][j1] * w.dw[j1];
                v += 0.5 * (self.l_b[j1][i] + self.l0_sigma[i][j1]) * delta * w.dw[j1];
                for j2 in 0..d {
                    v += self.l_sigma[j1][i][j2] * w.i2[j1][j2];
                }
            }
            out[i] = v;
        }
        out
    }

    /// `Xⁿ + φ` for increments realized from `ΔW` on the quadrature path.
    pub fn apply_dw(&self, dw: &[f64]) -> Vec<f64> {
        let w = WienerIncrements::from_dw(dw, self.delta);
        let phi = self.phi(&w);
        self.x.iter().zip(&phi).map(|(a, b)| a + b).collect()
    }
}

/// Weak order-2 Itô-Taylor increment `φⁿ` at `(t_n, x)`: the step
/// satisfies `Xⁿ⁺¹ = Xⁿ + φⁿ`.
pub fn weak2_increment(
    t_n: f64,
    x: &[f64],
    w: &WienerIncrements,
    delta: f64,
    prob: &FbsdeProblem,
) -> Vec<f64> {
    Weak2Map::new(prob, t_n, x, delta).phi(w)
}

/// Euler increment `b·Δ + σ·ΔW`. The backward schemes use it with step
/// `Δ²` at the terminal micro-step.
pub fn euler_increment(
    t_n: f64,
    x: &[f64],
    dw: &[f64],
    delta: f64,
    prob: &FbsdeProblem,
) -> Vec<f64> {
    let d = prob.dim;
    let b = (prob.drift)(t_n, x);
    let sigma = (prob.diffusion)(t_n, x);
    (0..d)
        .map(|i| {
            let mut v = b[i] * delta;
            for j in 0..d {
                v += sigma[i][j] * dw[j];
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gbm_problem, make_sin_problem};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn gamma2_enumeration_is_deterministic() {
        let set = MultiIndex::gamma2(2);
        let expect: Vec<Vec<usize>> = vec![
            vec![],
            vec![0],
            vec![1],
            vec![2],
            vec![0, 0],
            vec![0, 1],
            vec![0, 2],
            vec![1, 0],
            vec![1, 1],
            vec![1, 2],
            vec![2, 0],
            vec![2, 1],
            vec![2, 2],
        ];
        let got: Vec<Vec<usize>> = set.iter().map(|a| a.components().to_vec()).collect();
        assert_eq!(got, expect);
        assert_eq!(MultiIndex::empty().len(), 0);
    }

    #[test]
    fn l0_of_x_squared_with_unit_diffusion() {
        let (prob, _) = make_sin_problem(1.0, 1);
        let psi = ClosureField::new(|_t, x| x[0] * x[0])
            .dt(|_, _| 0.0)
            .grad(|_t, x| vec![2.0 * x[0]])
            .hess(|_, _| vec![vec![2.0]]);
        let v = apply_l0(&psi, 0.3, &[1.7], &prob).unwrap();
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn l0_of_time_coordinate() {
        let (prob, _) = make_sin_problem(1.0, 1);
        let psi = ClosureField::new(|t, _x| t)
            .dt(|_, _| 1.0)
            .grad(|_, _| vec![0.0])
            .hess(|_, _| vec![vec![0.0]]);
        let v = apply_l0(&psi, 0.2, &[0.4], &prob).unwrap();
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn l0_of_identity_on_gbm_is_drift() {
        // L⁰x = b = μx: at x = 2, μ = 0.05 this is 0.1.
        let prob = make_gbm_problem(0.05, 0.2, 2.0);
        let psi = ClosureField::new(|_t, x| x[0])
            .dt(|_, _| 0.0)
            .grad(|_, _| vec![1.0])
            .hess(|_, _| vec![vec![0.0]]);
        let v = apply_l0(&psi, 0.0, &[2.0], &prob).unwrap();
        assert_abs_diff_eq!(v, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn l0_matches_finite_difference_fallback() {
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let symbolic = ClosureField::new(|t, x| (t + x[0]).exp())
            .dt(|t, x| (t + x[0]).exp())
            .grad(|t, x| vec![(t + x[0]).exp()])
            .hess(|t, x| vec![vec![(t + x[0]).exp()]]);
        let fd_field = ClosureField::with_finite_differences(|t, x| (t + x[0]).exp());
        let a = apply_l0(&symbolic, 0.3, &[0.8], &prob).unwrap();
        let b = apply_l0(&fd_field, 0.3, &[0.8], &prob).unwrap();
        assert!((a - b).abs() / a.abs() < 1e-6, "symbolic {a} vs fd {b}");
    }

    #[test]
    fn lj_of_identity_is_sigma() {
        let prob = make_gbm_problem(0.05, 0.2, 2.0);
        let psi = ClosureField::new(|_t, x| x[0]).grad(|_, _| vec![1.0]);
        let v = apply_lj(&psi, 1, 0.0, &[2.0], &prob).unwrap();
        assert_abs_diff_eq!(v, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn lj_of_sigma_is_sigma_times_slope() {
        // L¹σ = σ·∂_xσ = σ₀x·σ₀.
        let s0 = 0.2;
        let prob = make_gbm_problem(0.05, s0, 2.0);
        let psi = ClosureField::new(move |_t, x| s0 * x[0]).grad(move |_, _| vec![s0]);
        let v = apply_lj(&psi, 1, 0.0, &[2.0], &prob).unwrap();
        assert_abs_diff_eq!(v, s0 * s0 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn lj_of_constant_is_zero() {
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let psi = ClosureField::new(|_, _| 42.0).grad(|_, _| vec![0.0]);
        let v = apply_lj(&psi, 1, 0.5, &[3.0], &prob).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn lj_rejects_channel_out_of_range() {
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let psi = ClosureField::new(|_, _| 0.0).grad(|_, _| vec![0.0]);
        assert!(matches!(
            apply_lj(&psi, 0, 0.0, &[1.0], &prob),
            Err(FbsdeError::ChannelOutOfRange { channel: 0, .. })
        ));
        assert!(matches!(
            apply_lj(&psi, 2, 0.0, &[1.0], &prob),
            Err(FbsdeError::ChannelOutOfRange { channel: 2, .. })
        ));
    }

    #[test]
    fn missing_derivative_reported() {
        let (prob, _) = make_sin_problem(1.0, 1);
        let psi = ClosureField::new(|_t, x| x[0]);
        assert!(matches!(
            apply_l0(&psi, 0.0, &[0.0], &prob),
            Err(FbsdeError::MissingDerivative(_))
        ));
    }

    #[test]
    fn ito_coefficient_base_cases() {
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let x = [3.0];
        let v = ito_coefficient(&MultiIndex::empty(), 0.0, &x, &prob).unwrap();
        assert_eq!(v, vec![3.0]);
        let v = ito_coefficient(&MultiIndex::single(0), 0.0, &x, &prob).unwrap();
        assert_abs_diff_eq!(v[0], 0.15, epsilon = 1e-15); // b = μx
        let v = ito_coefficient(&MultiIndex::single(1), 0.0, &x, &prob).unwrap();
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15); // σ = σ₀x
    }

    #[test]
    fn ito_coefficient_recursion_on_gbm() {
        // g_{(1,1)} = L¹σ = σ₀²x.
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let v = ito_coefficient(&MultiIndex::pair(1, 1), 0.0, &[3.0], &prob).unwrap();
        assert_abs_diff_eq!(v[0], 0.2 * 0.2 * 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ito_coefficient_fd_fallback_matches_symbolic_on_stock_problems() {
        // Strip the symbolic derivative callbacks: the finite-difference
        // accessors must agree to 1e−6 relative on every Γ₂ index.
        for name in ["sin1d", "atan1d"] {
            let (prob, _) = crate::model::lookup(name).unwrap();
            let mut fd_prob = prob.clone();
            fd_prob.drift_dx = None;
            fd_prob.drift_dt = None;
            fd_prob.drift_dxx = None;
            fd_prob.sigma_dt = None;
            fd_prob.sigma_dx = None;
            fd_prob.sigma_dxx = None;
            for alpha in MultiIndex::gamma2(prob.dim) {
                for &x in &[-1.5f64, 0.25, 2.0] {
                    let exact = ito_coefficient(&alpha, 0.4, &[x], &prob).unwrap();
                    let fdv = ito_coefficient(&alpha, 0.4, &[x], &fd_prob).unwrap();
                    for (a, b) in exact.iter().zip(&fdv) {
                        let scale = a.abs().max(1.0);
                        assert!(
                            (a - b).abs() / scale < 1e-6,
                            "{name} {:?} at x={x}: {a} vs {b}",
                            alpha.components()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ito_coefficient_rejects_long_indices() {
        let prob = make_gbm_problem(0.05, 0.2, 1.0);
        let alpha = MultiIndex(vec![1, 1, 1]);
        assert!(matches!(
            ito_coefficient(&alpha, 0.0, &[1.0], &prob),
            Err(FbsdeError::UnsupportedMultiIndex(3))
        ));
    }

    #[test]
    fn recursion_applies_first_index_as_operator() {
        // Non-commuting example pinning g_α = L^{j₁} g_{−α}: with
        // σ = [[1, x₁], [0, 1]], the first component of g_{(1,2)} is
        // L¹σ_{·,2} = 1 while g_{(2,1)} gives L²σ_{·,1} = 0.
        let mut prob = make_gbm_problem(0.0, 1.0, 1.0);
        prob.dim = 2;
        prob.x0 = vec![1.0, 1.0];
        prob.drift = Arc::new(|_t, _x| vec![0.0, 0.0]);
        prob.diffusion = Arc::new(|_t, x: &[f64]| vec![vec![1.0, x[0]], vec![0.0, 1.0]]);
        prob.drift_dx = None;
        prob.drift_dt = None;
        prob.drift_dxx = None;
        prob.sigma_dt = None;
        prob.sigma_dx = None;
        prob.sigma_dxx = None;

        let x = [0.7, -0.4];
        let g12 = ito_coefficient(&MultiIndex::pair(1, 2), 0.0, &x, &prob).unwrap();
        let g21 = ito_coefficient(&MultiIndex::pair(2, 1), 0.0, &x, &prob).unwrap();
        assert_abs_diff_eq!(g12[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g21[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn weak2_increment_vanishes_without_coefficients() {
        let mut prob = make_gbm_problem(0.0, 0.0, 1.0);
        prob.diffusion = Arc::new(|_t, _x| vec![vec![0.0]]);
        let w = WienerIncrements::from_dw(&[0.3], 0.01);
        let phi = weak2_increment(0.0, &[1.0], &w, 0.01, &prob);
        assert_eq!(phi, vec![0.0]);
    }

    #[test]
    fn weak2_increment_reduces_to_dw_for_constant_unit_diffusion() {
        let (prob, _) = make_sin_problem(1.0, 1);
        let w = WienerIncrements::from_dw(&[0.17], 0.04);
        let phi = weak2_increment(0.5, &[0.2], &w, 0.04, &prob);
        assert_abs_diff_eq!(phi[0], 0.17, epsilon = 1e-15);
    }

    #[test]
    fn weak2_increment_matches_symbolic_expansion_on_gbm() {
        // All five φ terms expanded by hand for b = μx, σ = σ₀x:
        // φ = μxΔ + σ₀x·dW + σ₀²x·(dW²−Δ)/2 + ½(μσ₀x+μσ₀x)Δ·dW + ½μ²xΔ².
        let (mu, s0, x) = (0.05, 0.2, 1.0);
        let prob = make_gbm_problem(mu, s0, x);
        let (delta, dw) = (0.01, 0.05);
        let w = WienerIncrements::from_dw(&[dw], delta);
        let phi = weak2_increment(0.0, &[x], &w, delta, &prob);
        let expect = mu * x * delta
            + s0 * x * dw
            + s0 * s0 * x * (dw * dw - delta) / 2.0
            + 0.5 * (mu * s0 * x + mu * s0 * x) * delta * dw
            + 0.5 * mu * mu * x * delta * delta;
        assert_abs_diff_eq!(phi[0], expect, epsilon = 1e-15);
    }

    #[test]
    fn euler_increment_cases() {
        let (prob, _) = make_sin_problem(1.0, 1);
        let phi = euler_increment(0.0, &[0.0], &[0.3], 0.01, &prob);
        assert_abs_diff_eq!(phi[0], 0.3);

        let mut drifted = make_gbm_problem(0.0, 0.0, 1.0);
        drifted.drift = Arc::new(|_t, _x| vec![1.0]);
        drifted.diffusion = Arc::new(|_t, _x| vec![vec![0.0]]);
        let phi = euler_increment(0.0, &[5.0], &[0.9], 0.01, &drifted);
        assert_abs_diff_eq!(phi[0], 0.01, epsilon = 1e-15);

        let gbm = make_gbm_problem(0.05, 0.2, 2.0);
        let phi = euler_increment(0.0, &[2.0], &[0.1], 0.01, &gbm);
        assert_abs_diff_eq!(phi[0], 0.041, epsilon = 1e-15);
    }

    #[test]
    fn increments_from_gaussian_1d_cases() {
        let w = increments_from_gaussian(&[0.0], &[vec![0.0]], 1.0).unwrap();
        assert_eq!(w.dw, vec![0.0]);
        assert_eq!(w.i2[0][0], -0.5);

        let w = increments_from_gaussian(&[2.0], &[vec![0.0]], 0.25).unwrap();
        assert_abs_diff_eq!(w.dw[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.i2[0][0], 0.375, epsilon = 1e-15);
    }

    #[test]
    fn increments_dimension_mismatch() {
        let err = increments_from_gaussian(&[0.0, 1.0], &[vec![0.0]], 1.0).unwrap_err();
        assert!(matches!(err, FbsdeError::DimensionMismatch { .. }));
    }

    #[test]
    fn diagonal_identity_is_bit_exact() {
        let w = increments_from_gaussian(&[1.37], &[vec![0.0]], 0.3).unwrap();
        let dw = w.dw[0];
        assert_eq!(w.i2[0][0], (dw * dw - 0.3) / 2.0);
    }

    #[test]
    fn quadrature_path_consistency_is_exact() {
        // With auxiliaries at their conditional mean, both off-diagonal
        // entries are the same float, so the pair sum is exactly dW₁·dW₂.
        let w = WienerIncrements::from_dw(&[0.8, -1.1], 0.05);
        assert_eq!(w.i2[0][1] + w.i2[1][0], w.dw[0] * w.dw[1]);
    }

    proptest! {
        #[test]
        fn consistency_identity_over_random_draws(
            z1 in -4.0f64..4.0,
            z2 in -4.0f64..4.0,
            sign in proptest::bool::ANY,
            delta in 1e-4f64..1.0,
        ) {
            let v01 = if sign { delta } else { -delta };
            let v = vec![vec![0.0, v01], vec![-v01, 0.0]];
            let w = increments_from_gaussian(&[z1, z2], &v, delta).unwrap();
            // Diagonal: I2[j][j]·2 + Δ = dW_j².
            for j in 0..2 {
                prop_assert_eq!(w.i2[j][j], (w.dw[j] * w.dw[j] - delta) / 2.0);
            }
            // Off-diagonal consistency up to rounding of the two halves.
            let lhs = w.i2[0][1] + w.i2[1][0];
            let rhs = w.dw[0] * w.dw[1];
            let tol = 4.0 * f64::EPSILON * (rhs.abs() + delta);
            prop_assert!((lhs - rhs).abs() <= tol, "lhs {} rhs {}", lhs, rhs);
        }
    }
}
