//! Physical refinement of a reconstructed process matrix.
//!
//! chi~ = T^dag T with T lower triangular and a real diagonal, so chi~ is
//! positive semidefinite for every parameter vector. The objective is
//!
//!   f(T) = ||T^dag T - chi||_F^2 + sum_k w_k |Tr(chi~ H_k) - c_k|^2
//!
//! where Tr(chi~ H_k) is the trace of the output for input projector k and
//! c_k is the measured output trace (one for normalized data).

use super::{check_dim, BetaMatrix, ChiMatrix, ProbabilityTensor};
use crate::error::{Error, Result};
use crate::mub::MubSet;
use crate::numerics::{c64, hermitian_eig, hermitian_part, ComplexMatrix, ComplexVector};

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementConfig {
    /// Penalty weight per input projector; a single entry is broadcast.
    pub weights: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers f by less than `tolerance * (1 + f)`.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            weights: vec![10.0],
            max_iterations: 5000,
            tolerance: 1e-13,
            initial_step: 1e-2,
        }
    }
}

impl RefinementConfig {
    pub fn with_weight(weight: f64) -> Self {
        Self {
            weights: vec![weight],
            ..Self::default()
        }
    }

    fn weights_for(&self, n: usize) -> Result<Vec<f64>> {
        let w = match self.weights.len() {
            1 => vec![self.weights[0]; n],
            len if len == n => self.weights.clone(),
            len => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                })
            }
        };
        if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidParameter {
                name: "weight".into(),
                value: *bad,
                range: "[0, inf)",
            });
        }
        Ok(w)
    }
}

/// f and its gradient over the n^2 real parameters of T.
///
/// Parameters are laid out row by row over the lower triangle: the diagonal
/// entry contributes one real number, every strictly lower entry two (re, im).
#[derive(Clone, Debug)]
pub struct RefineObjective {
    n: usize,
    target: ComplexMatrix,
    constraints: Vec<ComplexMatrix>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub deviation: f64,
    pub penalty: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.deviation + self.penalty
    }
}

impl RefineObjective {
    pub fn new(
        chi: &ChiMatrix,
        p: &ProbabilityTensor,
        set: &MubSet,
        config: &RefinementConfig,
    ) -> Result<Self> {
        check_dim(set.dim(), chi.dim)?;
        check_dim(set.dim(), p.dim())?;
        let n = set.num_projectors();
        let d = set.dim();
        let g = set.gram();
        // Tr(E(P_l)) = sum_ab chi_ab <b|a><a|l><l|b> = Tr(chi H_l).
        let constraints = (0..n)
            .map(|l| ComplexMatrix::from_fn(n, n, |a, b| g[(a, b)] * g[(b, l)] * g[(l, a)]))
            .collect();
        let targets = (0..n)
            .map(|l| p.row(l).iter().sum::<f64>() / (d + 1) as f64)
            .collect();
        Ok(Self {
            n,
            target: chi.matrix.clone(),
            constraints,
            targets,
            weights: config.weights_for(n)?,
        })
    }

    pub fn num_params(&self) -> usize {
        self.n * self.n
    }

    pub fn lower_triangular(&self, params: &[f64]) -> ComplexMatrix {
        let mut t = ComplexMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in 0..i {
                t[(i, j)] = c64(params[k], params[k + 1]);
                k += 2;
            }
            t[(i, i)] = c64(params[k], 0.0);
            k += 1;
        }
        t
    }

    fn params_from_triangular(&self, t: &ComplexMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for i in 0..self.n {
            for j in 0..i {
                out.push(t[(i, j)].re);
                out.push(t[(i, j)].im);
            }
            out.push(t[(i, i)].re);
        }
        out
    }

    pub fn chi_from_params(&self, params: &[f64]) -> ComplexMatrix {
        let t = self.lower_triangular(params);
        t.adjoint() * t
    }

    /// A starting point whose T^dag T is the positive part of `chi`.
    ///
    /// With chi_+ = M^dag M, M = sqrt(Lambda) W^dag, an RQ-type factorization
    /// of M (QR of the row-and-column-reversed matrix) yields M = Q T with T
    /// lower triangular; row phases then make the diagonal real.
    pub fn initial_params(&self, chi: &ComplexMatrix) -> Result<Vec<f64>> {
        let n = self.n;
        let eig = hermitian_eig(&hermitian_part(chi))?;
        let m = ComplexMatrix::from_fn(n, n, |i, j| {
            c64(eig.values[i].max(0.0).sqrt(), 0.0) * eig.vectors[(j, i)].conj()
        });
        let reversed = ComplexMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
        let r = reversed.qr().r();
        let mut t = ComplexMatrix::from_fn(n, n, |i, j| {
            if n - 1 - i < r.nrows() {
                r[(n - 1 - i, n - 1 - j)]
            } else {
                c64(0.0, 0.0)
            }
        });
        for i in 0..n {
            let d = t[(i, i)];
            if d.norm() > 0.0 {
                let phase = d.conj() / d.norm();
                for j in 0..n {
                    t[(i, j)] *= phase;
                }
            }
            t[(i, i)] = c64(t[(i, i)].re, 0.0);
        }
        Ok(self.params_from_triangular(&t))
    }

    fn residuals(&self, chi: &ComplexMatrix) -> Vec<f64> {
        self.constraints
            .iter()
            .zip(&self.targets)
            .map(|(h, c)| h.component_mul(&chi.transpose()).sum().re - c)
            .collect()
    }

    pub fn terms(&self, params: &[f64]) -> ObjectiveTerms {
        let chi = self.chi_from_params(params);
        let deviation = (&chi - &self.target).norm_squared();
        let penalty = self
            .residuals(&chi)
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| w * g * g)
            .sum();
        ObjectiveTerms { deviation, penalty }
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.terms(params).total()
    }

    /// The complex gradient df/dRe T + i df/dIm T is 4 T (E + sum_k w_k g_k H_k)
    /// with E = T^dag T - chi and g_k the trace residuals.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let t = self.lower_triangular(params);
        let chi = t.adjoint() * &t;
        let mut e = &chi - &self.target;
        let deviation = e.norm_squared();
        let residuals = self.residuals(&chi);
        let mut penalty = 0.0;
        for ((h, g), w) in self.constraints.iter().zip(&residuals).zip(&self.weights) {
            penalty += w * g * g;
            e += h * c64(w * g, 0.0);
        }
        let full = t * e * c64(4.0, 0.0);
        let mut grad = Vec::with_capacity(self.num_params());
        for i in 0..self.n {
            for j in 0..i {
                grad.push(full[(i, j)].re);
                grad.push(full[(i, j)].im);
            }
            grad.push(full[(i, i)].re);
        }
        (deviation + penalty, grad)
    }
}

#[derive(Clone, Debug)]
pub struct Refined {
    pub chi: ChiMatrix,
    pub objective: f64,
    pub deviation: f64,
    /// The weighted trace-penalty term at the returned point.
    pub tp_residual: f64,
    /// ||beta chi~ - p~||.
    pub forward_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes f by gradient descent with an adaptive step: halve on a
/// non-decreasing trial, grow after each accepted one.
pub fn refine_physical(
    chi: &ChiMatrix,
    p: &ProbabilityTensor,
    beta: &BetaMatrix,
    set: &MubSet,
    config: &RefinementConfig,
) -> Result<Refined> {
    check_dim(beta.dim(), chi.dim)?;
    let objective = RefineObjective::new(chi, p, set, config)?;
    let mut params = objective.initial_params(&chi.matrix)?;
    let (mut f, mut grad) = objective.value_and_gradient(&params);
    let mut step = config.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let trial: Vec<f64> = params
            .iter()
            .zip(&grad)
            .map(|(x, g)| x - step * g)
            .collect();
        let (f_trial, grad_trial) = objective.value_and_gradient(&trial);
        if f_trial < f {
            let gain = f - f_trial;
            params = trial;
            f = f_trial;
            grad = grad_trial;
            step *= 1.5;
            if gain <= config.tolerance * (1.0 + f) {
                converged = true;
                break;
            }
        } else {
            step *= 0.5;
            if step < 1e-18 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        log::debug!(
            "refinement stopped after {iterations} iterations without converging (f = {f:.3e})"
        );
    }
    let terms = objective.terms(&params);
    let matrix = objective.chi_from_params(&params);
    let refined = ChiMatrix::new(chi.dim, matrix, true)?;
    let n = set.num_projectors();
    let pv = ComplexVector::from_iterator(n * n, p.values().iter().map(|&x| c64(x, 0.0)));
    let forward_residual = (beta.matrix() * refined.to_vector() - pv).norm();
    Ok(Refined {
        chi: refined,
        objective: terms.total(),
        deviation: terms.deviation,
        tp_residual: terms.penalty,
        forward_residual,
        iterations,
        converged,
    })
}
