//! The meta-posterior over KL coefficients as a differentiable target:
//! log π(ξ) = −½‖ξ‖² + Σ_users c_u · log P^(f(ξ))(H_u | x_u).

use crate::kernel_basis::{eval_particle, project_gradient, Grid, KLBasis};
use crate::logdensity::{history_log_likelihoods, log_sum_exp, History, NoiseModel};

use super::mala::{Evaluated, LogTarget};

/// One user's contribution to the global dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct UserData {
    pub context_index: usize,
    pub history: History,
}

/// A history's log marginal likelihood, weighted by `coefficient`.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub context_index: usize,
    pub log_g: Vec<f64>,
    pub coefficient: f64,
}

impl Term {
    pub fn new(grid: &Grid, context_index: usize, history: &History, noise: &NoiseModel, coefficient: f64) -> Self {
        Self {
            context_index,
            log_g: history_log_likelihoods(grid, history, noise),
            coefficient,
        }
    }
}

/// log Σ_j exp(f_j + log g_j) over one context slice.
pub(crate) fn log_joint_evidence(f_slice: &[f64], log_g: &[f64]) -> f64 {
    log_sum_exp(f_slice.iter().zip(log_g).map(|(f, g)| f + g))
}

/// Prior times (weighted) marginal likelihoods of user histories.
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'a> {
    grid: &'a Grid,
    basis: &'a KLBasis,
    terms: Vec<Term>,
    /// Total coefficient per context, for the softmax normalizers.
    normalizers: Vec<(usize, f64)>,
}

impl<'a> PosteriorTarget<'a> {
    /// Target with every user's likelihood raised to the power `beta`.
    pub fn new(
        grid: &'a Grid,
        basis: &'a KLBasis,
        dataset: &[UserData],
        noise: &NoiseModel,
        beta: f64,
    ) -> Self {
        let terms = dataset
            .iter()
            .filter(|u| !u.history.is_empty())
            .map(|u| Term::new(grid, u.context_index, &u.history, noise, beta))
            .collect();
        Self::from_terms(grid, basis, terms)
    }

    pub(crate) fn from_terms(grid: &'a Grid, basis: &'a KLBasis, terms: Vec<Term>) -> Self {
        let mut totals = vec![0.0; grid.context_len()];
        for t in &terms {
            totals[t.context_index] += t.coefficient;
        }
        let normalizers = totals
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .collect();
        Self {
            grid,
            basis,
            terms,
            normalizers,
        }
    }

    /// Σ_u c_u log P(H_u | x_u) for precomputed grid values.
    pub fn log_likelihood(&self, f: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let slice = &f[self.grid.context_slice(t.context_index)];
            total += t.coefficient * log_joint_evidence(slice, &t.log_g);
        }
        for &(c, coef) in &self.normalizers {
            total -= coef * log_sum_exp(f[self.grid.context_slice(c)].iter().copied());
        }
        total
    }

    /// Gradient of [`Self::log_likelihood`] with respect to the grid values.
    fn grid_gradient(&self, f: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; f.len()];
        for t in &self.terms {
            let range = self.grid.context_slice(t.context_index);
            let slice = &f[range.clone()];
            let lse = log_joint_evidence(slice, &t.log_g);
            for ((out, fv), g) in d[range].iter_mut().zip(slice).zip(&t.log_g) {
                *out += t.coefficient * (fv + g - lse).exp();
            }
        }
        for &(c, coef) in &self.normalizers {
            let range = self.grid.context_slice(c);
            let slice = &f[range.clone()];
            let lse = log_sum_exp(slice.iter().copied());
            for (out, fv) in d[range].iter_mut().zip(slice) {
                *out -= coef * (fv - lse).exp();
            }
        }
        d
    }
}

impl LogTarget for PosteriorTarget<'_> {
    /// Log-density values of the particle over the full grid.
    type Extra = Vec<f64>;

    fn evaluate(&self, x: Vec<f64>) -> Evaluated<Vec<f64>> {
        let f = eval_particle(&x, self.basis);
        let prior = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let log_density = prior + self.log_likelihood(&f);
        let mut grad = if self.terms.is_empty() {
            vec![0.0; x.len()]
        } else {
            project_gradient(&self.grid_gradient(&f), self.basis)
        };
        for (g, v) in grad.iter_mut().zip(&x) {
            *g -= v;
        }
        Evaluated {
            x,
            log_density,
            grad,
            extra: f,
        }
    }
}

/// log π_β(ξ) (up to a constant) and its gradient for a dataset of users.
pub fn log_target_and_grad(
    xi: &[f64],
    grid: &Grid,
    basis: &KLBasis,
    dataset: &[UserData],
    noise: &NoiseModel,
    beta: f64,
) -> (f64, Vec<f64>) {
    let e = PosteriorTarget::new(grid, basis, dataset, noise, beta).evaluate(xi.to_vec());
    (e.log_density, e.grad)
}
