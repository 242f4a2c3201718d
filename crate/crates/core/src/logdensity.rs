//! Discrete densities on the grid: softmax normalization of log-density
//! values, conditioning on an observed context and on a user's reward
//! history, and marginal likelihoods of histories.
//!
//! Products of Gaussian densities are always accumulated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::kernel_basis::Grid;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normalized density over all L grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensity {
    pub probs: Vec<f64>,
}

/// Normalized density over the μ-subgrid at one context index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub probs: Vec<f64>,
    pub context_index: usize,
}

impl ConditionalDensity {
    pub fn uniform(len: usize, context_index: usize) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
            context_index,
        }
    }

    /// Expected arm-mean vector under this density.
    pub fn mean(&self, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; grid.arms()];
        for (j, &p) in self.probs.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(grid.mu_point(j)) {
                *o += p * m;
            }
        }
        out
    }
}

/// Ordered (arm, reward) pairs of one user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    entries: Vec<(usize, f64)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(usize, f64)>) -> Self {
        Self { entries }
    }

    pub fn push(&mut self, arm: usize, reward: f64) {
        self.entries.push((arm, reward));
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First `n` entries.
    pub fn prefix(&self, n: usize) -> History {
        History {
            entries: self.entries[..n].to_vec(),
        }
    }

    pub fn concat(&self, other: &History) -> History {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        History { entries }
    }

    pub fn validate(&self, arms: usize) -> Result<()> {
        if let Some(&(a, _)) = self.entries.iter().find(|(a, _)| *a >= arms) {
            return Err(CocoError::InvalidInput(format!(
                "history arm {a} out of range for {arms} arms"
            )));
        }
        if self.entries.iter().any(|(_, r)| !r.is_finite()) {
            return Err(CocoError::InvalidInput("history reward is not finite".into()));
        }
        Ok(())
    }
}

/// Gaussian reward noise N(0, σ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CocoError::config("noise_sigma", "must be positive"));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn log_pdf(&self, r: f64, mean: f64) -> f64 {
        let z = (r - mean) / self.sigma;
        -0.5 * (LN_2PI + z * z) - self.sigma.ln()
    }

    pub fn pdf(&self, r: f64, mean: f64) -> f64 {
        self.log_pdf(r, mean).exp()
    }
}

/// log Σ exp(x), −∞ for an empty or all −∞ input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Softmax of log-density values over the whole grid.
pub fn normalize_on_grid(f_values: &[f64]) -> Result<JointDensity> {
    if f_values.is_empty() {
        return Err(CocoError::InvalidInput("empty log-density vector".into()));
    }
    if let Some(l) = f_values.iter().position(|x| !x.is_finite()) {
        return Err(CocoError::InvalidInput(format!(
            "log-density value at grid point {l} is not finite"
        )));
    }
    Ok(JointDensity {
        probs: softmax(f_values),
    })
}

/// Restricts a joint density to the μ-subgrid at `context_index` and
/// renormalizes.
pub fn condition_on_context(
    joint: &JointDensity,
    grid: &Grid,
    context_index: usize,
) -> Result<ConditionalDensity> {
    if context_index >= grid.context_len() {
        return Err(CocoError::InvalidInput(format!(
            "context index {context_index} out of range"
        )));
    }
    let slice = &joint.probs[grid.context_slice(context_index)];
    let mass: f64 = slice.iter().sum();
    if !(mass > 0.0) {
        return Err(CocoError::DegenerateConditional { context_index });
    }
    Ok(ConditionalDensity {
        probs: slice.iter().map(|p| p / mass).collect(),
        context_index,
    })
}

/// Conditional density at one context straight from log-density values.
/// Same result as normalizing the joint and then conditioning, without the
/// detour through the full grid (so no slice can underflow to zero mass).
pub fn conditional_from_log_density(
    f_values: &[f64],
    grid: &Grid,
    context_index: usize,
) -> Result<ConditionalDensity> {
    if context_index >= grid.context_len() {
        return Err(CocoError::InvalidInput(format!(
            "context index {context_index} out of range"
        )));
    }
    let slice = &f_values[grid.context_slice(context_index)];
    if slice.iter().any(|x| !x.is_finite()) {
        return Err(CocoError::DegenerateConditional { context_index });
    }
    Ok(ConditionalDensity {
        probs: softmax(slice),
        context_index,
    })
}

/// log Π_{(a,r)∈H} N(r; μ_{j,a}, σ²) at every μ-subgrid point j.
pub fn history_log_likelihoods(grid: &Grid, history: &History, noise: &NoiseModel) -> Vec<f64> {
    let axis = grid.mu_axis();
    let n = axis.len();
    let arms = grid.arms();
    // Per arm, the summed log-likelihood at each axis value.
    let mut per_arm = vec![0.0; arms * n];
    for &(a, r) in history.entries() {
        for (i, &mu) in axis.iter().enumerate() {
            per_arm[a * n + i] += noise.log_pdf(r, mu);
        }
    }
    let mut out = vec![0.0; grid.mu_len()];
    if history.is_empty() {
        return out;
    }
    for (j, o) in out.iter_mut().enumerate() {
        let mut rem = j;
        let mut acc = 0.0;
        for a in 0..arms {
            acc += per_arm[a * n + rem % n];
            rem /= n;
        }
        *o = acc;
    }
    out
}

/// Point likelihoods g_j = Π N(r; μ_{j,a}, σ²). Long histories underflow
/// here; inference code uses [`history_log_likelihoods`].
pub fn history_point_likelihoods(grid: &Grid, history: &History, noise: &NoiseModel) -> Vec<f64> {
    history_log_likelihoods(grid, history, noise)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Σ_j cond_j g_j.
pub fn marginal_likelihood(cond: &ConditionalDensity, g: &[f64]) -> f64 {
    assert_eq!(cond.probs.len(), g.len());
    cond.probs.iter().zip(g).map(|(p, g)| p * g).sum()
}

/// log Σ_j cond_j exp(log g_j).
pub fn log_marginal_likelihood(cond: &ConditionalDensity, log_g: &[f64]) -> f64 {
    assert_eq!(cond.probs.len(), log_g.len());
    log_sum_exp(
        cond.probs
            .iter()
            .zip(log_g)
            .map(|(&p, &lg)| if p > 0.0 { p.ln() + lg } else { f64::NEG_INFINITY }),
    )
}

/// Bayes' rule on the μ-subgrid: posterior_j ∝ cond_j g_j.
pub fn condition_on_history(cond: &ConditionalDensity, g: &[f64]) -> Result<ConditionalDensity> {
    let evidence = marginal_likelihood(cond, g);
    if !(evidence > 0.0 && evidence.is_finite()) {
        return Err(CocoError::DegeneratePosterior);
    }
    Ok(ConditionalDensity {
        probs: cond.probs.iter().zip(g).map(|(p, g)| p * g / evidence).collect(),
        context_index: cond.context_index,
    })
}

/// Log-space version of [`condition_on_history`].
pub fn condition_on_log_history(
    cond: &ConditionalDensity,
    log_g: &[f64],
) -> Result<ConditionalDensity> {
    assert_eq!(cond.probs.len(), log_g.len());
    let logs: Vec<f64> = cond
        .probs
        .iter()
        .zip(log_g)
        .map(|(&p, &lg)| if p > 0.0 { p.ln() + lg } else { f64::NEG_INFINITY })
        .collect();
    if logs.iter().all(|x| *x == f64::NEG_INFINITY) || logs.iter().any(|x| x.is_nan()) {
        return Err(CocoError::DegeneratePosterior);
    }
    Ok(ConditionalDensity {
        probs: softmax(&logs),
        context_index: cond.context_index,
    })
}

/// History-conditioned density at a context, straight from log-density
/// values: softmax(f_slice + log g).
pub fn posterior_from_log_density(
    f_values: &[f64],
    grid: &Grid,
    context_index: usize,
    log_g: &[f64],
) -> Result<ConditionalDensity> {
    let slice = &f_values[grid.context_slice(context_index)];
    let logs: Vec<f64> = slice.iter().zip(log_g).map(|(f, g)| f + g).collect();
    if logs.iter().any(|x| !x.is_finite()) {
        return Err(CocoError::DegeneratePosterior);
    }
    Ok(ConditionalDensity {
        probs: softmax(&logs),
        context_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_basis::{build_grid, GridSpec, Interval};

    fn grid_1d(points: usize, lo: f64, hi: f64) -> Grid {
        build_grid(&GridSpec {
            arms: 1,
            mu_range: Interval::new(lo, hi),
            mu_points_per_dim: points,
            context_ranges: vec![],
            context_points_per_dim: vec![],
        })
        .unwrap()
    }

    #[test]
    fn softmax_cases() {
        let u = normalize_on_grid(&[2.0; 4]).unwrap();
        assert!(u.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let two = normalize_on_grid(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((two.probs[0] - 0.25).abs() < 1e-15);
        assert!((two.probs[1] - 0.75).abs() < 1e-15);
        let shifted = normalize_on_grid(&[1f64.ln() + 7.5, 3f64.ln() + 7.5]).unwrap();
        assert!((shifted.probs[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(normalize_on_grid(&[0.0, f64::NAN]).is_err());
        assert!(normalize_on_grid(&[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn condition_two_by_two() {
        let g = build_grid(&GridSpec {
            arms: 1,
            mu_range: Interval::new(0.0, 1.0),
            mu_points_per_dim: 2,
            context_ranges: vec![Interval::new(0.0, 1.0)],
            context_points_per_dim: vec![2],
        })
        .unwrap();
        // Layout: μ fastest, so context 0 holds entries 0,1.
        // rows=μ, cols=context: [[0.1,0.2],[0.3,0.4]]
        let joint = JointDensity {
            probs: vec![0.1, 0.3, 0.2, 0.4],
        };
        let c = condition_on_context(&joint, &g, 0).unwrap();
        assert!((c.probs[0] - 0.25).abs() < 1e-15);
        assert!((c.probs[1] - 0.75).abs() < 1e-15);
        let zero = JointDensity {
            probs: vec![0.0, 0.0, 0.5, 0.5],
        };
        assert_eq!(
            condition_on_context(&zero, &g, 0),
            Err(CocoError::DegenerateConditional { context_index: 0 })
        );
    }

    #[test]
    fn empty_history_is_neutral() {
        let g = grid_1d(5, -1.0, 1.0);
        let noise = NoiseModel::new(0.1).unwrap();
        let pl = history_point_likelihoods(&g, &History::new(), &noise);
        assert!(pl.iter().all(|&x| x == 1.0));
        let cond = ConditionalDensity::uniform(5, 0);
        assert_eq!(marginal_likelihood(&cond, &pl), 1.0);
        assert_eq!(condition_on_history(&cond, &pl).unwrap(), cond);
    }

    #[test]
    fn single_observation_density() {
        let g = grid_1d(2, 0.0, 1.0);
        let noise = NoiseModel::new(0.1).unwrap();
        let h = History::from_entries(vec![(0, 0.0)]);
        let pl = history_point_likelihoods(&g, &h, &noise);
        let expected = 1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((pl[0] - expected).abs() < 1e-12);
        assert!((pl[0] - 3.98942).abs() < 1e-5);
    }

    #[test]
    fn two_observation_ratio() {
        let g = grid_1d(2, 0.0, 1.0);
        let noise = NoiseModel::new(0.1).unwrap();
        let h = History::from_entries(vec![(0, 0.2), (0, 0.1)]);
        let pl = history_point_likelihoods(&g, &h, &noise);
        let expected: f64 = (-(0.04 + 0.01) + (0.64 + 0.81)) / (2.0 * 0.01);
        let expected = expected.exp();
        assert!((pl[0] / pl[1] / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn marginal_likelihood_cases() {
        let point = ConditionalDensity {
            probs: vec![0.0, 1.0, 0.0],
            context_index: 0,
        };
        assert_eq!(marginal_likelihood(&point, &[0.3, 0.7, 0.9]), 0.7);
        let uniform = ConditionalDensity::uniform(2, 0);
        assert!((marginal_likelihood(&uniform, &[0.2, 0.6]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn two_point_bayes() {
        let g = grid_1d(2, 0.0, 1.0);
        let noise = NoiseModel::new(0.1).unwrap();
        let h = History::from_entries(vec![(0, 0.0)]);
        let cond = ConditionalDensity::uniform(2, 0);
        let post = condition_on_log_history(&cond, &history_log_likelihoods(&g, &h, &noise)).unwrap();
        // φ(0;1,.01)/φ(0;0,.01) = exp(-50)
        let tail = (-50f64).exp() / (1.0 + (-50f64).exp());
        assert!((post.probs[1] / tail - 1.0).abs() < 1e-10);
        assert!((tail - 1.9e-22).abs() < 0.05e-22);
        assert!((post.probs[0] - (1.0 - tail)).abs() < 1e-15);
    }

    #[test]
    fn concentration_with_many_observations() {
        let g = grid_1d(3, 0.0, 1.0);
        let noise = NoiseModel::new(0.1).unwrap();
        let h = History::from_entries(vec![(0, 0.5); 50]);
        let cond = ConditionalDensity::uniform(3, 0);
        let post = condition_on_log_history(&cond, &history_log_likelihoods(&g, &h, &noise)).unwrap();
        assert!(post.probs[1] > 1.0 - 1e-6);
    }

    #[test]
    fn zero_evidence_is_degenerate() {
        let cond = ConditionalDensity {
            probs: vec![1.0, 0.0],
            context_index: 0,
        };
        assert_eq!(
            condition_on_history(&cond, &[0.0, 1.0]),
            Err(CocoError::DegeneratePosterior)
        );
    }

    #[test]
    fn history_validation() {
        let h = History::from_entries(vec![(3, 0.0)]);
        assert!(h.validate(3).is_err());
        assert!(h.validate(4).is_ok());
    }
}
