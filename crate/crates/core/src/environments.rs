//! Synthetic task populations, the reward model, and discretized true
//! conditionals for the oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::kernel_basis::{Grid, Interval};
use crate::logdensity::{ConditionalDensity, NoiseModel};

/// Latent draws per oracle histogram.
pub const ORACLE_DRAWS: usize = 10_000;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two Gaussian modes whose mixing weight and spread depend on the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MogParams {
    pub component_means: [Vec<f64>; 2],
    /// Per-coordinate std is `std_intercept + std_slope · x`.
    pub std_intercept: f64,
    pub std_slope: f64,
    pub context_range: Interval,
}

impl Default for MogParams {
    fn default() -> Self {
        Self {
            component_means: [vec![1.8, 1.0, -1.0], vec![1.0, 1.9, -1.8]],
            std_intercept: 0.2,
            std_slope: 0.1,
            context_range: Interval::new(-1.0, 1.0),
        }
    }
}

impl MogParams {
    pub fn std_at(&self, x: f64) -> f64 {
        self.std_intercept + self.std_slope * x
    }

    /// Weight of the first component.
    pub fn mixing_weight(&self, x: f64) -> f64 {
        sigmoid(x)
    }

    fn validate(&self) -> Result<()> {
        let [a, b] = &self.component_means;
        if a.is_empty() || a.len() != b.len() {
            return Err(CocoError::config(
                "environment.component_means",
                "both components need the same non-zero length",
            ));
        }
        validate_range(&self.context_range)?;
        let lo = self.std_at(self.context_range.lo);
        let hi = self.std_at(self.context_range.hi);
        if !(lo >= 0.0 && hi >= 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(CocoError::config(
                "environment.std_intercept",
                "component std must be non-negative over the context range",
            ));
        }
        Ok(())
    }
}

/// Linear rewards in a context of which only the first coordinate is seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialLinearParams {
    /// One row per arm over `[x_o, x_c, x_d, 1]`.
    pub weights: Vec<[f64; 4]>,
    pub latent_mean: f64,
    pub latent_std: f64,
    pub context_range: Interval,
}

impl Default for PartialLinearParams {
    fn default() -> Self {
        Self {
            weights: vec![
                [0.6, 0.1, 1.0, -0.9],
                [0.3, 0.3, -1.0, 0.9],
                [0.1, -0.2, -0.3, 0.1],
            ],
            latent_mean: 0.5,
            latent_std: 0.1,
            context_range: Interval::new(-1.0, 1.0),
        }
    }
}

impl PartialLinearParams {
    /// μ_a = w_a · [x_o, x_c, x_d, 1].
    pub fn means(&self, x_o: f64, x_c: f64, x_d: f64) -> Vec<f64> {
        let x = [x_o, x_c, x_d, 1.0];
        self.weights
            .iter()
            .map(|w| w.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(CocoError::config("environment.weights", "need at least one arm"));
        }
        if !(self.latent_std >= 0.0) {
            return Err(CocoError::config("environment.latent_std", "must be non-negative"));
        }
        validate_range(&self.context_range)
    }
}

/// Linear mixed model: shared fixed effect θ plus per-user random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmmParams {
    pub slopes: Vec<f64>,
    /// `false` draws θ from an equal mixture centred at ±`theta_mean`.
    pub aligned: bool,
    pub theta_mean: [f64; 2],
    pub theta_variance: f64,
    pub random_effect_std: f64,
    pub context_range: Interval,
}

impl Default for LmmParams {
    fn default() -> Self {
        Self {
            slopes: vec![0.9, -1.1, 0.2],
            aligned: true,
            theta_mean: [1.0, 1.0],
            theta_variance: 0.25,
            random_effect_std: 0.05,
            context_range: Interval::new(-1.0, 1.0),
        }
    }
}

impl LmmParams {
    /// μ_a = ρ_a x θ₀ + θ₁ + δ_a.
    pub fn means(&self, x: f64, theta: [f64; 2], delta: &[f64]) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(delta)
            .map(|(rho, d)| rho * x * theta[0] + theta[1] + d)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.slopes.is_empty() {
            return Err(CocoError::config("environment.slopes", "need at least one arm"));
        }
        if !(self.theta_variance > 0.0) {
            return Err(CocoError::config("environment.theta_variance", "must be positive"));
        }
        if !(self.random_effect_std > 0.0) {
            return Err(CocoError::config("environment.random_effect_std", "must be positive"));
        }
        validate_range(&self.context_range)
    }
}

fn validate_range(r: &Interval) -> Result<()> {
    if !(r.lo < r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
        return Err(CocoError::config("environment.context_range", "need lo < hi"));
    }
    Ok(())
}

/// Which population to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Mog(MogParams),
    PartialLinear(PartialLinearParams),
    Lmm(LmmParams),
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self::Mog(MogParams::default())
    }
}

impl EnvironmentSpec {
    pub fn arms(&self) -> usize {
        match self {
            Self::Mog(p) => p.component_means[0].len(),
            Self::PartialLinear(p) => p.weights.len(),
            Self::Lmm(p) => p.slopes.len(),
        }
    }

    pub fn context_range(&self) -> Interval {
        match self {
            Self::Mog(p) => p.context_range,
            Self::PartialLinear(p) => p.context_range,
            Self::Lmm(p) => p.context_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mog(p) => p.validate(),
            Self::PartialLinear(p) => p.validate(),
            Self::Lmm(p) => p.validate(),
        }
    }

    /// Fixes per-run randomness (the LMM fixed effect) and returns a
    /// population to draw tasks from.
    pub fn instantiate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Population> {
        self.validate()?;
        let theta = match self {
            Self::Lmm(p) => Some(lmm_sample_population(p, rng)),
            _ => None,
        };
        Ok(Population {
            spec: self.clone(),
            theta,
        })
    }
}

/// Hidden parts of a task. Only environment code and diagnostics read it.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent {
    Mog { component: usize },
    PartialLinear { x_c: f64, x_d: bool },
    Lmm { delta: Vec<f64> },
}

/// One user as the environment knows them.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    means: Vec<f64>,
    x_obs: f64,
    latent: Latent,
}

impl Task {
    pub fn new(means: Vec<f64>, x_obs: f64, latent: Latent) -> Self {
        Self { means, x_obs, latent }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn x_obs(&self) -> f64 {
        self.x_obs
    }

    pub fn latent(&self) -> &Latent {
        &self.latent
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Expected regret of pulling `arm`.
    pub fn gap(&self, arm: usize) -> f64 {
        self.best_mean() - self.means[arm]
    }
}

pub fn mog_sample_task<R: Rng + ?Sized>(params: &MogParams, rng: &mut R) -> Task {
    let x = rng.random_range(params.context_range.lo..params.context_range.hi);
    mog_sample_task_at(params, x, rng)
}

pub fn mog_sample_task_at<R: Rng + ?Sized>(params: &MogParams, x: f64, rng: &mut R) -> Task {
    let component = if rng.random::<f64>() < params.mixing_weight(x) { 0 } else { 1 };
    let sd = params.std_at(x);
    let means = params.component_means[component]
        .iter()
        .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Task::new(means, x, Latent::Mog { component })
}

pub fn partial_linear_sample_task<R: Rng + ?Sized>(params: &PartialLinearParams, rng: &mut R) -> Task {
    let x_o = rng.random_range(params.context_range.lo..params.context_range.hi);
    partial_linear_sample_task_at(params, x_o, rng)
}

pub fn partial_linear_sample_task_at<R: Rng + ?Sized>(
    params: &PartialLinearParams,
    x_o: f64,
    rng: &mut R,
) -> Task {
    let x_c = params.latent_mean + params.latent_std * rng.sample::<f64, _>(StandardNormal);
    let x_d = Bernoulli::new(sigmoid(x_o)).expect("sigmoid lies in [0, 1]").sample(rng);
    let means = params.means(x_o, x_c, if x_d { 1.0 } else { 0.0 });
    Task::new(means, x_o, Latent::PartialLinear { x_c, x_d })
}

/// θ for one run: N(m, v I) when aligned, else the sign of m is flipped
/// with probability one half first.
pub fn lmm_sample_population<R: Rng + ?Sized>(params: &LmmParams, rng: &mut R) -> [f64; 2] {
    let sign = if params.aligned || rng.random::<bool>() { 1.0 } else { -1.0 };
    let sd = params.theta_variance.sqrt();
    let n = Normal::new(0.0, sd).expect("positive variance");
    [
        sign * params.theta_mean[0] + n.sample(rng),
        sign * params.theta_mean[1] + n.sample(rng),
    ]
}

pub fn lmm_sample_task<R: Rng + ?Sized>(params: &LmmParams, theta: [f64; 2], rng: &mut R) -> Task {
    let x = rng.random_range(params.context_range.lo..params.context_range.hi);
    lmm_sample_task_at(params, theta, x, rng)
}

pub fn lmm_sample_task_at<R: Rng + ?Sized>(params: &LmmParams, theta: [f64; 2], x: f64, rng: &mut R) -> Task {
    let delta: Vec<f64> = (0..params.slopes.len())
        .map(|_| params.random_effect_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let means = params.means(x, theta, &delta);
    Task::new(means, x, Latent::Lmm { delta })
}

/// r = μ_a + σ ε.
pub fn observe_reward<R: Rng + ?Sized>(task: &Task, arm: usize, noise: &NoiseModel, rng: &mut R) -> f64 {
    task.means[arm] + noise.sigma() * rng.sample::<f64, _>(StandardNormal)
}

/// A population with its per-run randomness fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    spec: EnvironmentSpec,
    theta: Option<[f64; 2]>,
}

impl Population {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn theta(&self) -> Option<[f64; 2]> {
        self.theta
    }

    pub fn arms(&self) -> usize {
        self.spec.arms()
    }

    pub fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> Task {
        match &self.spec {
            EnvironmentSpec::Mog(p) => mog_sample_task(p, rng),
            EnvironmentSpec::PartialLinear(p) => partial_linear_sample_task(p, rng),
            EnvironmentSpec::Lmm(p) => lmm_sample_task(p, self.theta.expect("set by instantiate"), rng),
        }
    }

    /// A task with its observed context pinned to `x`.
    pub fn sample_task_at<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Task {
        match &self.spec {
            EnvironmentSpec::Mog(p) => mog_sample_task_at(p, x, rng),
            EnvironmentSpec::PartialLinear(p) => partial_linear_sample_task_at(p, x, rng),
            EnvironmentSpec::Lmm(p) => {
                lmm_sample_task_at(p, self.theta.expect("set by instantiate"), x, rng)
            }
        }
    }

    /// True P*(μ | x_obs) discretized onto the grid's μ points, tagged
    /// with `context_index`.
    pub fn oracle_conditional(
        &self,
        x_obs: f64,
        grid: &Grid,
        context_index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ConditionalDensity> {
        if grid.arms() != self.arms() {
            return Err(CocoError::InvalidInput(format!(
                "grid has {} arms but the environment has {}",
                grid.arms(),
                self.arms()
            )));
        }
        match &self.spec {
            EnvironmentSpec::Mog(p) => Ok(mog_oracle(p, x_obs, grid, context_index)),
            _ => Ok(self.histogram_oracle(x_obs, grid, context_index, ORACLE_DRAWS, rng)),
        }
    }

    /// Nearest-grid-point histogram of `draws` tasks at context `x_obs`.
    pub fn histogram_oracle(
        &self,
        x_obs: f64,
        grid: &Grid,
        context_index: usize,
        draws: usize,
        rng: &mut ChaCha8Rng,
    ) -> ConditionalDensity {
        let mut probs = vec![0.0; grid.mu_len()];
        let w = 1.0 / draws as f64;
        for _ in 0..draws {
            let task = self.sample_task_at(x_obs, rng);
            probs[grid.nearest_mu_index(task.means())] += w;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        ConditionalDensity {
            probs,
            context_index,
        }
    }
}

/// Closed-form mixture density at every μ grid point, normalized. With a
/// zero std the mass goes to the grid points nearest the component means.
pub fn mog_oracle(params: &MogParams, x: f64, grid: &Grid, context_index: usize) -> ConditionalDensity {
    let v = params.mixing_weight(x);
    let mix = [v, 1.0 - v];
    let sd = params.std_at(x);
    let mut probs = vec![0.0; grid.mu_len()];
    if sd > 1e-12 {
        // log densities first so tiny spreads do not underflow everywhere
        let logs: Vec<f64> = (0..grid.mu_len())
            .map(|j| {
                let point = grid.mu_point(j);
                let terms = params.component_means.iter().zip(mix).map(|(m, w)| {
                    let sq: f64 = point.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    w.ln() - 0.5 * sq / (sd * sd)
                });
                crate::logdensity::log_sum_exp(terms.collect::<Vec<_>>())
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (p, l) in probs.iter_mut().zip(&logs) {
            *p = (l - max).exp();
        }
    } else {
        for (m, w) in params.component_means.iter().zip(mix) {
            probs[grid.nearest_mu_index(m)] += w;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    ConditionalDensity {
        probs,
        context_index,
    }
}
