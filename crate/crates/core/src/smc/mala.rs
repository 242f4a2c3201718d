//! Metropolis-adjusted Langevin transitions.

use rand::Rng;
use rand_distr::StandardNormal;

/// A point at which a target has been evaluated, plus whatever by-products
/// the target wants to keep alongside it.
#[derive(Debug, Clone)]
pub struct Evaluated<E> {
    pub x: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
    pub extra: E,
}

/// Unnormalized log-density with gradient.
pub trait LogTarget {
    type Extra;

    fn evaluate(&self, x: Vec<f64>) -> Evaluated<Self::Extra>;
}

/// log q(to | from) for the Langevin proposal N(from + η/2 ∇, η I), up to
/// the constant shared by both directions.
fn log_proposal(to: &[f64], from: &[f64], grad_from: &[f64], eta: f64) -> f64 {
    let sq: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| {
            let d = t - f - 0.5 * eta * g;
            d * d
        })
        .sum();
    -sq / (2.0 * eta)
}

/// log of the MH acceptance ratio for moving `from` → `to`.
pub fn mala_log_acceptance<E, F>(from: &Evaluated<E>, to: &Evaluated<F>, eta: f64) -> f64 {
    to.log_density - from.log_density + log_proposal(&from.x, &to.x, &to.grad, eta)
        - log_proposal(&to.x, &from.x, &from.grad, eta)
}

/// One MALA transition. Returns the new state and whether the proposal was
/// accepted; on rejection the input state comes back unchanged.
pub fn mala_step<T, R>(
    current: Evaluated<T::Extra>,
    target: &T,
    eta: f64,
    rng: &mut R,
) -> (Evaluated<T::Extra>, bool)
where
    T: LogTarget,
    R: Rng + ?Sized,
{
    debug_assert!(eta > 0.0);
    let root = eta.sqrt();
    let proposal_x: Vec<f64> = current
        .x
        .iter()
        .zip(&current.grad)
        .map(|(x, g)| {
            let eps: f64 = rng.sample(StandardNormal);
            x + 0.5 * eta * g + root * eps
        })
        .collect();
    let proposal = target.evaluate(proposal_x);
    let log_alpha = mala_log_acceptance(&current, &proposal, eta);
    let u: f64 = rng.random();
    if log_alpha.is_finite() && (log_alpha >= 0.0 || u.ln() < log_alpha) {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Standard normal in any dimension; handy as an analytic reference target.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormalTarget;

impl LogTarget for StandardNormalTarget {
    type Extra = ();

    fn evaluate(&self, x: Vec<f64>) -> Evaluated<()> {
        let log_density = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let grad = x.iter().map(|v| -v).collect();
        Evaluated {
            x,
            log_density,
            grad,
            extra: (),
        }
    }
}
