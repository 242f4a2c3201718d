use crate::error::{CocoError, Result};

/// One interaction as seen by the regret accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub user_id: usize,
    pub arm: usize,
    pub reward: f64,
    /// The user's true arm means.
    pub means: Vec<f64>,
}

impl StepRecord {
    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_a μ_a − μ_{arm}.
    pub fn regret_expected(&self) -> f64 {
        self.best_mean() - self.means[self.arm]
    }

    /// max_a μ_a − r.
    pub fn regret_realized(&self) -> f64 {
        self.best_mean() - self.reward
    }
}

/// Per-step records of a run and of its paired oracle run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    steps: Vec<StepRecord>,
    oracle_steps: Vec<StepRecord>,
}

impl RegretLedger {
    /// Fails unless both runs followed the same schedule over the same users.
    pub fn new(steps: Vec<StepRecord>, oracle_steps: Vec<StepRecord>) -> Result<Self> {
        check_pairing(&steps, &oracle_steps)?;
        Ok(Self { steps, oracle_steps })
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn oracle_steps(&self) -> &[StepRecord] {
        &self.oracle_steps
    }

    pub fn bayes_regret(&self) -> Vec<f64> {
        bayes_regret_series(&self.steps)
    }

    pub fn multi_task_regret(&self) -> Vec<f64> {
        multi_task_regret_series(&self.steps, &self.oracle_steps).expect("checked on construction")
    }

    /// Per-step μ_{oracle arm} − μ_{arm}.
    pub fn mtr_increments(&self) -> Vec<f64> {
        mtr_increments(&self.steps, &self.oracle_steps).expect("checked on construction")
    }
}

fn check_pairing(steps: &[StepRecord], oracle: &[StepRecord]) -> Result<()> {
    if steps.len() != oracle.len() {
        return Err(CocoError::Pairing {
            step: steps.len().min(oracle.len()),
            reason: format!("{} steps against {} oracle steps", steps.len(), oracle.len()),
        });
    }
    for (a, o) in steps.iter().zip(oracle) {
        if a.t != o.t || a.user_id != o.user_id {
            return Err(CocoError::Pairing {
                step: a.t,
                reason: format!("user {} against oracle user {}", a.user_id, o.user_id),
            });
        }
        if a.means != o.means {
            return Err(CocoError::Pairing {
                step: a.t,
                reason: "true means differ".to_string(),
            });
        }
    }
    Ok(())
}

fn cumulative(increments: impl IntoIterator<Item = f64>) -> Vec<f64> {
    increments
        .into_iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Cumulative Σ_s (max_a μ_{i(s),a} − μ_{i(s),a_s}).
pub fn bayes_regret_series(steps: &[StepRecord]) -> Vec<f64> {
    cumulative(steps.iter().map(StepRecord::regret_expected))
}

pub fn mtr_increments(steps: &[StepRecord], oracle: &[StepRecord]) -> Result<Vec<f64>> {
    check_pairing(steps, oracle)?;
    Ok(steps
        .iter()
        .zip(oracle)
        .map(|(a, o)| a.means[o.arm] - a.means[a.arm])
        .collect())
}

/// Cumulative Σ_s (μ_{i,a^oracle_s} − μ_{i,a_s}).
pub fn multi_task_regret_series(steps: &[StepRecord], oracle: &[StepRecord]) -> Result<Vec<f64>> {
    Ok(cumulative(mtr_increments(steps, oracle)?))
}
