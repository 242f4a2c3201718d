use serde::{Deserialize, Serialize};

use crate::acquisition::GidsConfig;
use crate::environments::EnvironmentSpec;
use crate::error::{CocoError, Result};
use crate::kernel_basis::{GridSpec, Interval, KernelParams};
use crate::smc::SmcConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NpmTs,
    Gids,
    IndTs,
    OracleTs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::NpmTs, Self::Gids, Self::IndTs, Self::OracleTs];

    pub fn name(self) -> &'static str {
        match self {
            Self::NpmTs => "npm_ts",
            Self::Gids => "gids",
            Self::IndTs => "ind_ts",
            Self::OracleTs => "oracle_ts",
        }
    }

    /// Whether the policy learns a meta-posterior.
    pub fn uses_posterior(self) -> bool {
        matches!(self, Self::NpmTs | Self::Gids)
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = CocoError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                CocoError::config(
                    "policy",
                    format!("unknown policy `{s}`; expected npm_ts, gids, ind_ts or oracle_ts"),
                )
            })
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The fixed evaluation batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub batch_size: usize,
    pub interactions: usize,
    /// Snapshot every this many rounds (plus the prior and the final state).
    pub every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            interactions: 10,
            every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub environment: EnvironmentSpec,
    pub policy: PolicyKind,
    /// Interactions per user before they leave.
    pub user_horizon: usize,
    /// Users per recruitment batch.
    pub batch_size: usize,
    /// Number of batches, the initial one included.
    pub recruitment_rounds: usize,
    pub grid: GridSpec,
    pub kernel: KernelParams,
    /// KL truncation order.
    pub truncation: usize,
    pub smc: SmcConfig,
    pub gids: GidsConfig,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Meta-posterior update cadence in interactions.
    pub update_every: usize,
    pub eval: EvalConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentSpec::default(),
            policy: PolicyKind::NpmTs,
            user_horizon: 5,
            batch_size: 5,
            recruitment_rounds: 30,
            grid: GridSpec {
                arms: 3,
                mu_range: Interval::new(-2.0, 2.0),
                mu_points_per_dim: 20,
                context_ranges: vec![Interval::new(-1.0, 1.0)],
                context_points_per_dim: vec![10],
            },
            kernel: KernelParams::default(),
            truncation: 80,
            smc: SmcConfig::default(),
            gids: GidsConfig::default(),
            noise_sigma: 0.1,
            seed: 0,
            update_every: 1,
            eval: EvalConfig::default(),
        }
    }
}

impl SimConfig {
    /// Parses JSON, rejecting unknown keys and naming the offending path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let field = if path == "." { unknown_field(&inner.to_string()) } else { path };
            CocoError::config(field, inner.to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        let positive = [
            ("user_horizon", self.user_horizon),
            ("batch_size", self.batch_size),
            ("recruitment_rounds", self.recruitment_rounds),
            ("truncation", self.truncation),
            ("update_every", self.update_every),
            ("eval.batch_size", self.eval.batch_size),
            ("eval.interactions", self.eval.interactions),
            ("eval.every", self.eval.every),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(CocoError::config(field, "must be positive"));
            }
        }
        self.grid.validate()?;
        if self.grid.arms != self.environment.arms() {
            return Err(CocoError::config(
                "grid.arms",
                format!(
                    "grid has {} arms but the environment has {}",
                    self.grid.arms,
                    self.environment.arms()
                ),
            ));
        }
        if self.grid.context_ranges.len() != 1 {
            return Err(CocoError::config(
                "grid.context_ranges",
                "environments expose exactly one observed context dimension",
            ));
        }
        self.kernel.validate()?;
        self.smc.validate()?;
        self.gids.validate()?;
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(CocoError::config("noise_sigma", "must be positive"));
        }
        Ok(())
    }

    /// Copy with the seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_policy(&self, policy: PolicyKind) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }

    /// The reduced mixture-of-Gaussians setting used by the desk-scale
    /// comparison.
    pub fn desk_mog() -> Self {
        Self {
            recruitment_rounds: 12,
            batch_size: 3,
            user_horizon: 5,
            grid: GridSpec {
                arms: 3,
                mu_range: Interval::new(-2.0, 2.0),
                mu_points_per_dim: 8,
                context_ranges: vec![Interval::new(-1.0, 1.0)],
                context_points_per_dim: vec![5],
            },
            truncation: 40,
            smc: SmcConfig {
                particles: 100,
                ..SmcConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Pulls the field name out of serde's "unknown field `x`" message.
fn unknown_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string())
}
