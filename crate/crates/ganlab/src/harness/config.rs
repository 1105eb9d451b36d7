//! Experiment configuration: JSON-backed, strictly validated.
//!
//! Unknown fields are rejected so a typo cannot silently fall back to a
//! default. The JSON shape mirrors the structs below; see the repository
//! README for a complete example.

use crate::nets::{ArchSpec, OutputActivation};
use crate::objectives::ObjectiveKind;
use crate::penalties::{PenaltyConfig, PenaltyVariant};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which data distribution the discriminator learns to recognize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSelector {
    #[serde(rename = "8gaussians")]
    EightGaussians,
    Swissroll,
    /// IDX-format image file (e.g. MNIST); flattened rows scaled to [−1, 1].
    Idx { path: PathBuf },
}

/// First-order update rule shared by both players.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        eta: f64,
    },
    Adam {
        alpha: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for OptimizerConfig {
    /// The conventional stable choice for penalized adversarial training.
    fn default() -> Self {
        OptimizerConfig::Adam {
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            OptimizerConfig::Sgd { eta } => eta.is_finite() && *eta > 0.0,
            OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                eps,
            } => {
                alpha.is_finite()
                    && *alpha > 0.0
                    && (0.0..1.0).contains(beta1)
                    && (0.0..1.0).contains(beta2)
                    && eps.is_finite()
                    && *eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings: {self:?}")))
        }
    }
}

/// Whether the two players update in turn or from the same snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    Alternating,
    Simultaneous,
}

/// Full specification of one adversarial training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub objective: ObjectiveKind,
    #[serde(default = "PenaltyConfig::none")]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Discriminator updates per generator update. When omitted, resolves to
    /// 5 for the Wasserstein objective and 1 otherwise.
    #[serde(default)]
    pub d_steps_per_g_step: Option<usize>,
    pub batch_size: usize,
    pub total_g_iters: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub dataset: DatasetSelector,
    pub generator: ArchSpec,
    pub discriminator: ArchSpec,
    #[serde(default)]
    pub update_mode: UpdateMode,
    /// Use `−E[log D(G(z))]` as the generator loss instead of the zero-sum
    /// form. Only meaningful for the `vanilla` objective.
    #[serde(default)]
    pub non_saturating: bool,
}

impl GameConfig {
    /// Discriminator steps per generator step after applying the
    /// per-objective default.
    pub fn resolved_d_steps(&self) -> usize {
        self.d_steps_per_g_step.unwrap_or(match self.objective {
            ObjectiveKind::Wgan => 5,
            _ => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_g_iters == 0 || self.eval_interval == 0 {
            return Err(Error::Config(
                "batch_size, total_g_iters, and eval_interval must be positive".into(),
            ));
        }
        if self.resolved_d_steps() == 0 {
            return Err(Error::Config("d_steps_per_g_step must be >= 1".into()));
        }
        self.optimizer.validate()?;
        if self.penalty.variant != PenaltyVariant::None {
            self.penalty.validate()?;
        }
        self.generator.validate()?;
        self.discriminator.validate()?;

        if self.update_mode == UpdateMode::Simultaneous && self.resolved_d_steps() != 1 {
            return Err(Error::Config(
                "simultaneous updates require d_steps_per_g_step = 1".into(),
            ));
        }
        // The objective dictates how the discriminator's output is read:
        // vanilla consumes probabilities, the others raw scores.
        let out = self.discriminator.output_activation;
        match self.objective {
            ObjectiveKind::Vanilla => {
                if out != OutputActivation::Sigmoid {
                    return Err(Error::Config(
                        "vanilla objective needs discriminator output_activation = sigmoid"
                            .into(),
                    ));
                }
            }
            ObjectiveKind::Wgan | ObjectiveKind::Fgan(_) => {
                if out != OutputActivation::Identity {
                    return Err(Error::Config(format!(
                        "{} objective needs discriminator output_activation = identity",
                        self.objective
                    )));
                }
            }
        }
        if self.non_saturating && self.objective != ObjectiveKind::Vanilla {
            return Err(Error::Config(
                "non_saturating only applies to the vanilla objective".into(),
            ));
        }
        Ok(())
    }

    /// Parse and validate a JSON config file.
    pub fn load(path: impl AsRef<Path>) -> Result<GameConfig> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::Config(format!("config not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: GameConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
