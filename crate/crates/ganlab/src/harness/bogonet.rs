//! Random-architecture stability benchmark.
//!
//! Each instance samples one generator/discriminator architecture pair, then
//! every competing algorithm trains on that identical pair with the same
//! seed, data stream, and generator-iteration budget. Aggregation of the
//! per-eval quality-score series (trapezoid AUC and final value) makes
//! instability — divergence, collapse, failure to learn — show up as a low
//! mean and a high spread.

use crate::harness::config::GameConfig;
use crate::harness::train::agd_train;
use crate::metrics::{bogonet_summary, SeriesSummary};
use crate::nets::{default_arch_pool, sample_arch, OutputActivation};
use crate::objectives::ObjectiveKind;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One competitor: a display name plus a config template. The template's
/// `generator`, `discriminator`, and `seed` fields are overwritten per
/// instance; everything else (objective, penalty, optimizer, budgets) is the
/// algorithm's identity.
#[derive(Clone, Debug)]
pub struct AlgorithmSpec {
    pub name: String,
    pub template: GameConfig,
}

/// Results of one algorithm across all instances.
#[derive(Clone, Debug)]
pub struct AlgorithmResult {
    pub name: String,
    pub summary: SeriesSummary,
    /// Per-instance `(g_iter, score)` series, in instance order.
    pub series: Vec<Vec<(f64, f64)>>,
}

/// ChaCha stream id reserved for architecture sampling, distinct from the
/// five streams the training loop itself uses.
const STREAM_ARCH: u64 = 5;

/// The standard three-way comparison: the locally penalized cross-entropy
/// algorithm, its unpenalized form, and the critic objective with the
/// interpolate penalty (which takes its usual five discriminator steps —
/// fairness here is equal *generator* iterations). All share one optimizer
/// setting and batch size so the penalty and objective are the only
/// differences.
pub fn canonical_algorithms(g_iters: usize) -> Vec<AlgorithmSpec> {
    use crate::harness::config::{DatasetSelector, OptimizerConfig, UpdateMode};
    use crate::nets::{ArchSpec, HiddenActivation};
    use crate::penalties::{PenaltyConfig, PenaltyVariant};

    let base = GameConfig {
        objective: ObjectiveKind::Vanilla,
        penalty: PenaltyConfig::none(),
        optimizer: OptimizerConfig::Adam {
            alpha: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        },
        d_steps_per_g_step: Some(1),
        batch_size: 64,
        total_g_iters: g_iters,
        eval_interval: (g_iters / 10).max(1),
        seed: 0,
        dataset: DatasetSelector::EightGaussians,
        // Placeholder architectures; the benchmark overwrites them per
        // instance.
        generator: ArchSpec {
            family: "mlp".to_string(),
            depth: 1,
            widths: vec![64],
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Identity,
            latent_dim: 2,
        },
        discriminator: ArchSpec {
            family: "mlp".to_string(),
            depth: 1,
            widths: vec![64],
            hidden_activation: HiddenActivation::LeakyRelu,
            output_activation: OutputActivation::Sigmoid,
            latent_dim: 2,
        },
        update_mode: UpdateMode::Alternating,
        non_saturating: true,
    };

    let dragan = AlgorithmSpec {
        name: "dragan".to_string(),
        template: GameConfig {
            penalty: PenaltyConfig {
                variant: PenaltyVariant::DraganEq1,
                lambda: 10.0,
                k: 1.0,
                c: 0.5,
            },
            ..base.clone()
        },
    };
    let vanilla = AlgorithmSpec {
        name: "vanilla".to_string(),
        template: base.clone(),
    };
    let wgan_gp = AlgorithmSpec {
        name: "wgan_gp".to_string(),
        template: GameConfig {
            objective: ObjectiveKind::Wgan,
            penalty: PenaltyConfig {
                variant: PenaltyVariant::CoupledGp,
                lambda: 10.0,
                k: 1.0,
                c: 0.5,
            },
            d_steps_per_g_step: Some(5),
            non_saturating: false,
            ..base
        },
    };
    vec![dragan, vanilla, wgan_gp]
}

/// Runs the benchmark: `n_instances` random architecture pairs, every
/// algorithm trained on each pair under identical conditions. Instances run
/// in parallel; results are merged by instance index, so the outcome is
/// independent of scheduling.
pub fn bogonet_run(
    n_instances: usize,
    algorithms: &[AlgorithmSpec],
    seed: u64,
) -> Result<Vec<AlgorithmResult>> {
    if n_instances == 0 {
        return Err(Error::Config("bogonet needs at least one instance".into()));
    }
    if algorithms.is_empty() {
        return Err(Error::Empty("bogonet algorithm list".into()));
    }
    let pool = default_arch_pool();

    let per_instance: Vec<Vec<Vec<(f64, f64)>>> = (0..n_instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<(f64, f64)>>> {
            let instance_seed = seed.wrapping_add(i as u64);
            let mut arch_rng = ChaCha8Rng::seed_from_u64(instance_seed);
            arch_rng.set_stream(STREAM_ARCH);
            let gen_spec = sample_arch(&pool, &mut arch_rng)?;
            let disc_spec = sample_arch(&pool, &mut arch_rng)?;

            let mut series_per_algo = Vec::with_capacity(algorithms.len());
            for algo in algorithms {
                let mut cfg = algo.template.clone();
                cfg.generator = gen_spec.clone();
                cfg.discriminator = disc_spec.clone();
                // The objective dictates how the shared head is read.
                cfg.discriminator.output_activation = match cfg.objective {
                    ObjectiveKind::Vanilla => OutputActivation::Sigmoid,
                    _ => OutputActivation::Identity,
                };
                cfg.seed = instance_seed;
                let outcome = agd_train(&cfg)?;
                series_per_algo.push(outcome.score_series);
            }
            Ok(series_per_algo)
        })
        .collect::<Result<Vec<_>>>()?;

    algorithms
        .iter()
        .enumerate()
        .map(|(a, algo)| {
            let series: Vec<Vec<(f64, f64)>> = per_instance
                .iter()
                .map(|inst| inst[a].clone())
                .collect();
            Ok(AlgorithmResult {
                name: algo.name.clone(),
                summary: bogonet_summary(&series)?,
                series,
            })
        })
        .collect()
}
