//! The alternating/simultaneous gradient-descent training loop.
//!
//! One generator iteration = `d_steps_per_g_step` discriminator updates
//! followed by one generator update (alternating mode), or one joint update
//! computed from a shared batch snapshot (simultaneous mode). Every RNG draw
//! comes from one of five fixed ChaCha streams derived from the config seed
//! (network init, real data, latent noise, penalty probes, eval sets), so a
//! run is a pure function of its config.

use crate::diffgraph::{Graph, NodeId, Tensor};
use crate::harness::config::{DatasetSelector, GameConfig, UpdateMode};
use crate::harness::optim::{clip_params, Optimizer};
use crate::metrics::{default_min_count, grad_norm_at_real, mode_coverage};
use crate::nets::{HiddenActivation, InitScheme, Mlp};
use crate::objectives::{
    fgan_activation, fgan_conjugate, fgan_losses, vanilla_losses, vanilla_nonsaturating_g_loss,
    wgan_losses, ObjectiveKind,
};
use crate::penalties::{coupled_penalty, dragan_penalty, PenaltyTerm, PenaltyVariant};
use crate::synthdata::{
    eight_gaussian_centers, read_idx_images, sample_8gaussians, sample_noise, sample_swissroll,
    EIGHT_GAUSSIANS_STD,
};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Weight-clipping bound applied to the critic when the Wasserstein
/// objective runs without a gradient penalty.
pub const WGAN_CLIP: f64 = 0.01;
/// Generator samples scored against the mode centers at each eval.
pub const EVAL_SAMPLES: usize = 1024;
/// Real points used for the logged input-gradient norm.
pub const EVAL_REAL_BATCH: usize = 256;

/// One logged evaluation row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRow {
    pub g_iter: usize,
    pub d_iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub penalty: f64,
    pub grad_norm_real: f64,
    pub covered_modes: usize,
    pub hq_fraction: f64,
    /// Kept at 0 so logs are byte-identical across machines; wall-clock
    /// timing goes to stderr, never into the artifact.
    pub wall_ms: u64,
}

/// Marks a run that hit a non-finite value.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub g_iter: usize,
    pub reason: String,
}

/// The log of one training run.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
    pub failed: Option<Failure>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "g_iter,d_iter,d_loss,g_loss,penalty,grad_norm_real,covered_modes,hq_fraction,wall_ms";

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
                r.g_iter,
                r.d_iter,
                r.d_loss,
                r.g_loss,
                r.penalty,
                r.grad_norm_real,
                r.covered_modes,
                r.hq_fraction,
                r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// Everything a finished (or failed) run hands back.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: TrainLog,
    pub generator: Mlp,
    pub discriminator: Mlp,
    /// `(g_iter, covered_modes + hq_fraction)` per eval row; a failed run is
    /// padded with zeros at the remaining eval marks so stability summaries
    /// penalize the failure over its whole unfinished span.
    pub score_series: Vec<(f64, f64)>,
}

/// Snapshot passed to the eval callback of [`agd_train_with`].
pub struct EvalEvent<'a> {
    pub row: &'a TrainRow,
    pub generator: &'a Mlp,
    pub discriminator: &'a Mlp,
}

enum DataSource {
    EightGaussians { centers: Tensor },
    Swissroll,
    Images { images: Tensor },
}

impl DataSource {
    fn open(selector: &DatasetSelector) -> Result<DataSource> {
        Ok(match selector {
            DatasetSelector::EightGaussians => DataSource::EightGaussians {
                centers: eight_gaussian_centers(),
            },
            DatasetSelector::Swissroll => DataSource::Swissroll,
            DatasetSelector::Idx { path } => {
                let ds = read_idx_images(path)?;
                if ds.images.rows() == 0 {
                    return Err(Error::Empty("image dataset has no rows".into()));
                }
                DataSource::Images { images: ds.images }
            }
        })
    }

    fn dim(&self) -> usize {
        match self {
            DataSource::EightGaussians { .. } | DataSource::Swissroll => 2,
            DataSource::Images { images } => images.cols(),
        }
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
        match self {
            DataSource::EightGaussians { .. } => sample_8gaussians(n, rng).points,
            DataSource::Swissroll => sample_swissroll(n, rng).points,
            DataSource::Images { images } => {
                use rand::Rng;
                let cols = images.cols();
                let mut flat = Vec::with_capacity(n * cols);
                for _ in 0..n {
                    let r = rng.random_range(0..images.rows());
                    flat.extend_from_slice(images.row(r));
                }
                Tensor::new(n, cols, flat)
            }
        }
    }

    fn centers(&self) -> Option<(&Tensor, f64)> {
        match self {
            DataSource::EightGaussians { centers } => Some((centers, EIGHT_GAUSSIANS_STD)),
            _ => None,
        }
    }
}

/// Init scheme convention: He for piecewise-linear hidden units, Xavier for
/// saturating ones.
fn init_scheme_for(act: HiddenActivation) -> InitScheme {
    match act {
        HiddenActivation::Relu | HiddenActivation::LeakyRelu => InitScheme::He,
        HiddenActivation::Tanh => InitScheme::Xavier,
    }
}

// Fixed ChaCha stream ids per random-draw role.
const STREAM_INIT: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_PENALTY: u64 = 3;
const STREAM_EVAL: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Trainer {
    cfg: GameConfig,
    d_steps: usize,
    data: DataSource,
    g_net: Mlp,
    d_net: Mlp,
    g_opt: Optimizer,
    d_opt: Optimizer,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    penalty_rng: ChaCha8Rng,
    eval_z: Tensor,
    eval_real: Tensor,
    /// Real batch of the most recent discriminator step; the zero-sum
    /// generator loss re-reads it for its (gradient-free) real term.
    last_real: Tensor,
}

/// Values produced by one discriminator update.
struct DStepOutcome {
    d_loss: f64,
    penalty: f64,
}

impl Trainer {
    fn new(cfg: &GameConfig) -> Result<Trainer> {
        cfg.validate()?;
        let data = DataSource::open(&cfg.dataset)?;
        let data_dim = data.dim();

        let mut init_rng = stream(cfg.seed, STREAM_INIT);
        let g_net = Mlp::init(
            &cfg.generator,
            cfg.generator.latent_dim,
            data_dim,
            init_scheme_for(cfg.generator.hidden_activation),
            &mut init_rng,
        )?;
        let d_net = Mlp::init(
            &cfg.discriminator,
            data_dim,
            1,
            init_scheme_for(cfg.discriminator.hidden_activation),
            &mut init_rng,
        )?;

        let g_opt = Optimizer::new(
            cfg.optimizer,
            &g_net.params().iter().map(|t| t.shape()).collect::<Vec<_>>(),
        );
        let d_opt = Optimizer::new(
            cfg.optimizer,
            &d_net.params().iter().map(|t| t.shape()).collect::<Vec<_>>(),
        );

        let mut eval_rng = stream(cfg.seed, STREAM_EVAL);
        let eval_z = sample_noise(EVAL_SAMPLES, cfg.generator.latent_dim, &mut eval_rng);
        let eval_real = data.sample(EVAL_REAL_BATCH, &mut eval_rng);

        Ok(Trainer {
            cfg: cfg.clone(),
            d_steps: cfg.resolved_d_steps(),
            data,
            g_net,
            d_net,
            g_opt,
            d_opt,
            data_rng: stream(cfg.seed, STREAM_DATA),
            noise_rng: stream(cfg.seed, STREAM_NOISE),
            penalty_rng: stream(cfg.seed, STREAM_PENALTY),
            eval_z,
            eval_real,
            last_real: Tensor::zeros(0, 0),
        })
    }

    /// Appends the configured penalty for the current batch; `None` when the
    /// penalty variant is `none`.
    fn build_penalty(
        &mut self,
        g: &mut Graph,
        d_param_nodes: &[NodeId],
        x_real: &Tensor,
        x_fake: &Tensor,
    ) -> Result<Option<PenaltyTerm>> {
        let d_net = &self.d_net;
        let d_forward =
            |g: &mut Graph, x: NodeId| -> Result<NodeId> { d_net.forward_vars(g, d_param_nodes, x) };
        match self.cfg.penalty.variant {
            PenaltyVariant::None => Ok(None),
            PenaltyVariant::CoupledGp => Ok(Some(coupled_penalty(
                g,
                d_forward,
                x_real,
                x_fake,
                self.cfg.penalty.lambda,
                &mut self.penalty_rng,
            )?)),
            PenaltyVariant::DraganSq | PenaltyVariant::DraganHinge | PenaltyVariant::DraganEq1 => {
                Ok(Some(dragan_penalty(
                    g,
                    d_forward,
                    x_real,
                    &self.cfg.penalty,
                    &mut self.penalty_rng,
                )?))
            }
        }
    }

    /// Builds the discriminator loss graph for one batch and returns the
    /// parameter gradients plus logged values.
    fn d_step_grads(
        &mut self,
        x_real: &Tensor,
        x_fake: &Tensor,
    ) -> Result<(Vec<Tensor>, DStepOutcome)> {
        let mut g = Graph::new();
        let d_param_nodes = self.d_net.declare_params(&mut g, "d");
        let xr = g.constant(x_real.clone());
        let xf = g.constant(x_fake.clone());
        let d_real = self.d_net.forward_vars(&mut g, &d_param_nodes, xr)?;
        let d_fake = self.d_net.forward_vars(&mut g, &d_param_nodes, xf)?;

        let d_loss = match self.cfg.objective {
            ObjectiveKind::Vanilla => vanilla_losses(&mut g, d_real, d_fake).d_loss,
            ObjectiveKind::Wgan => wgan_losses(&mut g, d_real, d_fake).d_loss,
            ObjectiveKind::Fgan(kind) => fgan_losses(&mut g, kind, d_real, d_fake).d_loss,
        };

        let pen = self.build_penalty(&mut g, &d_param_nodes, x_real, x_fake)?;
        let total = match &pen {
            Some(p) => g.add(d_loss, p.node),
            None => d_loss,
        };

        let grad_nodes = g.grad(total, &d_param_nodes)?;
        let mut bindings = self.d_net.param_bindings(&d_param_nodes);
        if let Some(p) = &pen {
            bindings.push((p.probe_input, p.probe_value.clone()));
        }
        let mut outputs = vec![d_loss];
        if let Some(p) = &pen {
            outputs.push(p.node);
        }
        outputs.extend_from_slice(&grad_nodes);
        let values = g.eval_many(&outputs, &bindings)?;

        let d_loss_v = values[0].scalar_value();
        let pen_v = if pen.is_some() {
            values[1].scalar_value()
        } else {
            0.0
        };
        let grads = values[if pen.is_some() { 2 } else { 1 }..].to_vec();
        Ok((
            grads,
            DStepOutcome {
                d_loss: d_loss_v,
                penalty: pen_v,
            },
        ))
    }

    /// Builds the generator loss graph (current discriminator embedded as
    /// constants) and returns parameter gradients plus the logged loss.
    fn g_step_grads(&mut self, z: &Tensor) -> Result<(Vec<Tensor>, f64)> {
        let mut g = Graph::new();
        let g_param_nodes = self.g_net.declare_params(&mut g, "g");
        let zn = g.constant(z.clone());
        let x_fake = self.g_net.forward_vars(&mut g, &g_param_nodes, zn)?;
        let d_fake = self.d_net.forward_const(&mut g, x_fake)?;

        let g_loss = match self.cfg.objective {
            ObjectiveKind::Vanilla => {
                if self.cfg.non_saturating {
                    vanilla_nonsaturating_g_loss(&mut g, d_fake)
                } else {
                    // Zero-sum form; the real-batch term carries no gradient
                    // for the generator but keeps g_loss = −d_loss exactly.
                    let xr = g.constant(self.last_real.clone());
                    let d_real = self.d_net.forward_const(&mut g, xr)?;
                    vanilla_losses(&mut g, d_real, d_fake).g_loss
                }
            }
            ObjectiveKind::Wgan => {
                let m = g.mean_all(d_fake);
                g.neg(m)
            }
            ObjectiveKind::Fgan(kind) => {
                let u = fgan_activation(&mut g, kind, d_fake);
                let fstar = fgan_conjugate(&mut g, kind, u);
                let m = g.mean_all(fstar);
                g.neg(m)
            }
        };

        let grad_nodes = g.grad(g_loss, &g_param_nodes)?;
        let bindings = self.g_net.param_bindings(&g_param_nodes);
        let mut outputs = vec![g_loss];
        outputs.extend_from_slice(&grad_nodes);
        let values = g.eval_many(&outputs, &bindings)?;
        Ok((values[1..].to_vec(), values[0].scalar_value()))
    }

    fn apply_d_grads(&mut self, grads: &[Tensor]) -> Result<()> {
        self.d_opt.step(&mut self.d_net.params_mut(), grads)?;
        if self.cfg.objective == ObjectiveKind::Wgan
            && self.cfg.penalty.variant == PenaltyVariant::None
        {
            clip_params(&mut self.d_net.params_mut(), WGAN_CLIP);
        }
        Ok(())
    }

    fn eval_row(&self, g_iter: usize, d: &DStepOutcome, g_loss: f64) -> Result<TrainRow> {
        let grad_norm_real = grad_norm_at_real(&self.d_net, &self.eval_real)?;
        let (covered_modes, hq_fraction) = match self.data.centers() {
            Some((centers, std)) => {
                let fake = self.g_net.apply(&self.eval_z)?;
                let report = mode_coverage(
                    &fake,
                    centers,
                    std,
                    default_min_count(EVAL_SAMPLES, centers.rows()),
                )?;
                (report.covered_modes, report.hq_fraction)
            }
            None => (0, 0.0),
        };
        Ok(TrainRow {
            g_iter,
            d_iter: g_iter * self.d_steps,
            d_loss: d.d_loss,
            g_loss,
            penalty: d.penalty,
            grad_norm_real,
            covered_modes,
            hq_fraction,
            wall_ms: 0,
        })
    }
}

/// Runs one adversarial training game to completion (or failure), invoking
/// `on_eval` at every logged row.
pub fn agd_train_with(
    cfg: &GameConfig,
    mut on_eval: impl FnMut(&EvalEvent),
) -> Result<TrainOutcome> {
    let mut tr = Trainer::new(cfg)?;
    let mut log = TrainLog::default();
    let mut score_series = Vec::new();
    let latent = cfg.generator.latent_dim;

    let eval_marks: Vec<usize> = (1..=cfg.total_g_iters)
        .filter(|i| i % cfg.eval_interval == 0 || *i == cfg.total_g_iters)
        .collect();

    'training: for g_iter in 1..=cfg.total_g_iters {
        let step = |tr: &mut Trainer| -> Result<(DStepOutcome, f64)> {
            match cfg.update_mode {
                UpdateMode::Alternating => {
                    let mut last = DStepOutcome {
                        d_loss: 0.0,
                        penalty: 0.0,
                    };
                    for _ in 0..tr.d_steps {
                        let x_real = tr.data.sample(cfg.batch_size, &mut tr.data_rng);
                        let z = sample_noise(cfg.batch_size, latent, &mut tr.noise_rng);
                        let x_fake = tr.g_net.apply(&z)?;
                        let (grads, out) = tr.d_step_grads(&x_real, &x_fake)?;
                        tr.apply_d_grads(&grads)?;
                        tr.last_real = x_real;
                        last = out;
                    }
                    let z = sample_noise(cfg.batch_size, latent, &mut tr.noise_rng);
                    let (g_grads, g_loss) = tr.g_step_grads(&z)?;
                    tr.g_opt.step(&mut tr.g_net.params_mut(), &g_grads)?;
                    Ok((last, g_loss))
                }
                UpdateMode::Simultaneous => {
                    // One shared snapshot: both gradients come from the same
                    // batch and the same parameter values, then both apply.
                    let x_real = tr.data.sample(cfg.batch_size, &mut tr.data_rng);
                    let z = sample_noise(cfg.batch_size, latent, &mut tr.noise_rng);
                    let x_fake = tr.g_net.apply(&z)?;
                    tr.last_real = x_real.clone();
                    let (d_grads, out) = tr.d_step_grads(&x_real, &x_fake)?;
                    let (g_grads, g_loss) = tr.g_step_grads(&z)?;
                    tr.apply_d_grads(&d_grads)?;
                    tr.g_opt.step(&mut tr.g_net.params_mut(), &g_grads)?;
                    Ok((out, g_loss))
                }
            }
        };

        let (d_out, g_loss) = match step(&mut tr) {
            Ok(v) => v,
            Err(e) => {
                log.failed = Some(Failure {
                    g_iter,
                    reason: e.to_string(),
                });
                break 'training;
            }
        };

        if !(d_out.d_loss.is_finite() && d_out.penalty.is_finite() && g_loss.is_finite()) {
            log.failed = Some(Failure {
                g_iter,
                reason: format!(
                    "non-finite loss (d={}, g={}, penalty={})",
                    d_out.d_loss, g_loss, d_out.penalty
                ),
            });
            break 'training;
        }

        if g_iter % cfg.eval_interval == 0 || g_iter == cfg.total_g_iters {
            let row = match tr.eval_row(g_iter, &d_out, g_loss) {
                Ok(r) => r,
                Err(e) => {
                    log.failed = Some(Failure {
                        g_iter,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            };
            score_series.push((g_iter as f64, row.covered_modes as f64 + row.hq_fraction));
            on_eval(&EvalEvent {
                row: &row,
                generator: &tr.g_net,
                discriminator: &tr.d_net,
            });
            log.rows.push(row);
        }
    }

    if let Some(f) = &log.failed {
        // Score 0 from the failure point onward.
        for mark in eval_marks {
            if mark >= f.g_iter {
                score_series.push((mark as f64, 0.0));
            }
        }
    }

    Ok(TrainOutcome {
        log,
        generator: tr.g_net,
        discriminator: tr.d_net,
        score_series,
    })
}

/// [`agd_train_with`] without an eval callback.
pub fn agd_train(cfg: &GameConfig) -> Result<TrainOutcome> {
    agd_train_with(cfg, |_| {})
}
