//! First-order parameter updates: plain SGD and bias-corrected Adam.
//!
//! One [`Optimizer`] instance owns the moment state for one player's
//! parameter list; the training loop keeps separate instances for the
//! generator and the discriminator.

use crate::diffgraph::Tensor;
use crate::harness::config::OptimizerConfig;
use crate::{Error, Result};

/// Per-tensor first and second moment accumulators.
#[derive(Clone, Debug)]
struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

/// A stateful update rule bound to one list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    adam: Option<AdamState>,
    /// Steps taken so far; Adam bias correction uses `t = step + 1`.
    step: usize,
}

impl Optimizer {
    /// `shapes` must list the parameter tensors in the same order later
    /// passed to [`Optimizer::step`].
    pub fn new(cfg: OptimizerConfig, shapes: &[(usize, usize)]) -> Optimizer {
        let adam = match cfg {
            OptimizerConfig::Adam { .. } => Some(AdamState {
                m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
                v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            }),
            OptimizerConfig::Sgd { .. } => None,
        };
        Optimizer {
            cfg,
            adam,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Applies one update in place. Rejects non-finite gradients before
    /// touching any parameter, so a failed step never corrupts the model.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "optimizer got {} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient {i} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient for parameter tensor {i}")));
            }
        }
        self.step += 1;
        match self.cfg {
            OptimizerConfig::Sgd { eta } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= eta * gv;
                    }
                }
            }
            OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                eps,
            } => {
                let state = self.adam.as_mut().expect("adam config carries adam state");
                let t = self.step as i32;
                let bias1 = 1.0 - beta1.powi(t);
                let bias2 = 1.0 - beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(state.m.iter_mut().zip(state.v.iter_mut()))
                {
                    let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
                    for i in 0..pd.len() {
                        let gv = g.data()[i];
                        md[i] = beta1 * md[i] + (1.0 - beta1) * gv;
                        vd[i] = beta2 * vd[i] + (1.0 - beta2) * gv * gv;
                        let m_hat = md[i] / bias1;
                        let v_hat = vd[i] / bias2;
                        pd[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Clamp every parameter entry into `[-bound, bound]`; the weight-clipping
/// rule of the original Wasserstein critic.
pub fn clip_params(params: &mut [&mut Tensor], bound: f64) {
    for p in params.iter_mut() {
        for v in p.data_mut() {
            *v = v.clamp(-bound, bound);
        }
    }
}
