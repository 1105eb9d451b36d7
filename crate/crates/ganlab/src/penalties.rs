//! Discriminator gradient penalties.
//!
//! All variants measure `g = ∇ₓ D(x̃)` at probe points `x̃` and turn the
//! per-example gradient norms into a scalar regularizer that is added to the
//! discriminator loss only. Because [`Graph::grad`] emits graph nodes, the
//! returned penalty is itself differentiable with respect to the
//! discriminator parameters — the training step takes gradients *through*
//! these gradient norms.
//!
//! The local family perturbs real points with Gaussian noise (the probe cloud
//! depends only on the real batch), while the coupled variant probes random
//! interpolates between real and fake pairs, tying the constraint to the
//! current generator.

use crate::diffgraph::{Graph, NodeId, Tensor};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Added inside the square root of the per-example gradient norm so the norm
/// stays differentiable when a gradient vanishes exactly.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyVariant {
    None,
    /// `λ · mean(‖g‖²)`
    DraganSq,
    /// `λ · mean(max(0, ‖g‖² − k))`
    DraganHinge,
    /// `λ · mean((‖g‖ − k)²)`
    DraganEq1,
    /// `λ · mean((‖∇ₓD(x̂)‖ − 1)²)` on real/fake interpolates.
    CoupledGp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub variant: PenaltyVariant,
    /// Penalty weight.
    pub lambda: f64,
    /// Target norm (ignored by `dragan_sq`; fixed at 1 for `coupled_gp`).
    pub k: f64,
    /// Perturbation covariance scale: probe noise is `N(0, c·I)` per example.
    pub c: f64,
}

impl Default for PenaltyConfig {
    /// The conventional configuration: λ = 10, k = 1, c = 10.
    fn default() -> Self {
        PenaltyConfig {
            variant: PenaltyVariant::DraganEq1,
            lambda: 10.0,
            k: 1.0,
            c: 10.0,
        }
    }
}

impl PenaltyConfig {
    pub fn none() -> Self {
        PenaltyConfig {
            variant: PenaltyVariant::None,
            lambda: 0.0,
            k: 1.0,
            c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("penalty lambda {} invalid", self.lambda)));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::Config(format!("penalty k {} invalid", self.k)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("penalty c {} must be positive", self.c)));
        }
        Ok(())
    }
}

/// A penalty appended to a graph: the scalar node to add to `d_loss`, the
/// probe-point input node with the tensor that must be bound to it, and the
/// per-example squared gradient norms for diagnostics and finiteness checks.
#[derive(Clone, Debug)]
pub struct PenaltyTerm {
    pub node: NodeId,
    pub probe_input: NodeId,
    pub probe_value: Tensor,
    pub grad_sq_rows: NodeId,
}

/// Builds one of the local (perturbed-real) penalties.
///
/// `d_forward` appends the discriminator chain for a given input node; pass a
/// closure over `forward_vars` when the penalty must be differentiable w.r.t.
/// parameters, or over `forward_const` for value-only uses. Draws exactly
/// `n·dim` normals from `rng` (row-major), so the stream position advances
/// deterministically and independently of the fake batch.
pub fn dragan_penalty(
    g: &mut Graph,
    d_forward: impl FnOnce(&mut Graph, NodeId) -> Result<NodeId>,
    x_real: &Tensor,
    cfg: &PenaltyConfig,
    rng: &mut impl Rng,
) -> Result<PenaltyTerm> {
    cfg.validate()?;
    if x_real.rows() == 0 {
        return Err(Error::Empty("penalty real batch".into()));
    }
    let (n, dim) = x_real.shape();
    let noise = Normal::new(0.0, cfg.c.sqrt()).expect("c > 0 was validated");
    let probe_value = Tensor::from_fn(n, dim, |i, j| x_real.get(i, j) + noise.sample(rng));

    let probe_input = g.input("penalty_probe", n, dim);
    let (grad_sq_rows, norm_dev) = probe_gradient_rows(g, d_forward, probe_input)?;
    let node = match cfg.variant {
        PenaltyVariant::DraganSq => {
            let m = g.mean_all(grad_sq_rows);
            g.scale(m, cfg.lambda)
        }
        PenaltyVariant::DraganHinge => {
            let shifted = g.shift(grad_sq_rows, -cfg.k);
            let hinged = g.max0(shifted);
            let m = g.mean_all(hinged);
            g.scale(m, cfg.lambda)
        }
        PenaltyVariant::DraganEq1 => {
            let dev = g.shift(norm_dev, -cfg.k);
            let sq = g.square(dev);
            let m = g.mean_all(sq);
            g.scale(m, cfg.lambda)
        }
        other => {
            return Err(Error::Config(format!(
                "dragan_penalty cannot build variant {other:?}"
            )))
        }
    };
    Ok(PenaltyTerm {
        node,
        probe_input,
        probe_value,
        grad_sq_rows,
    })
}

/// Builds the coupled interpolate penalty `λ·mean((‖∇ₓD(x̂)‖ − 1)²)` with
/// `x̂ = ε·x_real + (1−ε)·x_fake`, one uniform ε per example pair.
pub fn coupled_penalty(
    g: &mut Graph,
    d_forward: impl FnOnce(&mut Graph, NodeId) -> Result<NodeId>,
    x_real: &Tensor,
    x_fake: &Tensor,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<PenaltyTerm> {
    if x_real.shape() != x_fake.shape() {
        return Err(Error::Shape(format!(
            "coupled penalty batches differ: [{},{}] vs [{},{}]",
            x_real.rows(),
            x_real.cols(),
            x_fake.rows(),
            x_fake.cols()
        )));
    }
    if x_real.rows() == 0 {
        return Err(Error::Empty("penalty real batch".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("penalty lambda {lambda} invalid")));
    }
    let (n, dim) = x_real.shape();
    let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let probe_value = Tensor::from_fn(n, dim, |i, j| {
        eps[i] * x_real.get(i, j) + (1.0 - eps[i]) * x_fake.get(i, j)
    });

    let probe_input = g.input("penalty_probe", n, dim);
    let (grad_sq_rows, norms) = probe_gradient_rows(g, d_forward, probe_input)?;
    let dev = g.shift(norms, -1.0);
    let sq = g.square(dev);
    let m = g.mean_all(sq);
    let node = g.scale(m, lambda);
    Ok(PenaltyTerm {
        node,
        probe_input,
        probe_value,
        grad_sq_rows,
    })
}

/// Shared core: runs the discriminator on the probe input, differentiates the
/// summed output back to the probe points (rows are independent, so the
/// result stacks per-example input gradients), and returns the per-example
/// squared norms plus the eps-smoothed norms.
fn probe_gradient_rows(
    g: &mut Graph,
    d_forward: impl FnOnce(&mut Graph, NodeId) -> Result<NodeId>,
    probe_input: NodeId,
) -> Result<(NodeId, NodeId)> {
    let (n, _) = g.shape_of(probe_input);
    let out = d_forward(g, probe_input)?;
    if g.shape_of(out) != (n, 1) {
        let (r, c) = g.shape_of(out);
        return Err(Error::Shape(format!(
            "penalty needs a [{n},1] discriminator output, got [{r},{c}]"
        )));
    }
    let total = g.sum_all(out);
    let grads = g.grad(total, &[probe_input])?[0];
    let grad_sq_rows = g.row_sq_norm(grads);
    let shifted = g.shift(grad_sq_rows, NORM_EPS);
    let norms = g.sqrt(shifted);
    Ok((grad_sq_rows, norms))
}

/// Turns a `[n,1]` tensor of per-example penalty statistics into an error if
/// any entry is NaN or infinite, naming the first offending example.
pub fn report_nonfinite_rows(rows: &Tensor) -> Result<()> {
    for i in 0..rows.rows() {
        let v = rows.get(i, 0);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "non-finite penalty at example {i} (value {v})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgraph::finite_diff::{finite_diff_grad, max_rel_err};
    use crate::nets::{ArchSpec, HiddenActivation, InitScheme, Mlp, OutputActivation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 2-in linear discriminator D(x) = w·x as a plain Mlp (depth-1 graph
    /// via hand-set weights would need a hidden layer, so build it directly).
    fn linear_d(w: [f64; 2]) -> Mlp {
        Mlp {
            layer_sizes: vec![2, 1],
            weights: vec![Tensor::new(1, 2, w.to_vec())],
            biases: vec![Tensor::zeros(1, 1)],
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Identity,
        }
    }

    fn batch() -> Tensor {
        Tensor::from_fn(6, 2, |i, j| (i as f64 - 2.5) * 0.4 + j as f64 * 0.1)
    }

    fn eval_penalty(g: &Graph, term: &PenaltyTerm) -> f64 {
        g.eval(term.node, &[(term.probe_input, term.probe_value.clone())])
            .unwrap()
            .scalar_value()
    }

    #[test]
    fn default_configuration_is_lambda10_k1_c10() {
        let cfg = PenaltyConfig::default();
        assert_eq!(cfg.variant, PenaltyVariant::DraganEq1);
        assert_eq!((cfg.lambda, cfg.k, cfg.c), (10.0, 1.0, 10.0));
    }

    #[test]
    fn constant_discriminator_eq1_penalty_is_lambda_times_k_squared() {
        // Zero gradient field: λ·(0 − k)² = 10.
        let mut d = linear_d([0.3, -0.2]);
        d.weights[0] = Tensor::zeros(1, 2);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let term = dragan_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &batch(),
            &PenaltyConfig::default(),
            &mut rng,
        )
        .unwrap();
        let p = eval_penalty(&g, &term);
        assert!((p - 10.0).abs() < 1e-4, "{p}");
    }

    #[test]
    fn unit_gradient_linear_discriminator_has_zero_eq1_penalty() {
        let d = linear_d([0.6, 0.8]); // ‖w‖ = 1
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let term = dragan_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &batch(),
            &PenaltyConfig::default(),
            &mut rng,
        )
        .unwrap();
        let p = eval_penalty(&g, &term);
        assert!(p.abs() < 1e-12, "{p}");
    }

    #[test]
    fn hinge_penalty_on_norm3_linear_discriminator_is_80() {
        let d = linear_d([3.0, 0.0]); // ‖w‖² = 9
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = PenaltyConfig {
            variant: PenaltyVariant::DraganHinge,
            ..PenaltyConfig::default()
        };
        let term = dragan_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &batch(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        // row_sq is exactly 9, the hinge and mean are exact arithmetic.
        assert_eq!(eval_penalty(&g, &term), 80.0);
    }

    #[test]
    fn hinge_penalty_below_target_is_exactly_zero() {
        let d = linear_d([0.5, 0.0]); // ‖w‖² = 0.25 < k = 1
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = PenaltyConfig {
            variant: PenaltyVariant::DraganHinge,
            ..PenaltyConfig::default()
        };
        let term = dragan_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &batch(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(eval_penalty(&g, &term), 0.0);
    }

    #[test]
    fn sq_penalty_matches_mean_squared_norm_times_lambda() {
        let d = linear_d([1.0, 2.0]); // ‖w‖² = 5 everywhere
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PenaltyConfig {
            variant: PenaltyVariant::DraganSq,
            lambda: 10.0,
            ..PenaltyConfig::default()
        };
        let term = dragan_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &batch(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(eval_penalty(&g, &term), 50.0);
    }

    #[test]
    fn doubling_lambda_doubles_the_penalty_bitwise() {
        let spec = ArchSpec {
            family: "mlp".into(),
            depth: 1,
            widths: vec![8],
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Sigmoid,
            latent_dim: 2,
        };
        let d = Mlp::init(&spec, 2, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let run = |lambda: f64| -> f64 {
            let mut g = Graph::new();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let cfg = PenaltyConfig {
                lambda,
                ..PenaltyConfig::default()
            };
            let term = dragan_penalty(
                &mut g,
                |g, x| d.forward_const(g, x),
                &batch(),
                &cfg,
                &mut rng,
            )
            .unwrap();
            eval_penalty(&g, &term)
        };
        // Same RNG seed → same probe cloud; scaling by 2 is exact in IEEE754.
        assert_eq!(run(20.0), 2.0 * run(10.0));
    }

    #[test]
    fn perturbation_spread_follows_the_covariance_scale() {
        let d = linear_d([1.0, 0.0]);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::zeros(4000, 2);
        let cfg = PenaltyConfig {
            c: 10.0,
            ..PenaltyConfig::default()
        };
        let term = dragan_penalty(&mut g, |g, x| d.forward_const(g, x), &x, &cfg, &mut rng)
            .unwrap();
        let n = term.probe_value.data().len() as f64;
        let mean = term.probe_value.data().iter().sum::<f64>() / n;
        let var = term
            .probe_value
            .data()
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(
            (var.sqrt() - 10.0_f64.sqrt()).abs() / 10.0_f64.sqrt() < 0.05,
            "probe std {} vs sqrt(c) {}",
            var.sqrt(),
            10.0_f64.sqrt()
        );
    }

    #[test]
    fn coupled_penalty_trivial_cases() {
        let unit = linear_d([0.0, 1.0]);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xr = batch();
        let xf = Tensor::from_fn(6, 2, |i, j| -0.3 * (i as f64) + 0.2 * (j as f64));
        let term = coupled_penalty(
            &mut g,
            |g, x| unit.forward_const(g, x),
            &xr,
            &xf,
            10.0,
            &mut rng,
        )
        .unwrap();
        assert!(eval_penalty(&g, &term).abs() < 1e-12);

        let mut constant = linear_d([0.0, 0.0]);
        constant.biases[0] = Tensor::scalar(0.7);
        let mut g = Graph::new();
        let term = coupled_penalty(
            &mut g,
            |g, x| constant.forward_const(g, x),
            &xr,
            &xf,
            10.0,
            &mut rng,
        )
        .unwrap();
        let p = eval_penalty(&g, &term);
        assert!((p - 10.0).abs() < 1e-4, "{p}");
    }

    #[test]
    fn coupled_probes_stay_on_the_segment() {
        let d = linear_d([1.0, 1.0]);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xr = Tensor::from_fn(10, 2, |i, j| (i + j) as f64 * 0.31 - 1.0);
        let xf = Tensor::from_fn(10, 2, |i, j| (i * 2 + j) as f64 * -0.17 + 0.4);
        let term = coupled_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &xr,
            &xf,
            10.0,
            &mut rng,
        )
        .unwrap();
        for i in 0..10 {
            for j in 0..2 {
                let (a, b) = (xr.get(i, j), xf.get(i, j));
                let (lo, hi) = (a.min(b), a.max(b));
                let v = term.probe_value.get(i, j);
                assert!(v >= lo && v <= hi, "probe {v} outside [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn mismatched_coupled_batches_are_a_shape_error() {
        let d = linear_d([1.0, 0.0]);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let err = coupled_penalty(
            &mut g,
            |g, x| d.forward_const(g, x),
            &Tensor::zeros(4, 2),
            &Tensor::zeros(5, 2),
            10.0,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn nonfinite_rows_report_the_offending_example() {
        let rows = Tensor::new(3, 1, vec![1.0, f64::NAN, 2.0]);
        let err = report_nonfinite_rows(&rows).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(err.to_string().contains("example 1"), "{err}");
        assert!(report_nonfinite_rows(&Tensor::new(1, 1, vec![4.0])).is_ok());
    }

    #[test]
    fn empty_batch_and_bad_config_are_rejected() {
        let d = linear_d([1.0, 0.0]);
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(matches!(
            dragan_penalty(
                &mut g,
                |g, x| d.forward_const(g, x),
                &Tensor::zeros(0, 2),
                &PenaltyConfig::default(),
                &mut rng,
            ),
            Err(Error::Empty(_))
        ));
        let bad = PenaltyConfig {
            c: 0.0,
            ..PenaltyConfig::default()
        };
        assert!(matches!(
            dragan_penalty(
                &mut g,
                |g, x| d.forward_const(g, x),
                &batch(),
                &bad,
                &mut rng,
            ),
            Err(Error::Config(_))
        ));
    }

    /// The central property: the penalty node is differentiable with respect
    /// to discriminator parameters, and those second-order gradients agree
    /// with finite differences of the penalty value.
    #[test]
    fn penalty_parameter_gradients_match_finite_differences() {
        let spec = ArchSpec {
            family: "mlp".into(),
            depth: 1,
            widths: vec![5],
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Sigmoid,
            latent_dim: 2,
        };
        let d = Mlp::init(&spec, 2, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        for variant in [
            PenaltyVariant::DraganSq,
            PenaltyVariant::DraganHinge,
            PenaltyVariant::DraganEq1,
        ] {
            let mut g = Graph::new();
            let params = d.declare_params(&mut g, "d");
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let cfg = PenaltyConfig {
                variant,
                k: 0.02, // keep the hinge active at this scale
                ..PenaltyConfig::default()
            };
            let term = dragan_penalty(
                &mut g,
                |g, x| d.forward_vars(g, &params, x),
                &batch(),
                &cfg,
                &mut rng,
            )
            .unwrap();
            let grads = g.grad(term.node, &params).unwrap();

            let mut binds = d.param_bindings(&params);
            binds.push((term.probe_input, term.probe_value.clone()));
            let analytic = g.eval_many(&grads, &binds).unwrap();
            for (i, p) in params.iter().enumerate() {
                let numeric = finite_diff_grad(&g, term.node, *p, &binds, 1e-5).unwrap();
                let err = max_rel_err(&analytic[i], &numeric);
                assert!(
                    err < 1e-6,
                    "{variant:?} param {i}: second-order mismatch {err}"
                );
            }
        }
    }

    #[test]
    fn coupled_parameter_gradients_match_finite_differences() {
        let spec = ArchSpec {
            family: "mlp".into(),
            depth: 1,
            widths: vec![4],
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Identity,
            latent_dim: 2,
        };
        let d = Mlp::init(&spec, 2, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(31)).unwrap();
        let mut g = Graph::new();
        let params = d.declare_params(&mut g, "d");
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let xf = Tensor::from_fn(6, 2, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64));
        let term = coupled_penalty(
            &mut g,
            |g, x| d.forward_vars(g, &params, x),
            &batch(),
            &xf,
            10.0,
            &mut rng,
        )
        .unwrap();
        let grads = g.grad(term.node, &params).unwrap();
        let mut binds = d.param_bindings(&params);
        binds.push((term.probe_input, term.probe_value.clone()));
        let analytic = g.eval_many(&grads, &binds).unwrap();
        for (i, p) in params.iter().enumerate() {
            let numeric = finite_diff_grad(&g, term.node, *p, &binds, 1e-5).unwrap();
            let err = max_rel_err(&analytic[i], &numeric);
            assert!(err < 1e-6, "param {i}: second-order mismatch {err}");
        }
    }
}
