//! Randomized finite-difference verification of the graph engine.
//!
//! Two layers of checking:
//! - first order: gradients of a scalar network output with respect to every
//!   parameter tensor and the input batch, on randomly drawn architectures;
//! - second order: gradients of each gradient-penalty variant with respect to
//!   discriminator parameters (the penalty itself already contains one
//!   differentiation, so this exercises grad-of-grad).
//!
//! Shared by the `gradcheck` CLI command and the test suite so both report
//! the same numbers.

use crate::diffgraph::finite_diff::{finite_diff_grad, max_rel_err};
use crate::diffgraph::{Graph, Tensor};
use crate::nets::{ArchSpec, HiddenActivation, InitScheme, Mlp, OutputActivation};
use crate::penalties::{coupled_penalty, dragan_penalty, PenaltyConfig, PenaltyVariant};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest acceptable relative error for first-order gradients.
pub const FIRST_ORDER_TOL: f64 = 1e-4;
/// Largest acceptable relative error for penalty (second-order) gradients.
pub const SECOND_ORDER_TOL: f64 = 1e-3;

const FD_STEP: f64 = 1e-5;

/// Outcome of one randomized verification run.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub first_order_cases: usize,
    pub max_first_order_err: f64,
    /// `(variant label, cases, max relative error)` per penalty variant.
    pub second_order: Vec<(String, usize, f64)>,
}

impl GradcheckReport {
    pub fn max_second_order_err(&self) -> f64 {
        self.second_order
            .iter()
            .map(|(_, _, e)| *e)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_first_order_err <= FIRST_ORDER_TOL
            && self.max_second_order_err() <= SECOND_ORDER_TOL
    }
}

const HIDDENS: [HiddenActivation; 3] = [
    HiddenActivation::Relu,
    HiddenActivation::LeakyRelu,
    HiddenActivation::Tanh,
];
const OUTPUTS: [OutputActivation; 3] = [
    OutputActivation::Identity,
    OutputActivation::Sigmoid,
    OutputActivation::Tanh,
];

/// Draws a deliberately small architecture: finite differences cost two graph
/// evaluations per scalar parameter, so widths stay single-digit.
fn small_arch(rng: &mut ChaCha8Rng) -> ArchSpec {
    let depth = rng.random_range(1..=3);
    ArchSpec {
        family: "mlp".to_string(),
        depth,
        widths: (0..depth).map(|_| rng.random_range(3..=8)).collect(),
        hidden_activation: HIDDENS[rng.random_range(0..3)],
        output_activation: OUTPUTS[rng.random_range(0..3)],
        latent_dim: 2,
    }
}

fn random_batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Smallest |pre-activation| over the kinked (relu/leaky) hidden layers of
/// `net` run on `x`. Central differences step across the kink when this is
/// of the order of the step size, so such draws must be rejected. Returns
/// infinity for kink-free networks.
fn min_abs_kink_preactivation(net: &Mlp, x: &Tensor) -> f64 {
    let kinked = matches!(
        net.hidden_activation,
        HiddenActivation::Relu | HiddenActivation::LeakyRelu
    );
    let mut h = x.clone();
    let mut closest = f64::INFINITY;
    let last = net.weights.len() - 1;
    for (li, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let z = Tensor::from_fn(h.rows(), w.rows(), |i, j| {
            let mut acc = b.get(0, j);
            for k in 0..h.cols() {
                acc += h.get(i, k) * w.get(j, k);
            }
            acc
        });
        if li < last {
            if kinked {
                for v in z.data() {
                    closest = closest.min(v.abs());
                }
            }
            h = match net.hidden_activation {
                HiddenActivation::Relu => z.map(|v| v.max(0.0)),
                HiddenActivation::LeakyRelu => {
                    z.map(|v| if v > 0.0 { v } else { crate::nets::LEAKY_SLOPE * v })
                }
                HiddenActivation::Tanh => z.map(f64::tanh),
            };
        }
        // The output layer's activations (identity/sigmoid/tanh) are smooth,
        // so nothing to scan there.
    }
    closest
}

/// Checks `d/dparams` and `d/dx` of `mean(net(x))` on one random case.
/// Draws whose relu/leaky pre-activations come within `1e-3` of the kink are
/// redrawn: the finite-difference probe (step `1e-5`) would straddle the
/// kink and measure the subgradient mixture instead of the branch.
fn first_order_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (net, x_val) = loop {
        let spec = small_arch(rng);
        let in_dim = rng.random_range(2..=4);
        let out_dim = rng.random_range(1..=3);
        let scheme = match spec.hidden_activation {
            HiddenActivation::Tanh => InitScheme::Xavier,
            _ => InitScheme::He,
        };
        let net = Mlp::init(&spec, in_dim, out_dim, scheme, rng)?;
        let x_val = random_batch(rng.random_range(1..=3), in_dim, rng);
        if min_abs_kink_preactivation(&net, &x_val) > 1e-3 {
            break (net, x_val);
        }
    };

    let mut g = Graph::new();
    let params = net.declare_params(&mut g, "p");
    let x = g.input("x", x_val.rows(), x_val.cols());
    let y = net.forward_vars(&mut g, &params, x)?;
    let out = g.mean_all(y);

    let mut wrt = params.clone();
    wrt.push(x);
    let grads = g.grad(out, &wrt)?;

    let mut binds = net.param_bindings(&params);
    binds.push((x, x_val));
    let analytic = g.eval_many(&grads, &binds)?;

    let mut worst = 0.0_f64;
    for (node, a) in wrt.iter().zip(analytic.iter()) {
        let numeric = finite_diff_grad(&g, out, *node, &binds, FD_STEP)?;
        worst = worst.max(max_rel_err(a, &numeric));
    }
    Ok(worst)
}

/// Checks `d/dparams` of one penalty variant on one random discriminator.
/// Cases whose probe points land near a relu/leaky kink, or (for the hinge
/// variant) near the hinge threshold itself, are redrawn for the same reason
/// as in the first-order checks.
fn second_order_case(variant: PenaltyVariant, rng: &mut ChaCha8Rng) -> Result<f64> {
    loop {
        let depth = rng.random_range(1..=2);
        let spec = ArchSpec {
            family: "mlp".to_string(),
            depth,
            widths: (0..depth).map(|_| rng.random_range(3..=6)).collect(),
            hidden_activation: HIDDENS[rng.random_range(0..3)],
            // Sigmoid heads keep the gradient field smooth; identity heads
            // match critic-style use. Both must differentiate cleanly.
            output_activation: if rng.random_range(0..2) == 0 {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Identity
            },
            latent_dim: 2,
        };
        let d = Mlp::init(&spec, 2, 1, InitScheme::He, rng)?;
        let rows = rng.random_range(2..=3);
        let x_real = random_batch(rows, 2, rng);

        let mut g = Graph::new();
        let params = d.declare_params(&mut g, "d");
        let term = match variant {
            PenaltyVariant::CoupledGp => {
                let x_fake = random_batch(rows, 2, rng);
                coupled_penalty(
                    &mut g,
                    |g, x| d.forward_vars(g, &params, x),
                    &x_real,
                    &x_fake,
                    10.0,
                    rng,
                )?
            }
            v => {
                let cfg = PenaltyConfig {
                    variant: v,
                    lambda: 10.0,
                    k: 1.0,
                    c: rng.random_range(0.05..=0.8),
                };
                dragan_penalty(&mut g, |g, x| d.forward_vars(g, &params, x), &x_real, &cfg, rng)?
            }
        };
        if min_abs_kink_preactivation(&d, &term.probe_value) <= 1e-3 {
            continue;
        }

        let mut binds = d.param_bindings(&params);
        binds.push((term.probe_input, term.probe_value.clone()));

        if variant == PenaltyVariant::DraganHinge {
            let sq = g.eval(term.grad_sq_rows, &binds)?;
            if sq.data().iter().any(|v| (*v - 1.0).abs() <= 1e-3) {
                continue;
            }
        }

        let grads = g.grad(term.node, &params)?;
        let analytic = g.eval_many(&grads, &binds)?;

        let mut worst = 0.0_f64;
        for (node, a) in params.iter().zip(analytic.iter()) {
            let numeric = finite_diff_grad(&g, term.node, *node, &binds, FD_STEP)?;
            worst = worst.max(max_rel_err(a, &numeric));
        }
        return Ok(worst);
    }
}

/// Runs `first_order_cases` random first-order checks plus a fixed number of
/// second-order checks per penalty variant, and reports the worst relative
/// errors seen. Deterministic for a given `(first_order_cases, seed)` pair.
pub fn run_gradcheck(first_order_cases: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut max_first = 0.0_f64;
    for _ in 0..first_order_cases {
        max_first = max_first.max(first_order_case(&mut rng)?);
    }

    const SECOND_ORDER_CASES: usize = 8;
    let variants = [
        PenaltyVariant::DraganSq,
        PenaltyVariant::DraganHinge,
        PenaltyVariant::DraganEq1,
        PenaltyVariant::CoupledGp,
    ];
    let mut second_order = Vec::new();
    for v in variants {
        let mut worst = 0.0_f64;
        for _ in 0..SECOND_ORDER_CASES {
            worst = worst.max(second_order_case(v, &mut rng)?);
        }
        let label = match v {
            PenaltyVariant::DraganSq => "dragan_sq",
            PenaltyVariant::DraganHinge => "dragan_hinge",
            PenaltyVariant::DraganEq1 => "dragan_eq1",
            PenaltyVariant::CoupledGp => "coupled_gp",
            PenaltyVariant::None => "none",
        };
        second_order.push((label.to_string(), SECOND_ORDER_CASES, worst));
    }

    Ok(GradcheckReport {
        first_order_cases,
        max_first_order_err: max_first,
        second_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randomized_suite_meets_both_tolerances() {
        let report = run_gradcheck(25, 7).expect("suite runs");
        assert!(
            report.max_first_order_err <= FIRST_ORDER_TOL,
            "first-order error {} above tolerance",
            report.max_first_order_err
        );
        assert!(
            report.max_second_order_err() <= SECOND_ORDER_TOL,
            "second-order error {} above tolerance",
            report.max_second_order_err()
        );
        assert!(report.passed());
        assert_eq!(report.second_order.len(), 4, "one entry per penalty variant");
    }

    #[test]
    fn report_is_deterministic_for_a_fixed_seed() {
        let a = run_gradcheck(5, 11).expect("first run");
        let b = run_gradcheck(5, 11).expect("second run");
        assert_eq!(a.max_first_order_err, b.max_first_order_err);
        assert_eq!(
            a.max_second_order_err(),
            b.max_second_order_err(),
            "same seed must reproduce identical worst-case errors"
        );
    }
}
