//! Central-difference gradients, used as an independent oracle for the
//! analytic adjoint rules.

use super::{Graph, NodeId, Op, Tensor};
use crate::{Error, Result};

/// Numerically differentiates `output` (a scalar node) with respect to the
/// input node `wrt` by central differences with step `h`, holding all other
/// bindings fixed. `wrt` must appear in `bindings`.
///
/// This runs two full evaluations per element of `wrt`, so it is strictly a
/// test/diagnostic tool, not a training path.
pub fn finite_diff_grad(
    g: &Graph,
    output: NodeId,
    wrt: NodeId,
    bindings: &[(NodeId, Tensor)],
    h: f64,
) -> Result<Tensor> {
    if g.shape_of(output) != (1, 1) {
        let (r, c) = g.shape_of(output);
        return Err(Error::NonScalarOutput(format!(
            "node {} of shape [{r},{c}]",
            output.0
        )));
    }
    if !matches!(g.node(wrt).op, Op::Input { .. }) {
        return Err(Error::Config(format!(
            "finite differences need an input node to perturb, node {} is not one",
            wrt.0
        )));
    }
    let base = bindings
        .iter()
        .find(|(n, _)| *n == wrt)
        .map(|(_, t)| t.clone())
        .ok_or_else(|| Error::UnboundInput(format!("node {} (finite differences)", wrt.0)))?;

    let mut out = Tensor::zeros(base.rows(), base.cols());
    for idx in 0..base.data().len() {
        let eval_at = |v: f64| -> Result<f64> {
            let mut shifted = base.clone();
            shifted.data_mut()[idx] = v;
            let binds: Vec<(NodeId, Tensor)> = bindings
                .iter()
                .map(|(n, t)| {
                    if *n == wrt {
                        (*n, shifted.clone())
                    } else {
                        (*n, t.clone())
                    }
                })
                .collect();
            Ok(g.eval(output, &binds)?.scalar_value())
        };
        let x0 = base.data()[idx];
        let fp = eval_at(x0 + h)?;
        let fm = eval_at(x0 - h)?;
        out.data_mut()[idx] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Relative error with an absolute floor: `|a-b| / max(1, |a|, |b|)`.
/// The floor makes near-zero comparisons behave like absolute error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Largest [`rel_err`] over two equally shaped tensors.
pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_rel_err on mismatched shapes");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| rel_err(x, y))
        .fold(0.0, f64::max)
}
