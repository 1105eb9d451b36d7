//! Plain multilayer perceptrons with explicit parameter tensors.
//!
//! Networks here are deliberately simple: affine layers, one hidden
//! activation, one output activation, no normalization. What matters for the
//! experiments is that (a) forward passes can be built into a
//! [`Graph`](crate::diffgraph::Graph) with parameters either as constants or
//! as differentiable inputs, (b) initialization is deterministic given an RNG
//! stream, and (c) models round-trip through a documented checkpoint format.

use crate::diffgraph::{Graph, NodeId, Tensor};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Slope used by all leaky-ReLU activations.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    LeakyRelu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Tanh,
}

/// Weight initialization schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Normal with std `sqrt(2 / fan_in)`.
    He,
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
}

/// Hidden-layer architecture description. Input and output dimensions are
/// supplied at init time (they follow from the dataset and the network's
/// role), so the same spec can describe a generator or a discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    /// Pool label this spec was drawn from (`mlp`, `wide_mlp`, `deep_mlp`).
    pub family: String,
    /// Number of hidden layers, 1..=4.
    pub depth: usize,
    /// Hidden widths, one per hidden layer (`widths.len() == depth`).
    pub widths: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    /// Input dimension when the network is used as a generator.
    pub latent_dim: usize,
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 4 {
            return Err(Error::Config(format!(
                "invalid architecture: depth {} outside 1..=4",
                self.depth
            )));
        }
        if self.widths.len() != self.depth {
            return Err(Error::Config(format!(
                "invalid architecture: {} widths for depth {}",
                self.widths.len(),
                self.depth
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("invalid architecture: zero-width layer".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("invalid architecture: latent_dim 0".into()));
        }
        Ok(())
    }
}

/// A fully materialized MLP: `weights[i]` has shape
/// `layer_sizes[i+1] x layer_sizes[i]` and `biases[i]` is a `[1, layer_sizes[i+1]]`
/// row added to every example.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl Mlp {
    /// Initializes a network of shape `in_dim -> widths... -> out_dim` with
    /// the given scheme; biases start at zero. Weights are drawn layer by
    /// layer in row-major order, so the result is a pure function of the RNG
    /// stream position.
    pub fn init(
        spec: &ArchSpec,
        in_dim: usize,
        out_dim: usize,
        init: InitScheme,
        rng: &mut impl Rng,
    ) -> Result<Mlp> {
        spec.validate()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("invalid architecture: zero-width layer".into()));
        }
        let mut layer_sizes = Vec::with_capacity(spec.depth + 2);
        layer_sizes.push(in_dim);
        layer_sizes.extend_from_slice(&spec.widths);
        layer_sizes.push(out_dim);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let w = match init {
                InitScheme::He => {
                    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                        .expect("he std is positive and finite");
                    Tensor::from_fn(fan_out, fan_in, |_, _| dist.sample(rng))
                }
                InitScheme::Xavier => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(fan_out, fan_in, |_, _| rng.random_range(-a..=a))
                }
            };
            weights.push(w);
            biases.push(Tensor::zeros(1, fan_out));
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            hidden_activation: spec.hidden_activation,
            output_activation: spec.output_activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layer sizes")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    /// Parameter tensors in update order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(self.biases.iter()) {
            v.push(w);
            v.push(b);
        }
        v
    }

    /// Mutable view in the same order as [`Mlp::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v
    }

    // ---- value-level forward --------------------------------------------

    /// Pure forward pass on concrete values (no graph). `x` is `[n, in_dim]`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "forward input has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut h = x.clone();
        for l in 0..n_layers {
            let pre = h.matmul(&self.weights[l].transpose());
            let mut z = pre.zip(&self.biases[l].broadcast_to(pre.rows(), pre.cols()), |a, b| a + b);
            z = if l + 1 < n_layers {
                match self.hidden_activation {
                    HiddenActivation::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
                    HiddenActivation::LeakyRelu => {
                        z.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
                    }
                    HiddenActivation::Tanh => z.map(f64::tanh),
                }
            } else {
                match self.output_activation {
                    OutputActivation::Identity => z,
                    OutputActivation::Sigmoid => z.map(|v| {
                        let y = 1.0 / (1.0 + (-v).exp());
                        y.clamp(
                            crate::diffgraph::SIGMOID_CLAMP,
                            1.0 - crate::diffgraph::SIGMOID_CLAMP,
                        )
                    }),
                    OutputActivation::Tanh => z.map(f64::tanh),
                }
            };
            h = z;
        }
        Ok(h)
    }

    // ---- graph-level forward ---------------------------------------------

    /// Declares one input node per parameter tensor (order `w0, b0, ...`),
    /// named `{prefix}_w{i}` / `{prefix}_b{i}` so evaluation errors point at
    /// the right network.
    pub fn declare_params(&self, g: &mut Graph, prefix: &str) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(2 * self.weights.len());
        for (i, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            nodes.push(g.input(&format!("{prefix}_w{i}"), w.rows(), w.cols()));
            nodes.push(g.input(&format!("{prefix}_b{i}"), b.rows(), b.cols()));
        }
        nodes
    }

    /// Bindings pairing [`Mlp::declare_params`] nodes with current values.
    pub fn param_bindings(&self, nodes: &[NodeId]) -> Vec<(NodeId, Tensor)> {
        assert_eq!(nodes.len(), 2 * self.weights.len(), "param node count");
        self.params()
            .into_iter()
            .zip(nodes.iter())
            .map(|(t, n)| (*n, t.clone()))
            .collect()
    }

    /// Appends the forward chain with parameters taken from `param_nodes`
    /// (differentiable path). `x` must be an `[n, in_dim]` node.
    pub fn forward_vars(
        &self,
        g: &mut Graph,
        param_nodes: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId> {
        self.forward_impl(g, Some(param_nodes), x)
    }

    /// Appends the forward chain with parameters embedded as constants
    /// (no gradient flows into the network).
    pub fn forward_const(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        self.forward_impl(g, None, x)
    }

    fn forward_impl(
        &self,
        g: &mut Graph,
        param_nodes: Option<&[NodeId]>,
        x: NodeId,
    ) -> Result<NodeId> {
        let (n, in_cols) = g.shape_of(x);
        if in_cols != self.in_dim() {
            return Err(Error::Shape(format!(
                "forward input node has {} columns, network expects {}",
                in_cols,
                self.in_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut h = x;
        for l in 0..n_layers {
            let (w, b) = match param_nodes {
                Some(nodes) => (nodes[2 * l], nodes[2 * l + 1]),
                None => (
                    g.constant(self.weights[l].clone()),
                    g.constant(self.biases[l].clone()),
                ),
            };
            let wt = g.transpose(w);
            let pre = g.matmul(h, wt);
            let out_w = self.layer_sizes[l + 1];
            let bb = g.broadcast(b, n, out_w);
            let z = g.add(pre, bb);
            h = if l + 1 < n_layers {
                match self.hidden_activation {
                    HiddenActivation::Relu => g.relu(z),
                    HiddenActivation::LeakyRelu => g.leaky_relu(z, LEAKY_SLOPE),
                    HiddenActivation::Tanh => g.tanh(z),
                }
            } else {
                match self.output_activation {
                    OutputActivation::Identity => z,
                    OutputActivation::Sigmoid => g.sigmoid(z),
                    OutputActivation::Tanh => g.tanh(z),
                }
            };
        }
        Ok(h)
    }

    // ---- checkpoint I/O ----------------------------------------------------
    //
    // Line-oriented text format (see README):
    //   mlp-checkpoint v1
    //   layer_sizes <s0> <s1> ...
    //   hidden_activation <relu|leaky_relu|tanh>
    //   output_activation <identity|sigmoid|tanh>
    //   tensor <name> <rows> <cols>
    //   <one row of `cols` floats per line, %.16e>
    //   ... (tensors in order w0 b0 w1 b1 ...)
    //   end
    // %.16e prints 17 significant digits, which round-trips f64 exactly.

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        s.push_str("mlp-checkpoint v1\n");
        s.push_str("layer_sizes");
        for sz in &self.layer_sizes {
            write!(s, " {sz}").expect("write to string");
        }
        s.push('\n');
        writeln!(
            s,
            "hidden_activation {}",
            activation_label_hidden(self.hidden_activation)
        )
        .expect("write to string");
        writeln!(
            s,
            "output_activation {}",
            activation_label_output(self.output_activation)
        )
        .expect("write to string");
        for (i, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            write_tensor(&mut s, &format!("w{i}"), w);
            write_tensor(&mut s, &format!("b{i}"), b);
        }
        s.push_str("end\n");
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Parse(format!("checkpoint {}: {msg}", path.display()));

        if lines.next() != Some("mlp-checkpoint v1") {
            return Err(bad("missing 'mlp-checkpoint v1' header"));
        }
        let sizes_line = lines.next().ok_or_else(|| bad("missing layer_sizes"))?;
        let mut parts = sizes_line.split_whitespace();
        if parts.next() != Some("layer_sizes") {
            return Err(bad("expected layer_sizes line"));
        }
        let layer_sizes: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| bad("bad layer size")))
            .collect::<Result<_>>()?;
        if layer_sizes.len() < 2 {
            return Err(bad("need at least two layer sizes"));
        }

        let hidden_activation = match lines
            .next()
            .and_then(|l| l.strip_prefix("hidden_activation "))
        {
            Some("relu") => HiddenActivation::Relu,
            Some("leaky_relu") => HiddenActivation::LeakyRelu,
            Some("tanh") => HiddenActivation::Tanh,
            _ => return Err(bad("bad hidden_activation")),
        };
        let output_activation = match lines
            .next()
            .and_then(|l| l.strip_prefix("output_activation "))
        {
            Some("identity") => OutputActivation::Identity,
            Some("sigmoid") => OutputActivation::Sigmoid,
            Some("tanh") => OutputActivation::Tanh,
            _ => return Err(bad("bad output_activation")),
        };

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let w = read_tensor(&mut lines, &format!("w{l}"), fan_out, fan_in, &bad)?;
            let b = read_tensor(&mut lines, &format!("b{l}"), 1, fan_out, &bad)?;
            weights.push(w);
            biases.push(b);
        }
        if lines.next() != Some("end") {
            return Err(bad("missing 'end' trailer"));
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }
}

fn activation_label_hidden(a: HiddenActivation) -> &'static str {
    match a {
        HiddenActivation::Relu => "relu",
        HiddenActivation::LeakyRelu => "leaky_relu",
        HiddenActivation::Tanh => "tanh",
    }
}

fn activation_label_output(a: OutputActivation) -> &'static str {
    match a {
        OutputActivation::Identity => "identity",
        OutputActivation::Sigmoid => "sigmoid",
        OutputActivation::Tanh => "tanh",
    }
}

fn write_tensor(s: &mut String, name: &str, t: &Tensor) {
    writeln!(s, "tensor {name} {} {}", t.rows(), t.cols()).expect("write to string");
    for i in 0..t.rows() {
        let row = t.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            write!(s, "{v:.16e}").expect("write to string");
        }
        s.push('\n');
    }
}

fn read_tensor<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    name: &str,
    rows: usize,
    cols: usize,
    bad: &impl Fn(&str) -> Error,
) -> Result<Tensor> {
    let header = lines.next().ok_or_else(|| bad("unexpected EOF"))?;
    let expect = format!("tensor {name} {rows} {cols}");
    if header != expect {
        return Err(bad(&format!("expected '{expect}', got '{header}'")));
    }
    let mut t = Tensor::zeros(rows, cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| bad("unexpected EOF in tensor"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|p| p.parse().map_err(|_| bad("bad float")))
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(bad(&format!(
                "tensor {name} row {i} has {} values, want {cols}",
                vals.len()
            )));
        }
        for (j, v) in vals.into_iter().enumerate() {
            t.set(i, j, v);
        }
    }
    Ok(t)
}

// ---- random architecture pool ---------------------------------------------

/// Default weighted pool: the heavier conv-style families of the original
/// benchmark are mapped onto MLP variants at the same frequencies.
pub fn default_arch_pool() -> Vec<(String, f64)> {
    vec![
        ("wide_mlp".to_string(), 0.6),
        ("deep_mlp".to_string(), 0.2),
        ("mlp".to_string(), 0.2),
    ]
}

/// Draws a random [`ArchSpec`] from a weighted family pool.
///
/// Families only bias the draw: `wide_mlp` restricts widths to {128, 256},
/// `deep_mlp` restricts depth to {3, 4}, `mlp` draws depth uniformly in 1..=4
/// and widths uniformly from {32, 64, 128, 256}. Hidden activation is uniform
/// over relu / leaky_relu / tanh; output activation is set by the caller for
/// the network's role and defaults to identity here.
///
/// Draw order (family, depth, widths, activation) is fixed; the result is a
/// pure function of the RNG stream position.
pub fn sample_arch(pool: &[(String, f64)], rng: &mut impl Rng) -> Result<ArchSpec> {
    if pool.is_empty() {
        return Err(Error::Empty("architecture pool".into()));
    }
    let total: f64 = pool.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Config("pool weights must sum to a positive value".into()));
    }
    let mut u = rng.random::<f64>() * total;
    let mut family = &pool[pool.len() - 1].0;
    for (name, w) in pool {
        if u < *w {
            family = name;
            break;
        }
        u -= w;
    }

    const ALL_WIDTHS: [usize; 4] = [32, 64, 128, 256];
    const WIDE_WIDTHS: [usize; 2] = [128, 256];
    let (depth, width_choices): (usize, &[usize]) = match family.as_str() {
        "mlp" => (rng.random_range(1..=4), &ALL_WIDTHS),
        "wide_mlp" => (rng.random_range(1..=4), &WIDE_WIDTHS),
        "deep_mlp" => (rng.random_range(3..=4), &ALL_WIDTHS),
        other => {
            return Err(Error::Config(format!(
                "unknown architecture family '{other}'"
            )))
        }
    };
    let widths: Vec<usize> = (0..depth)
        .map(|_| width_choices[rng.random_range(0..width_choices.len())])
        .collect();
    let hidden_activation = match rng.random_range(0..3) {
        0 => HiddenActivation::Relu,
        1 => HiddenActivation::LeakyRelu,
        _ => HiddenActivation::Tanh,
    };
    Ok(ArchSpec {
        family: family.clone(),
        depth,
        widths,
        hidden_activation,
        output_activation: OutputActivation::Identity,
        latent_dim: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(widths: &[usize], hidden: HiddenActivation, out: OutputActivation) -> ArchSpec {
        ArchSpec {
            family: "mlp".to_string(),
            depth: widths.len(),
            widths: widths.to_vec(),
            hidden_activation: hidden,
            output_activation: out,
            latent_dim: 2,
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let s = spec(&[32], HiddenActivation::Relu, OutputActivation::Identity);
        let a = Mlp::init(&s, 2, 2, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Mlp::init(&s, 2, 2, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_weights_stay_within_bounds() {
        let s = spec(&[64], HiddenActivation::Tanh, OutputActivation::Identity);
        let m = Mlp::init(&s, 8, 4, InitScheme::Xavier, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (l, w) in m.weights.iter().enumerate() {
            let (fan_out, fan_in) = w.shape();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(
                w.data().iter().all(|v| v.abs() <= a),
                "layer {l} exceeds xavier bound {a}"
            );
        }
    }

    #[test]
    fn he_init_std_matches_formula_within_10_percent() {
        let s = spec(&[100], HiddenActivation::Relu, OutputActivation::Identity);
        let m = Mlp::init(&s, 1000, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let w = &m.weights[0]; // 100 x 1000 = 1e5 draws, fan_in 1000
        let n = w.data().len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let want = (2.0 / 1000.0_f64).sqrt();
        assert!(
            (var.sqrt() - want).abs() / want < 0.1,
            "std {} vs expected {want}",
            var.sqrt()
        );
    }

    #[test]
    fn zero_width_layer_is_rejected() {
        let s = spec(&[0], HiddenActivation::Relu, OutputActivation::Identity);
        assert!(Mlp::init(&s, 2, 2, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_parameter_outputs_match_output_activation_fixed_points() {
        let s = spec(&[8], HiddenActivation::Relu, OutputActivation::Tanh);
        let mut m = Mlp::init(&s, 2, 3, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for w in m.params_mut() {
            *w = Tensor::zeros(w.rows(), w.cols());
        }
        let x = Tensor::new(2, 2, vec![0.3, -0.4, 1.0, 2.0]);
        let y = m.apply(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0), "tanh(0) = 0");

        m.output_activation = OutputActivation::Sigmoid;
        let y = m.apply(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5), "sigmoid(0) = 0.5");
    }

    #[test]
    fn hand_set_weights_give_hand_computed_output() {
        // 2 -> 2 (relu) -> 1, W0 = I, b0 = [0.5, -0.5], W1 = [1 1], b1 = 0.
        // x = [1, -1]: pre = [1.5, -1.5], relu = [1.5, 0], out = 1.5.
        let s = spec(&[2], HiddenActivation::Relu, OutputActivation::Identity);
        let mut m = Mlp::init(&s, 2, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        m.weights[0] = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        m.biases[0] = Tensor::new(1, 2, vec![0.5, -0.5]);
        m.weights[1] = Tensor::new(1, 2, vec![1.0, 1.0]);
        m.biases[1] = Tensor::new(1, 1, vec![0.0]);
        let y = m.apply(&Tensor::new(1, 2, vec![1.0, -1.0])).unwrap();
        assert_eq!(y.scalar_value(), 1.5);
    }

    #[test]
    fn input_dimension_mismatch_is_a_shape_error() {
        let s = spec(&[4], HiddenActivation::Relu, OutputActivation::Identity);
        let m = Mlp::init(&s, 3, 1, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            m.apply(&Tensor::zeros(5, 2)),
            Err(Error::Shape(_))
        ));
        let mut g = Graph::new();
        let x = g.input("x", 5, 2);
        assert!(matches!(m.forward_const(&mut g, x), Err(Error::Shape(_))));
    }

    #[test]
    fn graph_forward_agrees_with_value_forward() {
        let s = spec(&[16, 8], HiddenActivation::LeakyRelu, OutputActivation::Sigmoid);
        let m = Mlp::init(&s, 3, 2, InitScheme::He, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let x = Tensor::from_fn(4, 3, |i, j| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3);

        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let out_const = m.forward_const(&mut g, xn).unwrap();
        let v1 = g.eval(out_const, &[]).unwrap();

        let params = m.declare_params(&mut g, "d");
        let out_vars = m.forward_vars(&mut g, &params, xn).unwrap();
        let v2 = g.eval(out_vars, &m.param_bindings(&params)).unwrap();

        let v3 = m.apply(&x).unwrap();
        assert_eq!(v1, v3);
        assert_eq!(v2, v3);
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_forward_bits() {
        let s = spec(&[32, 16], HiddenActivation::Tanh, OutputActivation::Identity);
        let m = Mlp::init(&s, 2, 2, InitScheme::Xavier, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save(&path).unwrap();
        let loaded = Mlp::load(&path).unwrap();
        assert_eq!(m, loaded);
        let x = Tensor::from_fn(7, 2, |i, j| (i * 2 + j) as f64 * 0.137 - 0.5);
        assert_eq!(m.apply(&x).unwrap(), loaded.apply(&x).unwrap());
    }

    #[test]
    fn corrupt_checkpoint_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "mlp-checkpoint v1\nlayer_sizes 2 2\nnonsense\n").unwrap();
        assert!(matches!(Mlp::load(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn single_family_pool_always_draws_that_family() {
        let pool = vec![("deep_mlp".to_string(), 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = sample_arch(&pool, &mut rng).unwrap();
            assert_eq!(s.family, "deep_mlp");
            assert!(s.depth >= 3 && s.depth <= 4);
            s.validate().unwrap();
        }
    }

    #[test]
    fn arch_sampler_is_deterministic_per_seed() {
        let pool = default_arch_pool();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_arch(&pool, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(123), seq(123));
        assert_ne!(seq(123), seq(124));
    }

    #[test]
    fn family_frequencies_match_pool_weights() {
        let pool = default_arch_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = std::collections::HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            let s = sample_arch(&pool, &mut rng).unwrap();
            *counts.entry(s.family).or_insert(0usize) += 1;
        }
        for (name, weight) in &pool {
            let freq = counts[name] as f64 / n as f64;
            assert!(
                (freq - weight).abs() < 0.02,
                "family {name}: frequency {freq} vs weight {weight}"
            );
        }
    }

    #[test]
    fn sampled_widths_and_depths_respect_family_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let wide = vec![("wide_mlp".to_string(), 1.0)];
        for _ in 0..50 {
            let s = sample_arch(&wide, &mut rng).unwrap();
            assert!(s.widths.iter().all(|w| *w == 128 || *w == 256));
        }
        let plain = vec![("mlp".to_string(), 1.0)];
        for _ in 0..50 {
            let s = sample_arch(&plain, &mut rng).unwrap();
            assert!(s
                .widths
                .iter()
                .all(|w| [32, 64, 128, 256].contains(w)));
            assert!((1..=4).contains(&s.depth));
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(sample_arch(&[], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
