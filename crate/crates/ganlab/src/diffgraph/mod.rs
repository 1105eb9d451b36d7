//! Reverse-mode autodiff on an append-only expression graph.
//!
//! A [`Graph`] is a flat list of [`Node`]s; every operation references its
//! parents by [`NodeId`], and parents always have smaller ids than their
//! children, so the graph is acyclic by construction. Evaluation is a single
//! forward sweep in id order over the nodes an output actually depends on.
//!
//! Differentiation ([`Graph::grad`]) walks ancestors of a scalar output in
//! reverse id order and *appends new nodes* implementing each adjoint rule.
//! Because gradients are ordinary nodes, calling `grad` on an expression that
//! was itself produced by `grad` yields second derivatives — exactly what a
//! gradient penalty needs when it is differentiated with respect to network
//! parameters.

pub mod finite_diff;
mod tensor;

pub use tensor::Tensor;

use crate::{Error, Result};
use std::collections::HashMap;

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Sigmoid outputs are clamped to `[CLAMP, 1 - CLAMP]` so that the
/// cross-entropy losses built on top of them never take `log` of 0.
pub const SIGMOID_CLAMP: f64 = 1e-7;

/// One operation in the graph. Parents are earlier nodes.
#[derive(Clone, Debug)]
pub enum Op {
    /// Placeholder bound to a concrete tensor at evaluation time.
    Input { name: String },
    /// Fixed tensor embedded in the graph.
    Constant(Tensor),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Sum of all elements, producing `[1,1]`.
    SumAll(NodeId),
    /// Mean of all elements, producing `[1,1]`.
    MeanAll(NodeId),
    /// Per-row sums, `[r,c] -> [r,1]`.
    RowSum(NodeId),
    /// Per-column sums, `[r,c] -> [1,c]`.
    ColSum(NodeId),
    /// Repeats a `[1,1]`, `[r,1]` or `[1,c]` tensor up to this node's shape.
    Broadcast(NodeId),
    /// `max(0, x)`; the derivative at exactly 0 is taken to be 0.
    Relu(NodeId),
    /// `x` for `x > 0`, `slope * x` otherwise.
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    /// Logistic function with outputs clamped to `[SIGMOID_CLAMP, 1-SIGMOID_CLAMP]`.
    Sigmoid(NodeId),
    Exp(NodeId),
    /// Natural log; evaluation fails on non-positive inputs.
    Log(NodeId),
    Square(NodeId),
    /// Square root; evaluation fails on negative inputs.
    Sqrt(NodeId),
    /// `s * x` for a compile-time scalar `s`.
    Scale(NodeId, f64),
    /// `x + s` for a compile-time scalar `s`.
    Shift(NodeId, f64),
    /// `pos` where `x > 0`, `nonpos` elsewhere. Carries no gradient; this is
    /// how the piecewise-linear activations expose their slopes to the
    /// adjoint rules without creating spurious second derivatives.
    Mask { x: NodeId, pos: f64, nonpos: f64 },
}

impl Op {
    fn for_each_parent(&self, mut f: impl FnMut(NodeId)) {
        use Op::*;
        match self {
            Input { .. } | Constant(_) => {}
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => {
                f(*a);
                f(*b);
            }
            Neg(a) | Transpose(a) | SumAll(a) | MeanAll(a) | RowSum(a) | ColSum(a)
            | Broadcast(a) | Relu(a) | LeakyRelu(a, _) | Tanh(a) | Sigmoid(a) | Exp(a)
            | Log(a) | Square(a) | Sqrt(a) | Scale(a, _) | Shift(a, _) | Mask { x: a, .. } => {
                f(*a)
            }
        }
    }
}

/// An operation plus its statically known output shape.
#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub shape: (usize, usize),
}

/// Append-only expression graph. See the module docs for the evaluation and
/// differentiation model.
#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape_of(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    fn push(&mut self, op: Op, shape: (usize, usize)) -> NodeId {
        op.for_each_parent(|p| {
            assert!(
                p.0 < self.nodes.len(),
                "parent node {} does not exist yet",
                p.0
            )
        });
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    // ---- leaf builders ---------------------------------------------------

    /// Declares a named placeholder of fixed shape, to be bound at eval time.
    pub fn input(&mut self, name: &str, rows: usize, cols: usize) -> NodeId {
        self.push(
            Op::Input {
                name: name.to_string(),
            },
            (rows, cols),
        )
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape();
        self.push(Op::Constant(t), shape)
    }

    /// `[1,1]` constant.
    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    // ---- binary builders (strict shape equality, no implicit broadcast) ---

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> (usize, usize) {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        assert_eq!(
            sa, sb,
            "{what} of mismatched shapes [{},{}] and [{},{}] (nodes {} and {})",
            sa.0, sa.1, sb.0, sb.1, a.0, b.0
        );
        sa
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b, "add");
        self.push(Op::Add(a, b), s)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b, "sub");
        self.push(Op::Sub(a, b), s)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b, "mul");
        self.push(Op::Mul(a, b), s)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b, "div");
        self.push(Op::Div(a, b), s)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let ((m, k), (k2, n)) = (self.shape_of(a), self.shape_of(b));
        assert_eq!(
            k, k2,
            "matmul of [{m},{k}] with [{k2},{n}] (nodes {} and {})",
            a.0, b.0
        );
        self.push(Op::MatMul(a, b), (m, n))
    }

    // ---- unary builders ----------------------------------------------------

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Neg(a), s)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape_of(a);
        self.push(Op::Transpose(a), (c, r))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumAll(a), (1, 1))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::MeanAll(a), (1, 1))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (r, _) = self.shape_of(a);
        self.push(Op::RowSum(a), (r, 1))
    }

    pub fn col_sum(&mut self, a: NodeId) -> NodeId {
        let (_, c) = self.shape_of(a);
        self.push(Op::ColSum(a), (1, c))
    }

    /// Expands `a` (shape `[1,1]`, `[rows,1]`, or `[1,cols]`) to `[rows,cols]`.
    pub fn broadcast(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let s = self.shape_of(a);
        let ok = s == (1, 1) || (s.1 == 1 && s.0 == rows) || (s.0 == 1 && s.1 == cols);
        assert!(
            ok,
            "cannot broadcast [{},{}] to [{rows},{cols}] (node {})",
            s.0, s.1, a.0
        );
        self.push(Op::Broadcast(a), (rows, cols))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Relu(a), s)
    }

    /// Alias for [`Graph::relu`]: elementwise `max(0, x)`, named for its use
    /// in hinge-style losses rather than as an activation.
    pub fn max0(&mut self, a: NodeId) -> NodeId {
        self.relu(a)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::LeakyRelu(a, slope), s)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Tanh(a), s)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Sigmoid(a), s)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Exp(a), s)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Log(a), s)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Square(a), s)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Sqrt(a), s)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let sh = self.shape_of(a);
        self.push(Op::Scale(a, s), sh)
    }

    pub fn shift(&mut self, a: NodeId, s: f64) -> NodeId {
        let sh = self.shape_of(a);
        self.push(Op::Shift(a, s), sh)
    }

    fn mask(&mut self, x: NodeId, pos: f64, nonpos: f64) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::Mask { x, pos, nonpos }, s)
    }

    // ---- composites --------------------------------------------------------

    /// Per-row Euclidean norm `sqrt(sum_j x_ij^2 + eps)`, shape `[r,1]`.
    ///
    /// A small `eps` keeps the norm differentiable at the origin (the exact
    /// norm has unbounded derivative there); pass `eps = 0.0` when only the
    /// value is needed.
    pub fn row_l2norm(&mut self, a: NodeId, eps: f64) -> NodeId {
        let sq = self.square(a);
        let ss = self.row_sum(sq);
        let shifted = self.shift(ss, eps);
        self.sqrt(shifted)
    }

    /// Per-row squared Euclidean norm, shape `[r,1]`.
    pub fn row_sq_norm(&mut self, a: NodeId) -> NodeId {
        let sq = self.square(a);
        self.row_sum(sq)
    }

    // ---- evaluation --------------------------------------------------------

    /// Evaluates `outputs` with the given input bindings, computing only the
    /// nodes they depend on. Fails if a required input is unbound, a binding
    /// has the wrong shape or targets a non-input node, or a value leaves an
    /// operation's domain.
    pub fn eval_many(
        &self,
        outputs: &[NodeId],
        bindings: &[(NodeId, Tensor)],
    ) -> Result<Vec<Tensor>> {
        let bound: HashMap<usize, &Tensor> = bindings.iter().map(|(n, t)| (n.0, t)).collect();
        for (id, t) in bindings {
            match &self.nodes[id.0].op {
                Op::Input { name } => {
                    if t.shape() != self.nodes[id.0].shape {
                        let (dr, dc) = self.nodes[id.0].shape;
                        return Err(Error::Shape(format!(
                            "input '{name}' (node {}) declared [{dr},{dc}] but bound [{},{}]",
                            id.0,
                            t.rows(),
                            t.cols()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "binding targets node {} which is not an input",
                        id.0
                    )))
                }
            }
        }

        // Liveness: restrict the forward sweep to ancestors of the outputs.
        let mut needed = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = outputs.iter().map(|n| n.0).collect();
        while let Some(i) = stack.pop() {
            if needed[i] {
                continue;
            }
            needed[i] = true;
            self.nodes[i].op.for_each_parent(|p| stack.push(p.0));
        }

        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if !needed[i] {
                continue;
            }
            let v = self.compute(i, &values, &bound)?;
            values[i] = Some(v);
        }
        Ok(outputs
            .iter()
            .map(|n| values[n.0].clone().expect("requested node was computed"))
            .collect())
    }

    /// Single-output convenience wrapper over [`Graph::eval_many`].
    pub fn eval(&self, output: NodeId, bindings: &[(NodeId, Tensor)]) -> Result<Tensor> {
        Ok(self.eval_many(&[output], bindings)?.pop().expect("one output"))
    }

    fn compute(
        &self,
        i: usize,
        values: &[Option<Tensor>],
        bound: &HashMap<usize, &Tensor>,
    ) -> Result<Tensor> {
        use Op::*;
        let val = |n: &NodeId| values[n.0].as_ref().expect("parent evaluated before child");
        let node = &self.nodes[i];
        let out = match &node.op {
            Input { name } => match bound.get(&i) {
                Some(t) => (*t).clone(),
                None => return Err(Error::UnboundInput(format!("'{name}' (node {i})"))),
            },
            Constant(t) => t.clone(),
            Add(a, b) => val(a).zip(val(b), |x, y| x + y),
            Sub(a, b) => val(a).zip(val(b), |x, y| x - y),
            Mul(a, b) => val(a).zip(val(b), |x, y| x * y),
            Div(a, b) => val(a).zip(val(b), |x, y| x / y),
            Neg(a) => val(a).map(|x| -x),
            MatMul(a, b) => val(a).matmul(val(b)),
            Transpose(a) => val(a).transpose(),
            SumAll(a) => Tensor::scalar(val(a).sum()),
            MeanAll(a) => Tensor::scalar(val(a).mean()),
            RowSum(a) => val(a).row_sums(),
            ColSum(a) => val(a).col_sums(),
            Broadcast(a) => val(a).broadcast_to(node.shape.0, node.shape.1),
            Relu(a) => val(a).map(|x| if x > 0.0 { x } else { 0.0 }),
            LeakyRelu(a, s) => {
                let s = *s;
                val(a).map(|x| if x > 0.0 { x } else { s * x })
            }
            Tanh(a) => val(a).map(f64::tanh),
            Sigmoid(a) => val(a).map(|x| {
                let y = 1.0 / (1.0 + (-x).exp());
                y.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
            }),
            Exp(a) => val(a).map(f64::exp),
            Log(a) => {
                let t = val(a);
                if let Some(bad) = t.data().iter().find(|&&x| x <= 0.0) {
                    return Err(Error::Domain(format!(
                        "log of non-positive value {bad} at node {i}"
                    )));
                }
                t.map(f64::ln)
            }
            Square(a) => val(a).map(|x| x * x),
            Sqrt(a) => {
                let t = val(a);
                if let Some(bad) = t.data().iter().find(|&&x| x < 0.0) {
                    return Err(Error::Domain(format!(
                        "sqrt of negative value {bad} at node {i}"
                    )));
                }
                t.map(f64::sqrt)
            }
            Scale(a, s) => {
                let s = *s;
                val(a).map(|x| s * x)
            }
            Shift(a, s) => {
                let s = *s;
                val(a).map(|x| x + s)
            }
            Mask { x, pos, nonpos } => {
                let (pos, nonpos) = (*pos, *nonpos);
                val(x).map(|v| if v > 0.0 { pos } else { nonpos })
            }
        };
        debug_assert_eq!(out.shape(), node.shape, "shape rule broken at node {i}");
        Ok(out)
    }

    // ---- differentiation ----------------------------------------------------

    /// Appends nodes computing `d output / d wrt[k]` for every requested node
    /// and returns their ids in order.
    ///
    /// `output` must be scalar (`[1,1]`). Each returned gradient has the shape
    /// of its `wrt` node; a node the output does not depend on yields a zero
    /// constant. The returned nodes are regular graph expressions, so they can
    /// be combined further and differentiated again (second derivatives).
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let oshape = self.shape_of(output);
        if oshape != (1, 1) {
            return Err(Error::NonScalarOutput(format!(
                "node {} of shape [{},{}]",
                output.0, oshape.0, oshape.1
            )));
        }

        // Only ancestors of `output` receive adjoints.
        let mut ancestor = vec![false; output.0 + 1];
        let mut stack = vec![output.0];
        while let Some(i) = stack.pop() {
            if ancestor[i] {
                continue;
            }
            ancestor[i] = true;
            self.nodes[i].op.for_each_parent(|p| stack.push(p.0));
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; output.0 + 1];
        adjoint[output.0] = Some(self.scalar(1.0));

        for i in (0..=output.0).rev() {
            if !ancestor[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            self.accumulate_vjps(i, g, &mut adjoint);
        }

        Ok(wrt
            .iter()
            .map(|w| {
                adjoint
                    .get(w.0)
                    .copied()
                    .flatten()
                    .unwrap_or_else(|| {
                        let (r, c) = self.shape_of(*w);
                        self.constant(Tensor::zeros(r, c))
                    })
            })
            .collect())
    }

    /// Adds node `i`'s vector-Jacobian products (upstream adjoint `g`) into
    /// the adjoints of its parents.
    fn accumulate_vjps(&mut self, i: usize, g: NodeId, adjoint: &mut [Option<NodeId>]) {
        use Op::*;
        let y = NodeId(i); // forward value, reused by several rules
        match self.nodes[i].op.clone() {
            Input { .. } | Constant(_) | Mask { .. } => {}
            Add(a, b) => {
                self.acc(adjoint, a, g);
                self.acc(adjoint, b, g);
            }
            Sub(a, b) => {
                self.acc(adjoint, a, g);
                let n = self.neg(g);
                self.acc(adjoint, b, n);
            }
            Mul(a, b) => {
                let da = self.mul(g, b);
                self.acc(adjoint, a, da);
                let db = self.mul(g, a);
                self.acc(adjoint, b, db);
            }
            Div(a, b) => {
                let da = self.div(g, b);
                self.acc(adjoint, a, da);
                // d(a/b)/db = -a/b^2 = -y/b
                let gy = self.mul(g, y);
                let q = self.div(gy, b);
                let db = self.neg(q);
                self.acc(adjoint, b, db);
            }
            Neg(a) => {
                let d = self.neg(g);
                self.acc(adjoint, a, d);
            }
            MatMul(a, b) => {
                let bt = self.transpose(b);
                let da = self.matmul(g, bt);
                self.acc(adjoint, a, da);
                let at = self.transpose(a);
                let db = self.matmul(at, g);
                self.acc(adjoint, b, db);
            }
            Transpose(a) => {
                let d = self.transpose(g);
                self.acc(adjoint, a, d);
            }
            SumAll(a) => {
                let (r, c) = self.shape_of(a);
                let d = self.broadcast(g, r, c);
                self.acc(adjoint, a, d);
            }
            MeanAll(a) => {
                let (r, c) = self.shape_of(a);
                let b = self.broadcast(g, r, c);
                let d = self.scale(b, 1.0 / (r * c) as f64);
                self.acc(adjoint, a, d);
            }
            RowSum(a) | ColSum(a) => {
                let (r, c) = self.shape_of(a);
                let d = self.broadcast(g, r, c);
                self.acc(adjoint, a, d);
            }
            Broadcast(a) => {
                let d = match self.shape_of(a) {
                    (1, 1) => self.sum_all(g),
                    (_, 1) => self.row_sum(g),
                    (1, _) => self.col_sum(g),
                    s => unreachable!("broadcast from invalid shape {s:?}"),
                };
                self.acc(adjoint, a, d);
            }
            Relu(a) => {
                let m = self.mask(a, 1.0, 0.0);
                let d = self.mul(g, m);
                self.acc(adjoint, a, d);
            }
            LeakyRelu(a, slope) => {
                let m = self.mask(a, 1.0, slope);
                let d = self.mul(g, m);
                self.acc(adjoint, a, d);
            }
            Tanh(a) => {
                // 1 - y^2
                let y2 = self.square(y);
                let ny2 = self.neg(y2);
                let one_m = self.shift(ny2, 1.0);
                let d = self.mul(g, one_m);
                self.acc(adjoint, a, d);
            }
            Sigmoid(a) => {
                // y (1 - y)
                let ny = self.neg(y);
                let one_m = self.shift(ny, 1.0);
                let yy = self.mul(y, one_m);
                let d = self.mul(g, yy);
                self.acc(adjoint, a, d);
            }
            Exp(a) => {
                let d = self.mul(g, y);
                self.acc(adjoint, a, d);
            }
            Log(a) => {
                let d = self.div(g, a);
                self.acc(adjoint, a, d);
            }
            Square(a) => {
                let ga = self.mul(g, a);
                let d = self.scale(ga, 2.0);
                self.acc(adjoint, a, d);
            }
            Sqrt(a) => {
                // 1 / (2 sqrt(x)) = 1/(2y)
                let q = self.div(g, y);
                let d = self.scale(q, 0.5);
                self.acc(adjoint, a, d);
            }
            Scale(a, s) => {
                let d = self.scale(g, s);
                self.acc(adjoint, a, d);
            }
            Shift(a, _) => {
                self.acc(adjoint, a, g);
            }
        }
    }

    fn acc(&mut self, adjoint: &mut [Option<NodeId>], parent: NodeId, delta: NodeId) {
        adjoint[parent.0] = Some(match adjoint[parent.0] {
            None => delta,
            Some(existing) => self.add(existing, delta),
        });
    }
}
