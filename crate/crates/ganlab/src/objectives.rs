//! Adversarial game objectives.
//!
//! Each builder appends loss nodes to a [`Graph`] from discriminator outputs
//! on a real batch and a fake batch. Conventions:
//!
//! - Both players *minimize* their loss.
//! - The cross-entropy ("vanilla") and variational-divergence ("fgan")
//!   objectives are zero-sum: `g_loss` is built as the exact negation of the
//!   discriminator's objective, as graph structure, not as a re-derived
//!   formula.
//! - The generator's saturating loss (`g_loss = -d_loss`) is the default;
//!   the non-saturating alternative used by most practical trainers is a
//!   separate builder selected by a config flag.

use crate::diffgraph::{Graph, NodeId};
use crate::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// The five supported f-divergences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    ForwardKl,
    ReverseKl,
    PearsonChi2,
    SquaredHellinger,
    TotalVariation,
}

impl Divergence {
    pub const ALL: [Divergence; 5] = [
        Divergence::ForwardKl,
        Divergence::ReverseKl,
        Divergence::PearsonChi2,
        Divergence::SquaredHellinger,
        Divergence::TotalVariation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Divergence::ForwardKl => "forward_kl",
            Divergence::ReverseKl => "reverse_kl",
            Divergence::PearsonChi2 => "pearson_chi2",
            Divergence::SquaredHellinger => "squared_hellinger",
            Divergence::TotalVariation => "total_variation",
        }
    }
}

impl FromStr for Divergence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "forward_kl" => Divergence::ForwardKl,
            "reverse_kl" => Divergence::ReverseKl,
            "pearson_chi2" => Divergence::PearsonChi2,
            "squared_hellinger" => Divergence::SquaredHellinger,
            "total_variation" => Divergence::TotalVariation,
            other => return Err(Error::Parse(format!("unknown divergence label '{other}'"))),
        })
    }
}

/// Which game is being played. Stringifies as `vanilla`, `wgan`, or
/// `fgan(<divergence>)` — these exact labels appear in config files and on
/// the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveKind {
    Vanilla,
    Wgan,
    Fgan(Divergence),
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::Vanilla => write!(f, "vanilla"),
            ObjectiveKind::Wgan => write!(f, "wgan"),
            ObjectiveKind::Fgan(d) => write!(f, "fgan({})", d.label()),
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(ObjectiveKind::Vanilla),
            "wgan" => Ok(ObjectiveKind::Wgan),
            other => {
                if let Some(inner) = other.strip_prefix("fgan(").and_then(|r| r.strip_suffix(')')) {
                    Ok(ObjectiveKind::Fgan(inner.parse()?))
                } else {
                    Err(Error::Parse(format!("unknown objective label '{other}'")))
                }
            }
        }
    }
}

impl Serialize for ObjectiveKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ObjectiveKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Loss nodes for the two players; both are scalars to be minimized.
#[derive(Clone, Copy, Debug)]
pub struct LossPair {
    pub d_loss: NodeId,
    pub g_loss: NodeId,
}

// ---- vanilla (cross-entropy) -------------------------------------------------

/// Cross-entropy game on sigmoid discriminator outputs (probabilities in
/// (0,1) after clamping):
/// `d_loss = -mean(log d_real) - mean(log(1 - d_fake))`, `g_loss = -d_loss`.
///
/// The negation is a graph node over the same subexpression, so the zero-sum
/// identity holds exactly, not just to rounding.
pub fn vanilla_losses(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> LossPair {
    let log_r = g.log(d_real);
    let mean_r = g.mean_all(log_r);
    let neg_f = g.neg(d_fake);
    let one_minus_f = g.shift(neg_f, 1.0);
    let log_f = g.log(one_minus_f);
    let mean_f = g.mean_all(log_f);
    let sum = g.add(mean_r, mean_f);
    let d_loss = g.neg(sum);
    let g_loss = g.neg(d_loss);
    LossPair { d_loss, g_loss }
}

/// Non-saturating generator loss `-mean(log d_fake)`: same fixed points as
/// the zero-sum form but with usable gradients when the discriminator wins
/// early. Selected by the `non_saturating` config flag; not the default.
pub fn vanilla_nonsaturating_g_loss(g: &mut Graph, d_fake: NodeId) -> NodeId {
    let log_f = g.log(d_fake);
    let mean_f = g.mean_all(log_f);
    g.neg(mean_f)
}

// ---- wgan ---------------------------------------------------------------------

/// Wasserstein-style game on unbounded (identity-head) discriminator outputs:
/// `d_loss = mean(d_fake) - mean(d_real)`, `g_loss = -mean(d_fake)`.
pub fn wgan_losses(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> LossPair {
    let mean_f = g.mean_all(d_fake);
    let mean_r = g.mean_all(d_real);
    let d_loss = g.sub(mean_f, mean_r);
    let g_loss = g.neg(mean_f);
    LossPair { d_loss, g_loss }
}

// ---- f-divergence family --------------------------------------------------------

/// Output activation `g_f` applied to a raw discriminator output `t`.
pub fn fgan_activation(g: &mut Graph, kind: Divergence, t: NodeId) -> NodeId {
    match kind {
        // g_f(t) = t
        Divergence::ForwardKl | Divergence::PearsonChi2 => t,
        // g_f(t) = -exp(-t)
        Divergence::ReverseKl => {
            let nt = g.neg(t);
            let e = g.exp(nt);
            g.neg(e)
        }
        // g_f(t) = 1 - exp(-t)
        Divergence::SquaredHellinger => {
            let nt = g.neg(t);
            let e = g.exp(nt);
            let ne = g.neg(e);
            g.shift(ne, 1.0)
        }
        // g_f(t) = tanh(t) / 2
        Divergence::TotalVariation => {
            let th = g.tanh(t);
            g.scale(th, 0.5)
        }
    }
}

/// Convex conjugate `f*` evaluated at an activated output `u = g_f(t)`.
/// Domain notes: for reverse KL `u < 0` and for squared Hellinger `u < 1`
/// hold by construction of the matching activation, so the `log` and the
/// division below stay in range when `u` came from [`fgan_activation`].
pub fn fgan_conjugate(g: &mut Graph, kind: Divergence, u: NodeId) -> NodeId {
    match kind {
        // f*(u) = exp(u - 1)
        Divergence::ForwardKl => {
            let um1 = g.shift(u, -1.0);
            g.exp(um1)
        }
        // f*(u) = -1 - log(-u)
        Divergence::ReverseKl => {
            let nu = g.neg(u);
            let l = g.log(nu);
            let nl = g.neg(l);
            g.shift(nl, -1.0)
        }
        // f*(u) = u^2/4 + u
        Divergence::PearsonChi2 => {
            let sq = g.square(u);
            let q = g.scale(sq, 0.25);
            g.add(q, u)
        }
        // f*(u) = u / (1 - u)
        Divergence::SquaredHellinger => {
            let nu = g.neg(u);
            let denom = g.shift(nu, 1.0);
            g.div(u, denom)
        }
        // f*(u) = u
        Divergence::TotalVariation => u,
    }
}

/// The variational objective
/// `F = mean(g_f(t_real)) - mean(f*(g_f(t_fake)))`, which the discriminator
/// drives up and the generator drives down. Exposed separately so callers
/// can check the zero-sum identity `d_loss + F = 0` directly.
pub fn fgan_objective(g: &mut Graph, kind: Divergence, t_real: NodeId, t_fake: NodeId) -> NodeId {
    let u_real = fgan_activation(g, kind, t_real);
    let mean_r = g.mean_all(u_real);
    let u_fake = fgan_activation(g, kind, t_fake);
    let conj = fgan_conjugate(g, kind, u_fake);
    let mean_f = g.mean_all(conj);
    g.sub(mean_r, mean_f)
}

/// Losses for the f-divergence game on raw (pre-activation) outputs:
/// `d_loss = -F` and `g_loss = -mean(f*(g_f(t_fake)))` (the φ-dependent part
/// of `F`; the real-batch term is constant for the generator).
pub fn fgan_losses(g: &mut Graph, kind: Divergence, t_real: NodeId, t_fake: NodeId) -> LossPair {
    let f = fgan_objective(g, kind, t_real, t_fake);
    let d_loss = g.neg(f);
    let u_fake = fgan_activation(g, kind, t_fake);
    let conj = fgan_conjugate(g, kind, u_fake);
    let mean_f = g.mean_all(conj);
    let g_loss = g.neg(mean_f);
    LossPair { d_loss, g_loss }
}
