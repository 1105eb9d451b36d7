//! No-regret dynamics for two-player zero-sum games on box domains.
//!
//! Player 1 (φ) minimizes the payoff `J(φ, θ)`; player 2 (θ) maximizes it,
//! i.e. minimizes the loss `-J`. The module provides the two classic
//! no-regret updates (projected online gradient descent and FTRL with a
//! quadratic regularizer), a ledger that tracks actions, losses, and running
//! average iterates, best-response oracles (closed-form for bilinear games,
//! two-stage grid otherwise), duality gaps, a simultaneous self-play driver,
//! and a Monte-Carlo probe for approximate local equilibrium.
//!
//! The central fact exercised here: if both players run no-regret updates,
//! the *averaged* iterates approach the game value even though the last
//! iterates may cycle forever. Quantitatively, with player regrets `R1` and
//! `R2` after `T` rounds,
//!
//! ```text
//! V* <= max_th J(phi_bar, th)  <= V* + (R1 + R2)/T
//! V* >= min_ph J(ph, theta_bar) >= V* - (R1 + R2)/T
//! max_th J(phi_bar, th) - R2/T <= min_ph J(ph, theta_bar) + R1/T
//! ```
//!
//! so the duality gap of the averages is at most `(R1 + R2)/T`.

use crate::diffgraph::Tensor;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Axis-aligned box `[lo_i, hi_i]` per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("box bounds must be non-empty and equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("box needs finite lo <= hi per dimension".into()));
        }
        Ok(BoxDomain { lo, hi })
    }

    /// `[-bound, bound]^dim`.
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        BoxDomain::new(vec![-bound; dim], vec![bound; dim]).expect("symmetric box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Componentwise projection onto the box.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// Payoff function of a two-player zero-sum game.
pub enum Payoff {
    /// `J(φ, θ) = φᵀ A θ`; admits closed-form best responses over a box.
    Bilinear(Tensor),
    /// Arbitrary payoff; best responses fall back to grid search.
    General(Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

/// A zero-sum game `min_φ max_θ J(φ, θ)` over box strategy sets.
pub struct BoxGame {
    pub payoff: Payoff,
    pub phi_domain: BoxDomain,
    pub theta_domain: BoxDomain,
}

/// Number of coarse grid points per dimension in the general best-response
/// search; the refinement stage shrinks the step by 10x around the argmax,
/// giving a documented tolerance of about 1e-3 on smooth payoffs.
const GRID_COARSE: usize = 101;

impl BoxGame {
    /// The canonical convex-concave toy: `J(φ, θ) = φ·θ` on `[-1,1]²`.
    pub fn scalar_bilinear() -> BoxGame {
        BoxGame {
            payoff: Payoff::Bilinear(Tensor::scalar(1.0)),
            phi_domain: BoxDomain::symmetric(1, 1.0),
            theta_domain: BoxDomain::symmetric(1, 1.0),
        }
    }

    /// True iff closed-form best responses are available.
    pub fn analytic(&self) -> bool {
        matches!(self.payoff, Payoff::Bilinear(_))
    }

    pub fn value(&self, phi: &[f64], theta: &[f64]) -> f64 {
        match &self.payoff {
            Payoff::Bilinear(a) => {
                assert_eq!(phi.len(), a.rows(), "phi dimension");
                assert_eq!(theta.len(), a.cols(), "theta dimension");
                let mut total = 0.0;
                for i in 0..a.rows() {
                    for j in 0..a.cols() {
                        total += phi[i] * a.get(i, j) * theta[j];
                    }
                }
                total
            }
            Payoff::General(f) => f(phi, theta),
        }
    }

    /// `∇_φ J = A θ` (bilinear only).
    pub fn grad_phi(&self, theta: &[f64]) -> Vec<f64> {
        match &self.payoff {
            Payoff::Bilinear(a) => (0..a.rows())
                .map(|i| (0..a.cols()).map(|j| a.get(i, j) * theta[j]).sum())
                .collect(),
            Payoff::General(_) => panic!("grad_phi needs a bilinear payoff"),
        }
    }

    /// `∇_θ J = Aᵀ φ` (bilinear only).
    pub fn grad_theta(&self, phi: &[f64]) -> Vec<f64> {
        match &self.payoff {
            Payoff::Bilinear(a) => (0..a.cols())
                .map(|j| (0..a.rows()).map(|i| a.get(i, j) * phi[i]).sum())
                .collect(),
            Payoff::General(_) => panic!("grad_theta needs a bilinear payoff"),
        }
    }

    /// `argmax_θ J(φ, θ)` with its value.
    pub fn best_response_theta(&self, phi: &[f64]) -> (Vec<f64>, f64) {
        match &self.payoff {
            Payoff::Bilinear(_) => {
                // Linear in θ: optimum at a box vertex chosen per coordinate.
                let coeff = self.grad_theta(phi);
                let mut arg = Vec::with_capacity(coeff.len());
                let mut val = 0.0;
                for (j, c) in coeff.iter().enumerate() {
                    let (lo, hi) = (self.theta_domain.lo[j], self.theta_domain.hi[j]);
                    let x = if *c >= 0.0 { hi } else { lo };
                    arg.push(x);
                    val += c * x;
                }
                (arg, val)
            }
            Payoff::General(_) => {
                grid_optimize(&self.theta_domain, |th| self.value(phi, th), true)
            }
        }
    }

    /// `argmin_φ J(φ, θ)` with its value.
    pub fn best_response_phi(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        match &self.payoff {
            Payoff::Bilinear(_) => {
                let coeff = self.grad_phi(theta);
                let mut arg = Vec::with_capacity(coeff.len());
                let mut val = 0.0;
                for (i, c) in coeff.iter().enumerate() {
                    let (lo, hi) = (self.phi_domain.lo[i], self.phi_domain.hi[i]);
                    let x = if *c >= 0.0 { lo } else { hi };
                    arg.push(x);
                    val += c * x;
                }
                (arg, val)
            }
            Payoff::General(_) => {
                grid_optimize(&self.phi_domain, |ph| self.value(ph, theta), false)
            }
        }
    }

    /// `max_θ J(φ̄, θ) − min_φ J(φ, θ̄)`; zero exactly at an equilibrium and
    /// non-negative up to the grid tolerance for general payoffs.
    pub fn duality_gap(&self, phi_bar: &[f64], theta_bar: &[f64]) -> f64 {
        let (_, hi) = self.best_response_theta(phi_bar);
        let (_, lo) = self.best_response_phi(theta_bar);
        hi - lo
    }
}

/// Two-stage grid extremum search over a box: coarse pass with
/// [`GRID_COARSE`] points per dimension, then one refinement at 10x finer
/// spacing around the incumbent.
fn grid_optimize(
    domain: &BoxDomain,
    f: impl Fn(&[f64]) -> f64,
    maximize: bool,
) -> (Vec<f64>, f64) {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let dim = domain.dim();

    let sweep = |lo: &[f64], hi: &[f64], points: usize| -> (Vec<f64>, f64) {
        let mut idx = vec![0usize; dim];
        let mut best_x = lo.to_vec();
        let mut best_v = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
        let mut x = vec![0.0; dim];
        loop {
            for d in 0..dim {
                let t = idx[d] as f64 / (points - 1) as f64;
                x[d] = lo[d] + t * (hi[d] - lo[d]);
            }
            let v = f(&x);
            if better(v, best_v) {
                best_v = v;
                best_x.copy_from_slice(&x);
            }
            // odometer increment over the dim-dimensional index
            let mut d = 0;
            loop {
                if d == dim {
                    return (best_x, best_v);
                }
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    };

    let (coarse_x, _) = sweep(&domain.lo, &domain.hi, GRID_COARSE);
    // Refine within one coarse cell on each side of the incumbent.
    let mut lo2 = Vec::with_capacity(dim);
    let mut hi2 = Vec::with_capacity(dim);
    for d in 0..dim {
        let step = (domain.hi[d] - domain.lo[d]) / (GRID_COARSE - 1) as f64;
        lo2.push((coarse_x[d] - step).max(domain.lo[d]));
        hi2.push((coarse_x[d] + step).min(domain.hi[d]));
    }
    sweep(&lo2, &hi2, 21)
}

// ---- no-regret updates -----------------------------------------------------

/// Projected online gradient descent: `Π_box(k − eta·g)`.
pub fn ogd_step(k: &[f64], g: &[f64], eta: f64, domain: &BoxDomain) -> Result<Vec<f64>> {
    if k.len() != g.len() || k.len() != domain.dim() {
        return Err(Error::Shape(format!(
            "ogd_step dimensions: k {}, g {}, box {}",
            k.len(),
            g.len(),
            domain.dim()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!("ogd eta {eta} must be positive")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ogd gradient".into()));
    }
    let moved: Vec<f64> = k.iter().zip(g).map(|(x, gi)| x - eta * gi).collect();
    Ok(domain.project(&moved))
}

/// Follow-the-regularized-leader with the quadratic regularizer
/// `Ω(k) = ‖k‖²/2`: on linearized losses the closed form is
/// `Π_box(−eta · Σ_s g_s)` (lazy projected OGD).
pub fn ftrl_step(grad_history: &[Vec<f64>], eta: f64, domain: &BoxDomain) -> Result<Vec<f64>> {
    let first = grad_history
        .first()
        .ok_or_else(|| Error::Empty("ftrl gradient history".into()))?;
    if first.len() != domain.dim() {
        return Err(Error::Shape("ftrl gradient dimension".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!("ftrl eta {eta} must be positive")));
    }
    let mut sum = vec![0.0; domain.dim()];
    for g in grad_history {
        if g.len() != domain.dim() {
            return Err(Error::Shape("ftrl gradient dimension".into()));
        }
        for (s, v) in sum.iter_mut().zip(g) {
            if !v.is_finite() {
                return Err(Error::NonFinite("ftrl gradient".into()));
            }
            *s += v;
        }
    }
    let point: Vec<f64> = sum.iter().map(|s| -eta * s).collect();
    Ok(domain.project(&point))
}

// ---- regret accounting --------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    One,
    Two,
}

/// Per-round record of actions and losses for both players, with running
/// averages maintained incrementally.
#[derive(Clone, Debug, Default)]
pub struct RegretLedger {
    actions1: Vec<Vec<f64>>,
    actions2: Vec<Vec<f64>>,
    losses1: Vec<f64>,
    losses2: Vec<f64>,
    cum_loss1: f64,
    cum_loss2: f64,
    avg1: Vec<f64>,
    avg2: Vec<f64>,
}

impl RegretLedger {
    pub fn new() -> Self {
        RegretLedger::default()
    }

    pub fn record(&mut self, a1: &[f64], a2: &[f64], loss1: f64, loss2: f64) {
        let t = self.actions1.len() as f64;
        if self.avg1.is_empty() {
            self.avg1 = vec![0.0; a1.len()];
            self.avg2 = vec![0.0; a2.len()];
        }
        for (m, x) in self.avg1.iter_mut().zip(a1) {
            *m += (x - *m) / (t + 1.0);
        }
        for (m, x) in self.avg2.iter_mut().zip(a2) {
            *m += (x - *m) / (t + 1.0);
        }
        self.actions1.push(a1.to_vec());
        self.actions2.push(a2.to_vec());
        self.losses1.push(loss1);
        self.losses2.push(loss2);
        self.cum_loss1 += loss1;
        self.cum_loss2 += loss2;
    }

    pub fn rounds(&self) -> usize {
        self.actions1.len()
    }

    pub fn actions(&self, player: Player) -> &[Vec<f64>] {
        match player {
            Player::One => &self.actions1,
            Player::Two => &self.actions2,
        }
    }

    pub fn cumulative_loss(&self, player: Player) -> f64 {
        match player {
            Player::One => self.cum_loss1,
            Player::Two => self.cum_loss2,
        }
    }

    /// Running-mean iterate of a player's actions.
    pub fn averaged(&self, player: Player) -> &[f64] {
        match player {
            Player::One => &self.avg1,
            Player::Two => &self.avg2,
        }
    }

    /// Regret after the recorded rounds: cumulative loss minus the loss of
    /// the best fixed action, the latter supplied by an oracle (closed-form
    /// for linear/bilinear losses, grid search otherwise). May be negative
    /// in general; it is returned unmodified.
    pub fn regret(&self, player: Player, best_fixed_loss: f64) -> Result<f64> {
        if self.rounds() == 0 {
            return Err(Error::Empty("regret on empty history".into()));
        }
        Ok(self.cumulative_loss(player) - best_fixed_loss)
    }
}

/// Best fixed-action cumulative loss for self-play on a bilinear game:
/// player 1's round-t loss is `J(·, θ_t)` and player 2's is `−J(φ_t, ·)`,
/// both linear in the fixed action, so the optimum sits at a box vertex
/// determined by the summed opponent actions.
pub fn bilinear_best_fixed_loss(
    game: &BoxGame,
    ledger: &RegretLedger,
    player: Player,
) -> Result<f64> {
    if ledger.rounds() == 0 {
        return Err(Error::Empty("best fixed action on empty history".into()));
    }
    if !game.analytic() {
        return Err(Error::Config("closed-form oracle needs a bilinear payoff".into()));
    }
    let sum_of = |hist: &[Vec<f64>]| -> Vec<f64> {
        let mut s = vec![0.0; hist[0].len()];
        for a in hist {
            for (si, x) in s.iter_mut().zip(a) {
                *si += x;
            }
        }
        s
    };
    match player {
        // min over fixed φ of Σ_t J(φ, θ_t) = min_φ φᵀ A (Σ_t θ_t)
        Player::One => {
            let sum_theta = sum_of(ledger.actions(Player::Two));
            let coeff = game.grad_phi(&sum_theta);
            Ok(coeff
                .iter()
                .zip(game.phi_domain.lo.iter().zip(&game.phi_domain.hi))
                .map(|(c, (lo, hi))| (c * lo).min(c * hi))
                .sum())
        }
        // min over fixed θ of Σ_t −J(φ_t, θ) = −max_θ (Σ_t φ_t)ᵀ A θ
        Player::Two => {
            let sum_phi = sum_of(ledger.actions(Player::One));
            let coeff = game.grad_theta(&sum_phi);
            Ok(-coeff
                .iter()
                .zip(game.theta_domain.lo.iter().zip(&game.theta_domain.hi))
                .map(|(c, (lo, hi))| (c * lo).max(c * hi))
                .sum::<f64>())
        }
    }
}

// ---- self-play driver --------------------------------------------------------

/// Step-size schedule for the no-regret updates.
#[derive(Clone, Copy, Debug)]
pub enum EtaSchedule {
    /// `eta_t = eta0 / sqrt(t)`, the standard no-regret choice.
    InvSqrt(f64),
    Constant(f64),
}

impl EtaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            EtaSchedule::InvSqrt(e0) => e0 / (t as f64).sqrt(),
            EtaSchedule::Constant(e) => *e,
        }
    }
}

/// One logged checkpoint of a self-play run.
#[derive(Clone, Debug)]
pub struct SelfPlayRow {
    pub round: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi_bar: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub regret1: f64,
    pub regret2: f64,
    /// Gap of the averaged iterates.
    pub duality_gap: f64,
    /// Gap of the last (current) iterates, for the cycling comparison.
    pub last_iterate_gap: f64,
}

/// Simultaneous projected-OGD self-play on a bilinear game: both players
/// compute gradients at the current pair, then both move. Returns one row per
/// `checkpoint_every` rounds (the final round is always logged).
pub fn bilinear_self_play(
    game: &BoxGame,
    phi0: &[f64],
    theta0: &[f64],
    rounds: usize,
    schedule: EtaSchedule,
    checkpoint_every: usize,
) -> Result<Vec<SelfPlayRow>> {
    if !game.analytic() {
        return Err(Error::Config("self-play driver needs a bilinear payoff".into()));
    }
    if rounds == 0 || checkpoint_every == 0 {
        return Err(Error::Config("rounds and checkpoint interval must be positive".into()));
    }
    if !game.phi_domain.contains(phi0) || !game.theta_domain.contains(theta0) {
        return Err(Error::Config("start point outside the strategy boxes".into()));
    }

    let mut phi = phi0.to_vec();
    let mut theta = theta0.to_vec();
    let mut ledger = RegretLedger::new();
    let mut rows = Vec::new();

    for t in 1..=rounds {
        let payoff = game.value(&phi, &theta);
        ledger.record(&phi, &theta, payoff, -payoff);

        if t % checkpoint_every == 0 || t == rounds {
            let r1 = ledger.regret(
                Player::One,
                bilinear_best_fixed_loss(game, &ledger, Player::One)?,
            )?;
            let r2 = ledger.regret(
                Player::Two,
                bilinear_best_fixed_loss(game, &ledger, Player::Two)?,
            )?;
            rows.push(SelfPlayRow {
                round: t,
                phi: phi.clone(),
                theta: theta.clone(),
                phi_bar: ledger.averaged(Player::One).to_vec(),
                theta_bar: ledger.averaged(Player::Two).to_vec(),
                regret1: r1,
                regret2: r2,
                duality_gap: game
                    .duality_gap(ledger.averaged(Player::One), ledger.averaged(Player::Two)),
                last_iterate_gap: game.duality_gap(&phi, &theta),
            });
        }

        // Simultaneous update: gradients at the same (φ_t, θ_t).
        let eta = schedule.at(t);
        let g_phi = game.grad_phi(&theta); // ∇_φ J (player 1 descends)
        let g_theta_loss: Vec<f64> = game.grad_theta(&phi).iter().map(|v| -v).collect();
        let new_phi = ogd_step(&phi, &g_phi, eta, &game.phi_domain)?;
        let new_theta = ogd_step(&theta, &g_theta_loss, eta, &game.theta_domain)?;
        phi = new_phi;
        theta = new_theta;
    }
    Ok(rows)
}

// ---- local equilibrium probing --------------------------------------------------

/// Witness of a local-equilibrium violation.
#[derive(Clone, Debug)]
pub struct ProbeWitness {
    pub player: Player,
    pub point: Vec<f64>,
    /// How much the deviating player improves, beyond epsilon.
    pub improvement: f64,
}

#[derive(Clone, Debug)]
pub enum ProbeVerdict {
    Pass,
    Fail(ProbeWitness),
}

impl ProbeVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ProbeVerdict::Pass)
    }
}

/// Monte-Carlo check of ε-approximate local equilibrium: samples `m` points
/// uniformly in the `eta_radius` ball around each player's strategy and
/// verifies that player 1 cannot lower `J` by more than `epsilon`, nor player
/// 2 raise it by more than `epsilon`. A pass is evidence, not proof.
pub fn local_eq_probe(
    j: impl Fn(&[f64], &[f64]) -> f64,
    phi_star: &[f64],
    theta_star: &[f64],
    eta_radius: f64,
    epsilon: f64,
    m: usize,
    rng: &mut impl Rng,
) -> Result<ProbeVerdict> {
    if m == 0 {
        return Err(Error::Config("probe sample count must be >= 1".into()));
    }
    if !(eta_radius > 0.0) {
        return Err(Error::Config("probe radius must be positive".into()));
    }
    let base = j(phi_star, theta_star);

    let ball_point = |center: &[f64], rng: &mut dyn rand::RngCore| -> Vec<f64> {
        // Uniform in the L2 ball: normal direction, radius ~ U^(1/dim).
        let dim = center.len();
        let dir: Vec<f64> = (0..dim)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let u: f64 = rng.random();
        let r = eta_radius * u.powf(1.0 / dim as f64);
        center
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + r * d / norm)
            .collect()
    };

    for _ in 0..m {
        let phi_probe = ball_point(phi_star, rng);
        let v = j(&phi_probe, theta_star);
        if base > v + epsilon {
            return Ok(ProbeVerdict::Fail(ProbeWitness {
                player: Player::One,
                point: phi_probe,
                improvement: base - v - epsilon,
            }));
        }
    }
    for _ in 0..m {
        let theta_probe = ball_point(theta_star, rng);
        let v = j(phi_star, &theta_probe);
        if base < v - epsilon {
            return Ok(ProbeVerdict::Fail(ProbeWitness {
                player: Player::Two,
                point: theta_probe,
                improvement: v - base - epsilon,
            }));
        }
    }
    Ok(ProbeVerdict::Pass)
}
