//! Multinomial No-U-Turn sampler with diagonal mass matrix, written against
//! a generic gradient target.
//!
//! One transition doubles a leapfrog trajectory until the ends start moving
//! toward each other (position-difference/momentum inner products at both
//! ends) or the energy error exceeds the divergence threshold. The next
//! state is drawn multinomially among trajectory leaves, biased toward the
//! last-built subtree. Warm-up interleaves dual-averaging step-size
//! adaptation with expanding-window estimation of the diagonal mass matrix.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::stats::Welford;

use super::{LogDensity, SamplerConfig};

/// Energy error beyond which a transition is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Dual-averaging step-size adaptation (target acceptance form).
#[derive(Debug, Clone)]
pub struct DualAverage {
    mu: f64,
    log_step: f64,
    log_step_avg: f64,
    h_bar: f64,
    count: u64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAverage {
    pub fn new(target: f64, initial_step: f64) -> Self {
        Self {
            mu: (10.0 * initial_step).ln(),
            log_step: initial_step.ln(),
            log_step_avg: 0.0,
            h_bar: 0.0,
            count: 1,
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn advance(&mut self, accept_stat: f64) {
        let m = self.count as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        self.log_step = self.mu - self.h_bar * m.sqrt() / self.gamma;
        let mk = m.powf(-self.kappa);
        self.log_step_avg = mk * self.log_step + (1.0 - mk) * self.log_step_avg;
        self.count += 1;
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn averaged(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

/// One phase-space point with cached gradient and log density.
#[derive(Clone)]
struct State {
    pos: Vec<f64>,
    mom: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Result of one NUTS transition.
pub struct Transition {
    pub accept_stat: f64,
    pub tree_depth: u32,
    pub divergent: bool,
    pub energy: f64,
    pub n_leapfrog: u32,
}

struct Tree {
    left: State,
    right: State,
    sample: State,
    sample_energy: f64,
    log_sum_w: f64,
    sum_alpha: f64,
    n_alpha: u32,
    n_leapfrog: u32,
    divergent: bool,
    turning: bool,
}

/// A single NUTS chain with its own RNG and adaptation state.
pub struct NutsChain<'a, T: LogDensity> {
    target: &'a T,
    pub rng: ChaCha8Rng,
    dim: usize,
    pos: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
    pub inv_mass: Vec<f64>,
    pub step_size: f64,
    max_treedepth: u32,
}

impl<'a, T: LogDensity> NutsChain<'a, T> {
    /// Starts a chain at `pos` (the caller has already verified finiteness).
    pub fn new(target: &'a T, pos: Vec<f64>, rng: ChaCha8Rng, cfg: &SamplerConfig) -> Self {
        let dim = target.dim();
        let mut grad = vec![0.0; dim];
        let logp = target.logp_grad(&pos, &mut grad);
        Self {
            target,
            rng,
            dim,
            pos,
            grad,
            logp,
            inv_mass: vec![1.0; dim],
            step_size: 1.0,
            max_treedepth: cfg.max_treedepth,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.pos
    }

    pub fn logp(&self) -> f64 {
        self.logp
    }

    fn sample_momentum(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let z: f64 = self.rng.sample(StandardNormal);
                z / self.inv_mass[i].sqrt()
            })
            .collect()
    }

    fn kinetic(&self, mom: &[f64]) -> f64 {
        0.5 * mom
            .iter()
            .zip(&self.inv_mass)
            .map(|(p, im)| im * p * p)
            .sum::<f64>()
    }

    fn leapfrog(&self, state: &State, eps: f64) -> State {
        let mut mom: Vec<f64> = state
            .mom
            .iter()
            .zip(&state.grad)
            .map(|(p, g)| p + 0.5 * eps * g)
            .collect();
        let pos: Vec<f64> = state
            .pos
            .iter()
            .zip(mom.iter().zip(&self.inv_mass))
            .map(|(q, (p, im))| q + eps * im * p)
            .collect();
        let mut grad = vec![0.0; self.dim];
        let logp = self.target.logp_grad(&pos, &mut grad);
        for (p, g) in mom.iter_mut().zip(&grad) {
            *p += 0.5 * eps * g;
        }
        State {
            pos,
            mom,
            grad,
            logp,
        }
    }

    /// Hamiltonian (negative joint log density) of a state.
    fn energy(&self, state: &State) -> f64 {
        -state.logp + self.kinetic(&state.mom)
    }

    /// Ends moving toward each other: (θ⁺−θ⁻)·(M⁻¹p) < 0 at either end.
    fn is_turning(&self, left: &State, right: &State) -> bool {
        let mut dot_left = 0.0;
        let mut dot_right = 0.0;
        for i in 0..self.dim {
            let span = right.pos[i] - left.pos[i];
            dot_left += span * self.inv_mass[i] * left.mom[i];
            dot_right += span * self.inv_mass[i] * right.mom[i];
        }
        dot_left < 0.0 || dot_right < 0.0
    }

    fn leaf(&self, from: &State, dir: f64, h0: f64) -> Tree {
        let state = self.leapfrog(from, dir * self.step_size);
        let h = self.energy(&state);
        let log_w = if h.is_finite() {
            h0 - h
        } else {
            f64::NEG_INFINITY
        };
        let divergent = !h.is_finite() || h - h0 > DIVERGENCE_THRESHOLD;
        let alpha = log_w.min(0.0).exp();
        Tree {
            left: state.clone(),
            right: state.clone(),
            sample_energy: h,
            sample: state,
            log_sum_w: log_w,
            sum_alpha: alpha,
            n_alpha: 1,
            n_leapfrog: 1,
            divergent,
            turning: false,
        }
    }

    fn build_tree(&mut self, depth: u32, from: &State, dir: f64, h0: f64) -> Tree {
        if depth == 0 {
            return self.leaf(from, dir, h0);
        }
        let mut first = self.build_tree(depth - 1, from, dir, h0);
        if first.divergent || first.turning {
            return first;
        }
        let grow_from = if dir > 0.0 {
            first.right.clone()
        } else {
            first.left.clone()
        };
        let second = self.build_tree(depth - 1, &grow_from, dir, h0);
        first.sum_alpha += second.sum_alpha;
        first.n_alpha += second.n_alpha;
        first.n_leapfrog += second.n_leapfrog;
        first.divergent |= second.divergent;
        first.turning |= second.turning;
        if !first.divergent && !first.turning {
            let total = log_add_exp(first.log_sum_w, second.log_sum_w);
            let take_new: f64 = self.rng.random();
            if take_new.ln() < second.log_sum_w - total {
                first.sample = second.sample;
                first.sample_energy = second.sample_energy;
            }
            first.log_sum_w = total;
            if dir > 0.0 {
                first.right = second.right;
            } else {
                first.left = second.left;
            }
            first.turning = self.is_turning(&first.left, &first.right);
        }
        first
    }

    /// One NUTS update of the chain state.
    pub fn transition(&mut self) -> Transition {
        let mom = self.sample_momentum();
        let start = State {
            pos: self.pos.clone(),
            mom,
            grad: self.grad.clone(),
            logp: self.logp,
        };
        let h0 = self.energy(&start);

        let mut traj_left = start.clone();
        let mut traj_right = start.clone();
        let mut sample = start;
        let mut sample_energy = h0;
        let mut log_sum_w = 0.0; // initial point has weight exp(h0 − h0) = 1
        let mut sum_alpha = 0.0;
        let mut n_alpha = 0u32;
        let mut n_leapfrog = 0u32;
        let mut divergent = false;
        let mut depth = 0u32;

        while depth < self.max_treedepth {
            let dir: f64 = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            let from = if dir > 0.0 {
                traj_right.clone()
            } else {
                traj_left.clone()
            };
            let subtree = self.build_tree(depth, &from, dir, h0);
            sum_alpha += subtree.sum_alpha;
            n_alpha += subtree.n_alpha;
            n_leapfrog += subtree.n_leapfrog;
            if subtree.divergent || subtree.turning {
                divergent |= subtree.divergent;
                break;
            }
            // biased progressive sampling toward the new subtree
            let accept_new: f64 = self.rng.random();
            if accept_new.ln() < subtree.log_sum_w - log_sum_w {
                sample = subtree.sample.clone();
                sample_energy = subtree.sample_energy;
            }
            log_sum_w = log_add_exp(log_sum_w, subtree.log_sum_w);
            if dir > 0.0 {
                traj_right = subtree.right;
            } else {
                traj_left = subtree.left;
            }
            depth += 1;
            if self.is_turning(&traj_left, &traj_right) {
                break;
            }
        }

        self.pos = sample.pos;
        self.grad = sample.grad;
        self.logp = sample.logp;

        Transition {
            accept_stat: if n_alpha > 0 {
                sum_alpha / n_alpha as f64
            } else {
                0.0
            },
            tree_depth: depth,
            divergent,
            energy: sample_energy,
            n_leapfrog,
        }
    }

    /// Heuristic initial step size: doubles or halves until the one-step
    /// acceptance probability crosses 1/2.
    pub fn find_reasonable_step_size(&mut self) -> f64 {
        let mut eps: f64 = 1.0;
        let mom = self.sample_momentum();
        let state = State {
            pos: self.pos.clone(),
            mom,
            grad: self.grad.clone(),
            logp: self.logp,
        };
        let h0 = self.energy(&state);
        let mut dir: Option<f64> = None;
        for _ in 0..64 {
            let probe = self.leapfrog(&state, eps);
            let h = self.energy(&probe);
            let log_ratio = if h.is_finite() {
                h0 - h
            } else {
                f64::NEG_INFINITY
            };
            let d = if log_ratio > (0.5f64).ln() { 1.0 } else { -1.0 };
            match dir {
                None => dir = Some(d),
                Some(prev) if prev != d => break,
                _ => {}
            }
            eps *= (2.0f64).powf(d);
            if !(1e-10..=1e7).contains(&eps) {
                break;
            }
        }
        eps.clamp(1e-10, 1e7)
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Warm-up phase schedule: a fast step-size-only opening, expanding
/// variance-estimation windows, and a fast step-size-only closing phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WarmupPhase {
    FastOpen,
    /// Window with the given end iteration (exclusive).
    Window(usize),
    FastClose,
}

/// Computes the warm-up phase of iteration `iter` and whether a window
/// closes after it. `warmup` iterations total: 15% opening, 10% closing,
/// windows doubling from 25 in between (the last window absorbs the
/// remainder).
pub fn warmup_schedule(warmup: usize) -> Vec<WarmupPhase> {
    let open = ((warmup as f64 * 0.15).round() as usize).max(1);
    let close = ((warmup as f64 * 0.10).round() as usize).max(1);
    let mut phases = vec![WarmupPhase::FastOpen; warmup.min(open)];
    if warmup <= open + close {
        while phases.len() < warmup {
            phases.push(WarmupPhase::FastClose);
        }
        return phases;
    }
    let window_end_total = warmup - close;
    let mut window = 25usize.min(window_end_total - open);
    let mut pos = open;
    while pos < window_end_total {
        let mut end = pos + window;
        // extend the final window to the phase boundary when the next
        // doubling would not fit
        if end + 2 * window > window_end_total {
            end = window_end_total;
        }
        let end = end.min(window_end_total);
        for _ in pos..end {
            phases.push(WarmupPhase::Window(end));
        }
        pos = end;
        window *= 2;
    }
    while phases.len() < warmup {
        phases.push(WarmupPhase::FastClose);
    }
    phases
}

/// Regularized variance estimate for the diagonal inverse mass matrix.
pub fn regularized_inv_mass(acc: &[Welford]) -> Vec<f64> {
    acc.iter()
        .map(|w| {
            let n = w.count() as f64;
            let var = w.variance();
            ((n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))).max(1e-10)
        })
        .collect()
}
