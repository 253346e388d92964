//! Offline reward maximization: the exact finite-horizon solver, the
//! closed-form LP relaxation bounds, greedy approximation ratios and the two
//! gadget instances on which greedy rules lose a constant factor.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{run_with_rewards, MeanRewards, Policy};
use crate::error::{Error, Result};
use crate::model::{ArmIndex, ArmSpec, Instance};
use crate::policies::OracleGreedy;

/// Default bound on `prod D_i` for [`exact_opt`].
pub const DEFAULT_STATE_CAP: u64 = 1_000_000;

const TIE_TOL: f64 = 1e-9;
const IDLE: u16 = u16::MAX;
const PAR_THRESHOLD: usize = 1 << 12;

/// Optimal offline schedule for a fixed horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpSolution {
    pub value: f64,
    /// Arm index per slot, `None` for idle.
    pub schedule: Vec<Option<ArmIndex>>,
    /// Number of (slot, cooldown-vector) pairs evaluated.
    pub states_visited: u64,
}

/// Cooldown vectors in mixed radix: digit `i` is arm `i`'s remaining cooldown
/// in `0..D_i`, with stride `prod_{j<i} D_j`.
struct StateSpace {
    size: usize,
    /// `decay[s]`: state after one slot with no play.
    decay: Vec<u32>,
    /// Bit `i` set when arm `i` is available in `s`.
    avail: Vec<u64>,
    /// Offset added to `decay[s]` when arm `i` is played.
    play_offset: Vec<u32>,
    mus: Vec<f64>,
    /// Arm indices sorted by ascending id.
    by_id: Vec<ArmIndex>,
}

fn state_count(instance: &Instance) -> u128 {
    instance.arms().iter().map(|a| a.delay as u128).product()
}

impl StateSpace {
    fn build(instance: &Instance, state_cap: u64) -> Result<Self> {
        let states = state_count(instance);
        if states > state_cap as u128 {
            return Err(Error::StateCap { states, cap: state_cap });
        }
        if instance.k() > 64 {
            return Err(Error::InvalidArgument("exact solver supports at most 64 arms".into()));
        }
        let size = states as usize;
        let delays = instance.delays();
        let mut strides = Vec::with_capacity(delays.len());
        let mut stride = 1u32;
        for &d in &delays {
            strides.push(stride);
            stride *= d;
        }
        let mut decay = vec![0u32; size];
        let mut avail = vec![0u64; size];
        let mut digits = vec![0u32; delays.len()];
        for s in 0..size {
            let mut dec = 0u32;
            let mut mask = 0u64;
            for (i, &c) in digits.iter().enumerate() {
                if c == 0 {
                    mask |= 1 << i;
                } else {
                    dec += (c - 1) * strides[i];
                }
            }
            decay[s] = dec;
            avail[s] = mask;
            // advance the mixed-radix counter
            for (i, c) in digits.iter_mut().enumerate() {
                *c += 1;
                if *c < delays[i] {
                    break;
                }
                *c = 0;
            }
        }
        let play_offset = delays.iter().zip(&strides).map(|(&d, &st)| (d - 1) * st).collect();
        let mut by_id: Vec<ArmIndex> = (0..instance.k()).collect();
        by_id.sort_by_key(|&i| instance.arm(i).id);
        Ok(Self { size, decay, avail, play_offset, mus: instance.mus(), by_id })
    }

    fn best_value(&self, s: usize, next: &[f64]) -> f64 {
        let base = self.decay[s] as usize;
        let mut best = next[base];
        let mut mask = self.avail[s];
        while mask != 0 {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            let v = self.mus[i] + next[base + self.play_offset[i] as usize];
            if v > best {
                best = v;
            }
        }
        best
    }

    /// Lowest-id arm within tolerance of the best value; idle only if no arm
    /// reaches it.
    fn best_action(&self, s: usize, next: &[f64]) -> (f64, Option<ArmIndex>) {
        let best = self.best_value(s, next);
        let base = self.decay[s] as usize;
        for &i in &self.by_id {
            if self.avail[s] >> i & 1 == 1
                && self.mus[i] + next[base + self.play_offset[i] as usize] >= best - TIE_TOL
            {
                return (best, Some(i));
            }
        }
        (best, None)
    }

    fn layer(&self, next: &[f64], cur: &mut [f64]) {
        if self.size >= PAR_THRESHOLD {
            cur.par_iter_mut()
                .enumerate()
                .for_each(|(s, v)| *v = self.best_value(s, next));
        } else {
            for (s, v) in cur.iter_mut().enumerate() {
                *v = self.best_value(s, next);
            }
        }
    }

    fn successor(&self, s: usize, action: Option<ArmIndex>) -> usize {
        let base = self.decay[s] as usize;
        match action {
            Some(i) => base + self.play_offset[i] as usize,
            None => base,
        }
    }
}

/// Exact optimum of the expected cumulative reward over all feasible
/// schedules of length `horizon`, by backward induction over
/// (slot, cooldown vector). Only rewards' means matter.
///
/// Ties go to the lower arm id, idle last. Refuses when `prod D_i` exceeds
/// `state_cap`.
pub fn exact_opt(instance: &Instance, horizon: u64, state_cap: u64) -> Result<DpSolution> {
    let space = StateSpace::build(instance, state_cap)?;
    let t_len = horizon as usize;
    let mut decisions: Vec<u16> = vec![IDLE; t_len * space.size];
    let mut next = vec![0.0; space.size];
    let mut cur = vec![0.0; space.size];
    for t in (0..t_len).rev() {
        let row = &mut decisions[t * space.size..(t + 1) * space.size];
        if space.size >= PAR_THRESHOLD {
            cur.par_iter_mut().zip(row.par_iter_mut()).enumerate().for_each(|(s, (v, d))| {
                let (bv, a) = space.best_action(s, &next);
                *v = bv;
                *d = a.map_or(IDLE, |i| i as u16);
            });
        } else {
            for s in 0..space.size {
                let (bv, a) = space.best_action(s, &next);
                cur[s] = bv;
                row[s] = a.map_or(IDLE, |i| i as u16);
            }
        }
        std::mem::swap(&mut next, &mut cur);
    }
    let value = if t_len == 0 { 0.0 } else { next[0] };
    let mut schedule = Vec::with_capacity(t_len);
    let mut s = 0usize;
    for t in 0..t_len {
        let code = decisions[t * space.size + s];
        let a = (code != IDLE).then_some(code as ArmIndex);
        schedule.push(a);
        s = space.successor(s, a);
    }
    Ok(DpSolution {
        value,
        schedule,
        states_visited: horizon * space.size as u64,
    })
}

/// Optimal value only; memory is two value layers regardless of horizon.
pub fn exact_opt_value(instance: &Instance, horizon: u64, state_cap: u64) -> Result<f64> {
    let space = StateSpace::build(instance, state_cap)?;
    let mut next = vec![0.0; space.size];
    let mut cur = vec![0.0; space.size];
    for _ in 0..horizon {
        space.layer(&next, &mut cur);
        std::mem::swap(&mut next, &mut cur);
    }
    Ok(next[0])
}

/// Closed-form LP relaxation upper bound and the greedy lower bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpBounds {
    /// Fractional play counts of the relaxation; they fill the horizon with
    /// the best arms first, each capped at `ceil(T/D_k)`.
    pub n_star: Vec<f64>,
    pub upper: f64,
    /// `n'_k = (T/D_k) prod_{i<k} (1 - 1/D_i)`.
    pub n_prime: Vec<f64>,
    pub lower: f64,
}

pub fn lp_bounds(instance: &Instance, horizon: u64) -> LpBounds {
    let t = horizon as f64;
    let mut remaining = horizon;
    let mut n_star = Vec::with_capacity(instance.k());
    let mut n_prime = Vec::with_capacity(instance.k());
    let mut survive = 1.0;
    for arm in instance.arms() {
        let cap = horizon.div_ceil(arm.delay as u64);
        let n = cap.min(remaining);
        remaining -= n;
        n_star.push(n as f64);
        let d = arm.delay as f64;
        n_prime.push(t / d * survive);
        survive *= 1.0 - 1.0 / d;
    }
    let mus = instance.mus();
    let dot = |n: &[f64]| n.iter().zip(&mus).map(|(n, m)| n * m).sum::<f64>();
    LpBounds { upper: dot(&n_star), lower: dot(&n_prime), n_star, n_prime }
}

/// Cumulative mean reward of any policy when every play pays its mean.
pub fn deterministic_reward<P: Policy + ?Sized>(instance: &Instance, policy: &mut P, horizon: u64) -> Result<f64> {
    Ok(run_with_rewards(instance, policy, horizon, &mut MeanRewards)?.cum_reward())
}

pub fn oracle_greedy_reward(instance: &Instance, horizon: u64) -> f64 {
    deterministic_reward(instance, &mut OracleGreedy, horizon).expect("oracle greedy never plays a blocked arm")
}

/// Oracle Greedy's mean reward over the exact optimum. Defined as 1 when the
/// optimum is 0.
pub fn approx_ratio(instance: &Instance, horizon: u64, state_cap: u64) -> Result<f64> {
    let opt = exact_opt_value(instance, horizon, state_cap)?;
    let greedy = oracle_greedy_reward(instance, horizon);
    Ok(if opt == 0.0 { 1.0 } else { greedy / opt })
}

/// Finite-horizon form of the greedy guarantee:
/// `1 - 1/e - K * D_1 / (mu_1 * T)`.
pub fn greedy_ratio_floor(instance: &Instance, horizon: u64) -> f64 {
    let top = instance.arm(0);
    1.0 - (-1.0f64).exp() - instance.k() as f64 * top.delay as f64 / (top.mu * horizon as f64)
}

/// Four-arm instance on which Oracle Greedy earns `(3-eps)/(4-2eps)` of the
/// optimum: means `[1, 1, 1-eps, 0]`, delays `[4, 4, 2, 1]`.
///
/// Delays are in the "next playable `D` slots later" convention, i.e. an
/// arm described as blocked for `d` slots gets `D = d + 1`.
pub fn greedy_gap_instance(epsilon: f64) -> Result<Instance> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Instance::deterministic(&[1.0, 1.0, 1.0 - epsilon, 0.0], &[4, 4, 2, 1])
}

/// `K` arms with mean 1 and delay `K`, plus a sink arm with mean
/// `(1+eps)/(K-1)` and delay 1 on which greedy-per-round gets stuck.
pub fn greedy_per_round_trap_instance(k: usize, epsilon: f64) -> Result<Instance> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let sink = (1.0 + epsilon) / (k as f64 - 1.0);
    if sink > 1.0 {
        return Err(Error::InvalidInstance(format!(
            "sink mean (1+eps)/(K-1) = {sink} exceeds 1; epsilon too large for K={k}"
        )));
    }
    let mut arms = (1..=k as u32)
        .map(|id| ArmSpec::deterministic(id, 1.0, k as u32))
        .collect::<Result<Vec<_>>>()?;
    arms.push(ArmSpec::deterministic(k as u32 + 1, sink, 1)?);
    Instance::new(arms)
}
