//! Closed-form regret quantities for UCB Greedy measured against Oracle
//! Greedy: the sustainable-prefix sizes `K*`, `K*_eps` and `K_g`, gap tables,
//! the per-pair constants, the upper bounds with and without free
//! exploration, and the lower bound for equal-delay instances.
//!
//! Arm positions in this module are 1-based ranks in canonical order, to
//! match the usual way these formulas are written. All logarithms are
//! natural.
//!
//! Every regret summand is a gap `mu_i - mu_j` times a count bound. Pairs
//! with a zero gap therefore contribute nothing and are skipped before any
//! division by that gap.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::env::{cumulative_rewards, MeanRewards, Policy, SlotView};
use crate::error::{Error, Result};
use crate::model::{ArmIndex, Instance};
use crate::policies::{oracle_greedy_choose, OracleGreedy};

/// Prefix sums `S_k = sum_{i<=k} 1/D_i` for `k = 0..=K`, exactly.
fn inverse_delay_prefix(delays: &[u32]) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(delays.len() + 1);
    let mut acc = BigRational::zero();
    out.push(acc.clone());
    for &d in delays {
        acc += BigRational::new(BigInt::one(), BigInt::from(d));
        out.push(acc.clone());
    }
    out
}

/// Smallest `k` with `sum_{i<=k} 1/D_i >= 1`, or `K` if the sum never gets
/// there.
pub fn k_star(delays: &[u32]) -> usize {
    let prefix = inverse_delay_prefix(delays);
    (1..=delays.len())
        .find(|&k| prefix[k] >= BigRational::one())
        .unwrap_or(delays.len())
}

fn reaches(sum: &BigRational, eps: f64) -> bool {
    if eps == 0.0 {
        *sum >= BigRational::one()
    } else {
        sum.to_f64().unwrap_or(f64::INFINITY) >= 1.0 - eps - 1e-12
    }
}

/// `min({K} ∪ {k : sum_{i<k} 1/D_i >= 1 - eps})`.
pub fn k_star_eps(delays: &[u32], eps: f64) -> usize {
    let prefix = inverse_delay_prefix(delays);
    (1..=delays.len())
        .find(|&k| reaches(&prefix[k - 1], eps))
        .unwrap_or(delays.len())
}

/// Largest `k` whose better arms leave inverse-delay mass strictly above
/// `eps`: `max {k : sum_{i<k} 1/D_i < 1 - eps}`.
///
/// Every arm up to this rank keeps a free-exploration rate of at least `eps`,
/// which is what lets the upper bound replace `(1 - sum)^-1` by `1/eps`. At
/// `eps = 0` it coincides with [`k_star`].
pub fn free_exploration_cutoff(delays: &[u32], eps: f64) -> usize {
    let prefix = inverse_delay_prefix(delays);
    (1..=delays.len())
        .take_while(|&k| !reaches(&prefix[k - 1], eps))
        .last()
        .unwrap_or(0)
}

/// `min {mu_i - mu_j : i <= k, j >= k2 + 1, i < j}` over 1-based ranks.
pub fn gap(mus: &[f64], k: usize, k2: usize) -> Result<f64> {
    let n = mus.len();
    let mut best: Option<f64> = None;
    for i in 1..=k.min(n) {
        for j in (k2 + 1).max(i + 1)..=n {
            let g = mus[i - 1] - mus[j - 1];
            best = Some(best.map_or(g, |b: f64| b.min(g)));
        }
    }
    best.ok_or(Error::EmptyGapWindow { k, k2 })
}

/// Simulation horizon used for `K_g`: twice the lcm of the delays when that
/// lcm is at most `10^6`, otherwise `10^5`.
pub fn default_kg_horizon(instance: &Instance) -> u64 {
    let mut lcm: u64 = 1;
    for d in instance.delays() {
        let d = d as u64;
        lcm = lcm / gcd(lcm, d) * d;
        if lcm > 1_000_000 {
            return 100_000;
        }
    }
    (2 * lcm).max(2)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Worst positive-mean rank that Oracle Greedy plays within `sim_horizon`
/// slots; 0 when it never plays a positive-mean arm.
pub fn k_g(instance: &Instance, sim_horizon: u64) -> usize {
    struct Tracker {
        worst: Option<ArmIndex>,
        mus: Vec<f64>,
    }
    impl Policy for Tracker {
        fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
            let arm = oracle_greedy_choose(view);
            if let Some(a) = arm {
                if self.mus[a] > 0.0 && self.worst.is_none_or(|w| a > w) {
                    self.worst = Some(a);
                }
            }
            arm
        }
    }
    let mut tracker = Tracker { worst: None, mus: instance.mus() };
    cumulative_rewards(instance, &mut tracker, sim_horizon, &mut MeanRewards)
        .expect("oracle greedy never plays a blocked arm");
    let _ = OracleGreedy;
    tracker.worst.map_or(0, |w| w + 1)
}

/// `H(m) = sum_{n>=1} n^-m` for `m >= 2`, summed to `10^5` terms (smallest
/// first) plus a midpoint integral for the tail. Absolute error is far below
/// `1e-10`.
pub fn h_const(m: u32) -> f64 {
    assert!(m >= 2, "H(m) diverges for m < 2");
    const N: u64 = 100_000;
    let mf = m as f64;
    let tail = (N as f64 + 0.5).powf(1.0 - mf) / (mf - 1.0);
    (1..=N).rev().fold(tail, |acc, n| acc + (n as f64).powf(-mf))
}

fn mu(instance: &Instance, rank: usize) -> f64 {
    instance.arm(rank - 1).mu
}

fn delay(instance: &Instance, rank: usize) -> f64 {
    instance.arm(rank - 1).delay as f64
}

fn positive_gap(instance: &Instance, i: usize, j: usize) -> Result<f64> {
    let g = mu(instance, i) - mu(instance, j);
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::ZeroGap { i, j })
    }
}

fn check_pair(instance: &Instance, i: usize, j: usize) -> Result<()> {
    if !(1 <= i && i < j && j <= instance.k()) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= i < j <= K, got i={i}, j={j}, K={}",
            instance.k()
        )));
    }
    Ok(())
}

/// `D_j / gap_ij^2 + K / gap_{j,j+1}^2`; the second term is absent for
/// `j = K`.
pub fn c_ij(instance: &Instance, i: usize, j: usize) -> Result<f64> {
    check_pair(instance, i, j)?;
    let k = instance.k();
    let g_ij = positive_gap(instance, i, j)?;
    let mut c = delay(instance, j) / (g_ij * g_ij);
    if j < k {
        let g_next = positive_gap(instance, j, j + 1)?;
        c += k as f64 / (g_next * g_next);
    }
    Ok(c)
}

/// Slots after which arm `j` has been sampled often enough to be separated
/// from arm `i`: `tau0 (1 + ln tau0) + tau1` with
/// `tau0 = 32 (1 - s)^-1 (D_j/gap_ij^2 + sum_{l>j} 1/gap_jl^2)`,
/// `tau1 = (1 - s)^-1 (j - 1)` and `s = sum_{l<j} 1/D_l`.
pub fn tau_ij(instance: &Instance, i: usize, j: usize) -> Result<f64> {
    check_pair(instance, i, j)?;
    let prefix = inverse_delay_prefix(&instance.delays());
    if prefix[j - 1] >= BigRational::one() {
        return Err(Error::FreeExplorationUndefined { j });
    }
    let slack = (BigRational::one() - &prefix[j - 1]).to_f64().expect("finite");
    let prefactor = 1.0 / slack;
    let g_ij = positive_gap(instance, i, j)?;
    let mut inner = delay(instance, j) / (g_ij * g_ij);
    for l in j + 1..=instance.k() {
        let g = positive_gap(instance, j, l)?;
        inner += 1.0 / (g * g);
    }
    let tau0 = 32.0 * prefactor * inner;
    let tau1 = prefactor * (j as f64 - 1.0);
    Ok(tau0 * (1.0 + tau0.ln()) + tau1)
}

/// Term-by-term evaluation of the free-exploration upper bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FreeExplorationTerms {
    pub k_g: usize,
    /// Rank cutoff used for the free-exploration terms, see
    /// [`free_exploration_cutoff`].
    pub cutoff: usize,
    pub h4_terms: f64,
    pub h3_terms: f64,
    pub constant_terms: f64,
    /// Coefficient multiplying `ln T`.
    pub log_coefficient: f64,
    pub value: f64,
    /// Ranks `i` whose `H(3)` summand came out negative (`i > cutoff`).
    pub negative_summands: Vec<usize>,
}

/// Upper bound on the regret of UCB Greedy against Oracle Greedy that
/// credits free exploration, evaluated with a given `K_g`.
pub fn free_exploration_terms(instance: &Instance, horizon: f64, eps: f64, k_g: usize) -> Result<FreeExplorationTerms> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let k = instance.k();
    let cutoff = free_exploration_cutoff(&instance.delays(), eps);
    let (h3, h4) = (h_const(3), h_const(4));
    let mu_k = mu(instance, k);
    let mu_cut = mu(instance, cutoff.max(1));
    let mut t = FreeExplorationTerms {
        k_g,
        cutoff,
        h4_terms: 0.0,
        h3_terms: 0.0,
        constant_terms: 0.0,
        log_coefficient: 0.0,
        value: 0.0,
        negative_summands: Vec::new(),
    };
    for i in 1..=k_g {
        let d_i = delay(instance, i);
        t.h4_terms += 2.0 * h4 * (mu(instance, i) - mu_k) / d_i.powi(4);
        let h3_term = h3 * k as f64 * (mu(instance, i) - mu_cut) / d_i.powi(3);
        if h3_term < 0.0 {
            t.negative_summands.push(i);
        }
        t.h3_terms += h3_term;
        for j in i + 1..=cutoff {
            let g = mu(instance, i) - mu(instance, j);
            if g <= 0.0 {
                continue;
            }
            let c = c_ij(instance, i, j)? / eps;
            t.constant_terms += g / d_i * c * c.ln();
        }
        for j in i.max(cutoff) + 1..=k {
            let g = mu(instance, i) - mu(instance, j);
            if g > 0.0 {
                t.log_coefficient += 32.0 / g;
            }
        }
    }
    t.value = t.h4_terms + t.h3_terms + t.constant_terms + t.log_coefficient * horizon.ln();
    Ok(t)
}

pub fn free_exploration_bound(instance: &Instance, horizon: f64, eps: f64) -> Result<f64> {
    let kg = k_g(instance, default_kg_horizon(instance));
    Ok(free_exploration_terms(instance, horizon, eps, kg)?.value)
}

/// `ln T` coefficient of [`no_free_exploration_bound`].
pub fn no_free_exploration_log_coefficient(instance: &Instance, k_g: usize) -> f64 {
    let mut coeff = 0.0;
    for i in 1..=k_g {
        for j in i + 1..=instance.k() {
            let g = mu(instance, i) - mu(instance, j);
            if g > 0.0 {
                coeff += 32.0 / g;
            }
        }
    }
    coeff
}

/// The same bound when free exploration is ignored:
/// `sum_{i<=K_g} sum_{j>i} 32 ln T / gap_ij + 2 H(4) sum_{i<=K_g} (mu_i - mu_K) / D_i^4`.
pub fn no_free_exploration_with(instance: &Instance, horizon: f64, k_g: usize) -> f64 {
    let h4 = h_const(4);
    let mu_k = mu(instance, instance.k());
    let h4_terms: f64 = (1..=k_g)
        .map(|i| 2.0 * h4 * (mu(instance, i) - mu_k) / delay(instance, i).powi(4))
        .sum();
    no_free_exploration_log_coefficient(instance, k_g) * horizon.ln() + h4_terms
}

pub fn no_free_exploration_bound(instance: &Instance, horizon: f64) -> f64 {
    let kg = k_g(instance, default_kg_horizon(instance));
    no_free_exploration_with(instance, horizon, kg)
}

/// `((K - K*) / delta) ln T`, the asymptotic lower bound for consistent
/// algorithms on the equal-delay instance of [`kstar_set_instance`].
pub fn kstar_set_lower_bound(k: usize, k_star: usize, delta: f64, horizon: f64) -> Result<f64> {
    if k_star >= k {
        return Err(Error::InvalidArgument(format!("need K* < K, got K*={k_star}, K={k}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1/2), got {delta}")));
    }
    if horizon < 2.0 {
        return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
    }
    Ok((k - k_star) as f64 / delta * horizon.ln())
}

/// `K` Bernoulli arms, all with delay `K*`: the first `K*` with mean 1/2, the
/// rest with mean `1/2 - delta`.
pub fn kstar_set_instance(k: usize, k_star: usize, delta: f64) -> Result<Instance> {
    if k_star == 0 || k_star >= k {
        return Err(Error::InvalidArgument(format!("need 1 <= K* < K, got K*={k_star}, K={k}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1/2), got {delta}")));
    }
    let mus: Vec<f64> = (0..k).map(|i| if i < k_star { 0.5 } else { 0.5 - delta }).collect();
    Instance::bernoulli(&mus, &vec![k_star as u32; k])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairConstant {
    pub i: usize,
    pub j: usize,
    /// `None` when the constant is undefined for this pair.
    pub value: Option<f64>,
}

/// Every bound quantity for one instance and horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub horizon: f64,
    pub eps: f64,
    pub k_star: usize,
    pub k_star_eps: usize,
    pub free_exploration_cutoff: usize,
    pub k_g: usize,
    pub h3: f64,
    pub h4: f64,
    pub free_exploration: FreeExplorationTerms,
    pub free_exploration_value: f64,
    pub no_free_exploration_value: f64,
    pub no_free_exploration_log_coefficient: f64,
    /// Equal-delay lower bound evaluated with `delta = gap(K*, K*)`, when
    /// `K* < K` and that gap lies in `(0, 1/2)`.
    pub lower_bound_value: Option<f64>,
    pub c_table: Vec<PairConstant>,
    pub tau_table: Vec<PairConstant>,
}

pub fn bound_report(instance: &Instance, horizon: f64, eps: f64) -> Result<BoundReport> {
    let delays = instance.delays();
    let ks = k_star(&delays);
    let kg = k_g(instance, default_kg_horizon(instance));
    let free_exploration = free_exploration_terms(instance, horizon, eps, kg)?;
    let mut c_table = Vec::new();
    for i in 1..=kg {
        for j in i + 1..=free_exploration.cutoff {
            c_table.push(PairConstant { i, j, value: c_ij(instance, i, j).ok() });
        }
    }
    let mut tau_table = Vec::new();
    for j in 2..=ks {
        for i in 1..j.min(kg + 1) {
            tau_table.push(PairConstant { i, j, value: tau_ij(instance, i, j).ok() });
        }
    }
    let k = instance.k();
    let lower_bound_value = if ks < k {
        gap(&instance.mus(), ks, ks)
            .ok()
            .and_then(|delta| kstar_set_lower_bound(k, ks, delta, horizon).ok())
    } else {
        None
    };
    Ok(BoundReport {
        horizon,
        eps,
        k_star: ks,
        k_star_eps: k_star_eps(&delays, eps),
        free_exploration_cutoff: free_exploration.cutoff,
        k_g: kg,
        h3: h_const(3),
        h4: h_const(4),
        free_exploration_value: free_exploration.value,
        no_free_exploration_value: no_free_exploration_with(instance, horizon, kg),
        no_free_exploration_log_coefficient: no_free_exploration_log_coefficient(instance, kg),
        free_exploration,
        lower_bound_value,
        c_table,
        tau_table,
    })
}
