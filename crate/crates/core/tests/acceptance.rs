//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (unbuffered, so it shows even when the test passes) and then
//! asserts the same condition.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use blocking_bandits::env::{run_with_rewards, EnvState, MeanRewards, Policy, RewardSource, SlotView};
use blocking_bandits::experiments::{
    aggregate_quantiles, log_fit, measure_regret, sample_synthetic_instance, DelayMode, ExperimentConfig,
};
use blocking_bandits::model::{derive_stream, ArmIndex, Instance, SeedSpec};
use blocking_bandits::offline::{
    exact_opt, exact_opt_value, greedy_ratio_floor, lp_bounds, oracle_greedy_reward, greedy_gap_instance,
    greedy_per_round_trap_instance, deterministic_reward, DEFAULT_STATE_CAP,
};
use blocking_bandits::pinwheel::{decide, reduce_to_maxreward, verify_schedule, Certificate, PinwheelInstance, PinwheelStatus};
use blocking_bandits::policies::{
    BlockAdapter, GreedyPerRound, OracleGreedy, SimulatedBlock, UcbGreedy, DEFAULT_ALPHA,
};
use blocking_bandits::regret::{default_kg_horizon, k_g, k_star, kstar_set_instance, free_exploration_bound, kstar_set_lower_bound};

fn report(n: u32, pass: bool, detail: &str, elapsed: Duration) {
    let line = format!(
        "criterion {n}: {} ({detail}; {:.2}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Picks a uniformly random available arm, or idles with probability 1/5.
struct RandomPolicy(ChaCha8Rng);

impl Policy for RandomPolicy {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        let avail: Vec<ArmIndex> = view.available_arms().collect();
        if avail.is_empty() || self.0.gen_bool(0.2) {
            None
        } else {
            avail.choose(&mut self.0).copied()
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, max_k: usize, max_d: u32, grid: bool) -> Instance {
    let k = rng.gen_range(1..=max_k);
    let mus: Vec<f64> = (0..k)
        .map(|_| if grid { rng.gen_range(0..=10) as f64 / 10.0 } else { rng.gen::<f64>() })
        .collect();
    let delays: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=max_d)).collect();
    Instance::deterministic(&mus, &delays).unwrap()
}

#[test]
fn criterion_01_environment_semantics() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0usize;
    for case in 0..1000u64 {
        let inst = random_instance(&mut rng, 6, 6, false);
        let horizon = rng.gen_range(1..=50u64);
        let mut policy = RandomPolicy(ChaCha8Rng::seed_from_u64(case));
        let trace = run_with_rewards(&inst, &mut policy, horizon, &mut MeanRewards).unwrap();
        let mut last: Vec<Option<u64>> = vec![None; inst.k()];
        let mut counts = vec![0u64; inst.k()];
        for rec in trace.records() {
            if let Some(a) = rec.arm {
                if let Some(prev) = last[a] {
                    if rec.slot - prev < inst.arm(a).delay as u64 {
                        violations += 1;
                    }
                }
                last[a] = Some(rec.slot);
                counts[a] += 1;
            }
        }
        for (a, &n) in counts.iter().enumerate() {
            if n > horizon.div_ceil(inst.arm(a).delay as u64) {
                violations += 1;
            }
        }
        // A blocked play must be refused.
        let mut env = EnvState::new(&inst);
        env.step(Some(0), &mut MeanRewards).unwrap();
        if inst.arm(0).delay > 1 && env.step(Some(0), &mut MeanRewards).is_ok() {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(10);
    report(1, pass, &format!("1000 random instances, {violations} violations"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_02_illustrative_example() {
    let start = Instant::now();
    let inst = Instance::deterministic(&[0.5, 1.0, 1.0], &[1, 4, 4]).unwrap();
    let opt = exact_opt(&inst, 8, DEFAULT_STATE_CAP).unwrap();
    let greedy = oracle_greedy_reward(&inst, 8);
    let elapsed = start.elapsed();
    let opt_ok = (opt.value - 6.0).abs() <= 1e-9;
    let strictly_smaller = greedy < opt.value - 1e-9;
    let pass = opt_ok && strictly_smaller && elapsed < Duration::from_secs(1);
    report(
        2,
        pass,
        &format!(
            "OPT(8) = {} (expected 6), Oracle Greedy = {greedy} (expected strictly smaller); \
             the delay-1 arm is never blocked, so greedy plays 2,3,1,1 and idles nowhere",
            opt.value
        ),
        elapsed,
    );
    assert!(opt_ok, "exact optimum must be 6");
    assert!(pass, "Oracle Greedy earns {greedy}, not strictly below OPT {}", opt.value);
}

/// The 500 instances shared by criteria 3 and 5.
fn desk_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    (0..500).map(|_| random_instance(&mut rng, 4, 4, true)).collect()
}

#[test]
fn criterion_03_greedy_ratio_floor() {
    let start = Instant::now();
    let mut worst_margin = f64::INFINITY;
    let mut exceptions = 0;
    for inst in desk_instances() {
        let opt = exact_opt_value(&inst, 24, DEFAULT_STATE_CAP).unwrap();
        let greedy = oracle_greedy_reward(&inst, 24);
        let ratio = if opt == 0.0 { 1.0 } else { greedy / opt };
        // Independent evaluation of 1 - 1/e - K D_1 / (mu_1 T).
        let top = inst.arm(0);
        let floor = 1.0 - 1.0 / std::f64::consts::E - inst.k() as f64 * top.delay as f64 / (top.mu * 24.0);
        assert!((floor - greedy_ratio_floor(&inst, 24)).abs() < 1e-12 || floor == greedy_ratio_floor(&inst, 24));
        if ratio < floor {
            exceptions += 1;
        }
        if floor.is_finite() {
            worst_margin = worst_margin.min(ratio - floor);
        }
    }
    let elapsed = start.elapsed();
    let pass = exceptions == 0 && elapsed < Duration::from_secs(120);
    report(3, pass, &format!("500 instances, {exceptions} exceptions, smallest margin {worst_margin:.4}"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_04_gadget_instances() {
    let start = Instant::now();
    let p1 = greedy_gap_instance(0.2).unwrap();
    let g1 = oracle_greedy_reward(&p1, 8);
    let o1 = exact_opt_value(&p1, 8, DEFAULT_STATE_CAP).unwrap();
    let target = (3.0 - 0.2) / (4.0 - 2.0 * 0.2);
    let p2 = greedy_per_round_trap_instance(5, 0.2).unwrap();
    let g2 = deterministic_reward(&p2, &mut GreedyPerRound::new(&p2), 20).unwrap();
    let o2 = exact_opt_value(&p2, 20, DEFAULT_STATE_CAP).unwrap();
    let elapsed = start.elapsed();
    let pass = (g1 - 5.6).abs() <= 1e-9
        && (o1 - 7.2).abs() <= 1e-9
        && (g1 / o1 - 0.7778).abs() <= 1e-4
        && (g1 / o1 - target).abs() <= 1e-9
        && (g2 - 6.0).abs() <= 1e-9
        && (o2 - 20.0).abs() <= 1e-9
        && elapsed < Duration::from_secs(1);
    report(
        4,
        pass,
        &format!("greedy {g1}, OPT {o1}, ratio {:.6} vs {target:.6}; per-round {g2}, OPT {o2}", g1 / o1),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_05_lp_sandwich() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (n, inst) in desk_instances().iter().enumerate() {
        let t = 24u64;
        let lp = lp_bounds(inst, t);
        let greedy = oracle_greedy_reward(inst, t);
        let opt = exact_opt_value(inst, t, DEFAULT_STATE_CAP).unwrap();
        let tol = 1e-9;
        if !(lp.lower <= greedy + tol && greedy <= opt + tol && opt <= lp.upper + tol) {
            failures.push(format!("#{n}: {} <= {greedy} <= {opt} <= {}", lp.lower, lp.upper));
        }
        // Product and recursive forms of n'_k, both computed here.
        let d: Vec<f64> = inst.delays().iter().map(|&x| x as f64).collect();
        let mut recursive = t as f64 / d[0];
        for k in 0..inst.k() {
            if k > 0 {
                recursive *= (d[k - 1] - 1.0) / d[k];
            }
            let product = t as f64 / d[k] * d[..k].iter().map(|x| 1.0 - 1.0 / x).product::<f64>();
            if (product - recursive).abs() > 1e-9 || (lp.n_prime[k] - product).abs() > 1e-9 {
                failures.push(format!("#{n}: n'_{} forms disagree", k + 1));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty();
    report(
        5,
        pass,
        &format!("500 instances, {} failures{}", failures.len(), failures.first().map(|f| format!(", first {f}")).unwrap_or_default()),
        elapsed,
    );
    assert!(pass, "{failures:?}");
}

/// Every non-decreasing tuple with `sum 1/a_i = 1` and `prod a_i <= max_prod`.
fn dense_corpus(max_prod: u64) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, remaining: BigRational, prod: u64, max_prod: u64, out: &mut Vec<Vec<u32>>) {
        if remaining == BigRational::from_integer(0.into()) {
            out.push(prefix.clone());
            return;
        }
        let lo = *prefix.last().unwrap_or(&1);
        for a in lo..=max_prod as u32 {
            let p = prod * a as u64;
            if p > max_prod {
                break;
            }
            let r = BigRational::new(BigInt::one(), BigInt::from(a));
            if r > remaining {
                continue;
            }
            prefix.push(a);
            rec(prefix, remaining.clone() - r, p, max_prod, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), BigRational::one(), 1, max_prod, &mut out);
    out
}

#[test]
fn criterion_06_pinwheel() {
    let start = Instant::now();
    let yes = decide(&PinwheelInstance::new(vec![2, 4, 4]).unwrap(), DEFAULT_STATE_CAP);
    let yes_ok = match &yes.certificate {
        Certificate::Schedule { period, schedule } => {
            yes.status == PinwheelStatus::Yes
                && verify_schedule(schedule, *period, &PinwheelInstance::new(vec![2, 4, 4]).unwrap()).unwrap()
        }
        _ => false,
    };
    let no_ok = decide(&PinwheelInstance::new(vec![2, 3, 6]).unwrap(), DEFAULT_STATE_CAP).status == PinwheelStatus::No;
    let corpus = dense_corpus(10_000);
    let mut disagreements = Vec::new();
    let mut yes_count = 0;
    for a in &corpus {
        let inst = PinwheelInstance::new(a.clone()).unwrap();
        let verdict = decide(&inst, DEFAULT_STATE_CAP);
        if let Certificate::Schedule { period, schedule } = &verdict.certificate {
            assert!(verify_schedule(schedule, *period, &inst).unwrap());
        }
        let t = 2 * inst.window_product() as u64;
        let opt = exact_opt_value(&reduce_to_maxreward(&inst), t, DEFAULT_STATE_CAP).unwrap();
        let full = (opt - t as f64).abs() < 1e-9;
        if full {
            yes_count += 1;
        }
        if (verdict.status == PinwheelStatus::Yes) != full || verdict.status == PinwheelStatus::Unknown {
            disagreements.push(format!("{a:?}: {:?} vs OPT {opt} of {t}", verdict.status));
        }
    }
    let elapsed = start.elapsed();
    let pass = yes_ok && no_ok && disagreements.is_empty() && elapsed < Duration::from_secs(60);
    report(
        6,
        pass,
        &format!(
            "{{2,4,4}} YES verified: {yes_ok}; {{2,3,6}} NO: {no_ok}; {} dense instances ({yes_count} schedulable), {} disagreements",
            corpus.len(),
            disagreements.len()
        ),
        elapsed,
    );
    assert!(pass, "{disagreements:?}");
}

/// Mean over 20 seeds of the expected regret on the K*-Set instance
/// (K=6, K*=3, gap 0.2) at T = 10^4 with 250 inner runs each.
fn kstar_set_regret() -> &'static (Instance, Vec<f64>) {
    use std::sync::OnceLock;
    static CELL: OnceLock<(Instance, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let inst = kstar_set_instance(6, 3, 0.2).unwrap();
        let horizon = 10_000u64;
        let mut mean = vec![0.0; horizon as usize];
        for seed in 1..=20u64 {
            let curve = measure_regret(&inst, horizon, 250, SeedSpec::new(seed, 1), DEFAULT_ALPHA).unwrap();
            for (m, c) in mean.iter_mut().zip(curve) {
                *m += c / 20.0;
            }
        }
        (inst, mean)
    })
}

const DECADE_MID: u64 = 3_162;

#[test]
fn criterion_07_ucb_greedy_learning() {
    let start = Instant::now();
    let (inst, regret) = kstar_set_regret();
    let final_regret = regret[9_999];
    let bound = free_exploration_bound(inst, 1e4, 0.1).unwrap();
    let (s_early, _, _) = log_fit(regret, 1_000, DECADE_MID).unwrap();
    let (s_late, _, _) = log_fit(regret, DECADE_MID, 10_000).unwrap();
    let drift = (s_late - s_early) / s_early;
    let elapsed = start.elapsed();
    let pass = final_regret > 0.0 && final_regret < bound && drift.abs() <= 0.2 && elapsed < Duration::from_secs(300);
    report(
        7,
        pass,
        &format!(
            "regret(1e4) = {final_regret:.2}, bound {bound:.1}; slope vs ln t {s_early:.2} on [1e3,10^3.5], \
             {s_late:.2} on [10^3.5,1e4], drift {:+.1}%",
            100.0 * drift
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_lower_bound_report() {
    let start = Instant::now();
    let (inst, regret) = kstar_set_regret();
    let coefficient = kstar_set_lower_bound(inst.k(), k_star(&inst.delays()), 0.2, std::f64::consts::E).unwrap();
    let (slope, _, _) = log_fit(regret, DECADE_MID, 10_000).unwrap();
    let elapsed = start.elapsed();
    let pass = slope > 0.0 && (coefficient - 15.0).abs() < 1e-9;
    report(
        8,
        pass,
        &format!("measured UCB Greedy slope {slope:.2} per unit ln t; lower-bound coefficient (K-K*)/gap = {coefficient}"),
        elapsed,
    );
    assert!(pass);
}

fn base_config(k: usize, delay_mode: DelayMode, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        k,
        gap_low: 0.01,
        gap_high: 0.05,
        delay_mode,
        horizon: 10_000,
        inner_runs: 100,
        outer_reps: 20,
        master_seed: seed,
        alpha: DEFAULT_ALPHA,
        k_star_values: vec![],
        jester: None,
    }
}

fn median_curve(config: &ExperimentConfig, inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let curves: Vec<Vec<f64>> = (0..config.outer_reps)
        .map(|r| measure_regret(inst, config.horizon, config.inner_runs, config.replication_seed(r), config.alpha).unwrap())
        .collect();
    let finals = curves.iter().map(|c| *c.last().unwrap()).collect();
    (aggregate_quantiles(&curves).unwrap().median, finals)
}

#[test]
fn criterion_09_regimes() {
    let start = Instant::now();
    // (a) Logarithmic regime on a small-delay instance with K_g > K*.
    let (seed_a, inst_a) = (1..)
        .map(|s| {
            let cfg = base_config(20, DelayMode::Small, s);
            let inst = sample_synthetic_instance(&cfg, &mut derive_stream(&cfg.instance_seed())).unwrap();
            (s, inst)
        })
        .find(|(_, inst)| k_g(inst, default_kg_horizon(inst)) > k_star(&inst.delays()))
        .unwrap();
    let cfg_a = base_config(20, DelayMode::Small, seed_a);
    let (median_a, _) = median_curve(&cfg_a, &inst_a);
    let (_, _, r2) = log_fit(&median_a, 1_000, 10_000).unwrap();
    let pass_a = r2 >= 0.9;

    // (b) Constant regime: identical delays with K* = K = 8.
    let cfg_b = base_config(8, DelayMode::Identical { delay: 8 }, 2);
    let inst_b = sample_synthetic_instance(&cfg_b, &mut derive_stream(&cfg_b.instance_seed())).unwrap();
    let (median_b, _) = median_curve(&cfg_b, &inst_b);
    let (r5k, r10k) = (median_b[4_999], median_b[9_999]);
    let pass_b = (r10k - r5k).abs() <= 0.05 * r10k.abs();

    // (c) Illustrative instance with Bernoulli rewards: sign of final regret.
    let inst_c = Instance::bernoulli(&[0.5, 1.0, 1.0], &[1, 4, 4]).unwrap();
    let cfg_c = ExperimentConfig { k: 3, ..base_config(3, DelayMode::Small, 3) };
    let (_, finals_c) = median_curve(&ExperimentConfig { inner_runs: 250, ..cfg_c }, &inst_c);
    let negative = finals_c.iter().filter(|&&r| r < 0.0).count();
    let pass_c = negative as f64 >= 0.1 * finals_c.len() as f64;

    // (d) Identical delays 4, 6, 8 on shared gaps: final median regret
    // non-increasing in K*.
    let finals_d: Vec<f64> = [4u32, 6, 8]
        .iter()
        .map(|&d| {
            let cfg = base_config(8, DelayMode::Identical { delay: d }, 4);
            let inst = sample_synthetic_instance(&cfg, &mut derive_stream(&cfg.instance_seed())).unwrap();
            *median_curve(&cfg, &inst).0.last().unwrap()
        })
        .collect();
    let pass_d = finals_d.windows(2).all(|w| w[1] <= w[0]);

    let elapsed = start.elapsed();
    let pass = pass_a && pass_b && pass_c && pass_d && elapsed < Duration::from_secs(900);
    report(
        9,
        pass,
        &format!(
            "(a) seed {seed_a}, K*={}, K_g={}, R^2 = {r2:.4} [{}]; (b) median regret {r5k:.4} at 5e3, {r10k:.4} at 1e4 [{}]; \
             (c) {negative}/{} seeds negative, finals min {:.3} max {:.3} [{}]; (d) final medians {finals_d:.2?} for K* = 4,6,8 [{}]",
            k_star(&inst_a.delays()),
            k_g(&inst_a, default_kg_horizon(&inst_a)),
            ok(pass_a),
            ok(pass_b),
            finals_c.len(),
            finals_c.iter().copied().fold(f64::INFINITY, f64::min),
            finals_c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ok(pass_c),
            ok(pass_d),
        ),
        elapsed,
    );
    assert!(pass);
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

/// Rewards for the exhaustive enumeration: arms with mean 0 or 1 pay that,
/// mean-1/2 arms consume the next bit of `bits`.
struct BitRewards {
    bits: u32,
    used: u32,
}

impl RewardSource for BitRewards {
    fn draw(&mut self, instance: &Instance, arm: ArmIndex, _slot: u64) -> f64 {
        let mu = instance.arm(arm).mu;
        if mu == 0.0 || mu == 1.0 {
            return mu;
        }
        let bit = (self.bits >> self.used) & 1;
        self.used += 1;
        bit as f64
    }
}

/// Exact distribution of twice the cumulative reward at every slot, as
/// counts out of `2^T` equally likely bit strings.
fn reward_distribution<P: Policy>(inst: &Instance, horizon: u64, make: impl Fn() -> P) -> BTreeMap<(u64, u64), u64> {
    let mut dist = BTreeMap::new();
    for bits in 0..(1u32 << horizon) {
        let mut policy = make();
        let trace = run_with_rewards(inst, &mut policy, horizon, &mut BitRewards { bits, used: 0 }).unwrap();
        let mut cum = 0u64;
        for rec in trace.records() {
            cum += (2.0 * rec.reward) as u64;
            *dist.entry((rec.slot, cum)).or_insert(0) += 1;
        }
    }
    dist
}

#[test]
fn criterion_10_block_adapter_equivalence() {
    let start = Instant::now();
    let horizon = 8u64;
    let grid = [0.0, 0.5, 1.0];
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for k in 1..=4usize {
        // Multisets of means from the grid.
        let mut idx = vec![0usize; k];
        loop {
            let mus: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            for d in 1..=3u32.min(k as u32) {
                let inst = Instance::bernoulli(&mus, &vec![d; k]).unwrap();
                let og_slot = reward_distribution(&inst, horizon, || OracleGreedy);
                let og_block = reward_distribution(&inst, horizon, || {
                    BlockAdapter::new(SimulatedBlock::new(OracleGreedy, k, d), &inst).unwrap()
                });
                let ucb_slot = reward_distribution(&inst, horizon, || UcbGreedy::for_instance(&inst, DEFAULT_ALPHA));
                let ucb_block = reward_distribution(&inst, horizon, || {
                    BlockAdapter::new(SimulatedBlock::new(UcbGreedy::for_instance(&inst, DEFAULT_ALPHA), k, d), &inst).unwrap()
                });
                checked += 2;
                if og_slot != og_block {
                    mismatches.push(format!("oracle greedy, mus {mus:?}, D={d}"));
                }
                if ucb_slot != ucb_block {
                    mismatches.push(format!("ucb greedy, mus {mus:?}, D={d}"));
                }
            }
            // Next non-decreasing index tuple.
            let Some(pos) = (0..k).rev().find(|&p| idx[p] < grid.len() - 1) else { break };
            idx[pos] += 1;
            for p in pos + 1..k {
                idx[p] = idx[pos];
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(120);
    report(
        10,
        pass,
        &format!("{checked} (instance, policy) pairs, T <= 8, {} mismatches", mismatches.len()),
        elapsed,
    );
    assert!(pass, "{mismatches:?}");
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_blocking-bandits")
}

fn hash_outputs(stdout: &[u8], files: &[&Path]) -> String {
    let mut h = Sha256::new();
    h.update(stdout);
    for f in files {
        if f.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(f).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for e in entries {
                h.update(e.file_name().unwrap().to_string_lossy().as_bytes());
                h.update(std::fs::read(&e).unwrap());
            }
        } else {
            h.update(std::fs::read(f).unwrap());
        }
    }
    hex::encode(h.finalize())
}

#[test]
fn criterion_11_cli_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    std::fs::write(
        p("intro.json"),
        r#"{"arms":[{"id":1,"mu":0.5,"delay":1},{"id":2,"mu":1.0,"delay":4},{"id":3,"mu":1.0,"delay":4}]}"#,
    )
    .unwrap();
    std::fs::write(
        p("synthetic.json"),
        r#"{"K":5,"gap_low":0.05,"gap_high":0.1,"delay_mode":{"mode":"small"},"T":300,"inner_runs":5,"outer_reps":3,"master_seed":9,"k_star_values":[2,3]}"#,
    )
    .unwrap();
    let mut ratings = String::from("joke_id,rating\n");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for joke in 1..=4 {
        for _ in 0..30 {
            let r: f64 = if rng.gen_bool(0.1) { 99.0 } else { (rng.gen_range(-100..=100) as f64) / 10.0 };
            ratings.push_str(&format!("{joke},{r}\n"));
        }
    }
    std::fs::write(p("ratings.csv"), ratings).unwrap();
    std::fs::write(
        p("jester.json"),
        format!(
            r#"{{"K":3,"gap_low":0.0,"gap_high":0.0,"delay_mode":{{"mode":"small"}},"T":200,"inner_runs":4,"outer_reps":3,"master_seed":4,"jester":{{"ratings_path":{:?},"n_jokes":3,"min_ratings":20}}}}"#,
            p("ratings.csv")
        ),
    )
    .unwrap();
    let s = |x: &Path| x.to_str().unwrap().to_string();

    let commands: Vec<(&str, Vec<String>, Vec<std::path::PathBuf>)> = vec![
        ("simulate", vec!["simulate".into(), "--instance".into(), s(&p("intro.json")), "--policy".into(), "ucb-greedy".into(), "--horizon".into(), "200".into(), "--seed".into(), "11".into(), "--out".into(), s(&p("trace.csv"))], vec![p("trace.csv"), p("trace.csv.meta.json")]),
        ("solve", vec!["solve".into(), "--instance".into(), s(&p("intro.json")), "--horizon".into(), "8".into()], vec![]),
        ("bounds", vec!["bounds".into(), "--instance".into(), s(&p("intro.json")), "--horizon".into(), "1000".into(), "--eps".into(), "0.1".into()], vec![]),
        ("pinwheel decide", vec!["pinwheel".into(), "decide".into(), "--a".into(), "2,4,4".into()], vec![]),
        ("pinwheel reduce", vec!["pinwheel".into(), "reduce".into(), "--a".into(), "2,4,4".into(), "--out".into(), s(&p("reduced.json"))], vec![p("reduced.json"), p("reduced.json.meta.json")]),
        ("experiment synthetic", vec!["experiment".into(), "--suite".into(), "synthetic".into(), "--config".into(), s(&p("synthetic.json")), "--out".into(), s(&p("exp_syn")), "--plot".into()], vec![p("exp_syn")]),
        ("experiment kstar-scaling", vec!["experiment".into(), "--suite".into(), "kstar-scaling".into(), "--config".into(), s(&p("synthetic.json")), "--out".into(), s(&p("exp_ks"))], vec![p("exp_ks")]),
        ("experiment jester", vec!["experiment".into(), "--suite".into(), "jester".into(), "--config".into(), s(&p("jester.json")), "--out".into(), s(&p("exp_j"))], vec![p("exp_j")]),
        ("jester", vec!["jester".into(), "--ratings".into(), s(&p("ratings.csv")), "--n-jokes".into(), "3".into(), "--min-ratings".into(), "20".into(), "--seed".into(), "3".into(), "--out".into(), s(&p("jester_instance.json"))], vec![p("jester_instance.json")]),
        ("emit-plot", vec!["emit-plot".into(), "--curve".into(), s(&p("exp_syn/synthetic.csv")), "--out".into(), s(&p("plot.svg")), "--log-x".into()], vec![p("plot.svg"), p("plot.svg.meta.json")]),
    ];
    let mut unstable = Vec::new();
    for (name, args, files) in &commands {
        let mut hashes = Vec::new();
        for _ in 0..3 {
            let out = Command::new(bin()).args(args).output().unwrap();
            assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
            let refs: Vec<&Path> = files.iter().map(|f| f.as_path()).collect();
            hashes.push(hash_outputs(&out.stdout, &refs));
        }
        if hashes.iter().any(|h| *h != hashes[0]) {
            unstable.push(*name);
        }
    }
    let elapsed = start.elapsed();
    let pass = unstable.is_empty();
    report(11, pass, &format!("{} commands x 3 runs, unstable: {unstable:?}", commands.len()), elapsed);
    assert!(pass);
}
