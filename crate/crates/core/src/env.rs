//! The blocking environment: cooldown bookkeeping, the step rule and
//! trajectory execution for any [`Policy`].

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{derive_stream, sample_reward, ArmIndex, Instance, SeedSpec};

/// What a policy sees at the start of a slot: the clock and which arms are
/// available. Delays are not exposed here; policies that need them must be
/// built from the [`Instance`].
#[derive(Clone, Copy, Debug)]
pub struct SlotView<'a> {
    /// 1-based slot number.
    pub t: u64,
    /// `available[i]` is true iff arm index `i` has no remaining cooldown.
    pub available: &'a [bool],
}

impl SlotView<'_> {
    pub fn available_arms(&self) -> impl Iterator<Item = ArmIndex> + '_ {
        self.available
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn is_empty(&self) -> bool {
        !self.available.iter().any(|&a| a)
    }
}

/// A per-slot decision rule. `None` is the idle action.
pub trait Policy {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex>;

    /// Called after every non-idle slot with the realized reward.
    fn observe(&mut self, _arm: ArmIndex, _reward: f64) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        (**self).choose(view)
    }

    fn observe(&mut self, arm: ArmIndex, reward: f64) {
        (**self).observe(arm, reward)
    }
}

/// Where realized rewards come from.
pub trait RewardSource {
    fn draw(&mut self, instance: &Instance, arm: ArmIndex, slot: u64) -> f64;
}

/// Draws from each arm's distribution on demand, one draw per play.
pub struct StreamRewards<R>(pub R);

impl<R: Rng> RewardSource for StreamRewards<R> {
    fn draw(&mut self, instance: &Instance, arm: ArmIndex, _slot: u64) -> f64 {
        sample_reward(&instance.arm(arm).dist, &mut self.0)
    }
}

/// Every play returns the arm's mean.
pub struct MeanRewards;

impl RewardSource for MeanRewards {
    fn draw(&mut self, instance: &Instance, arm: ArmIndex, _slot: u64) -> f64 {
        instance.arm(arm).mu
    }
}

/// Rewards `X_i(t)` drawn up front for every arm and slot, so that several
/// policies can be run against the same realization.
#[derive(Clone, Debug)]
pub struct RewardTable {
    horizon: u64,
    values: Vec<f64>,
}

impl RewardTable {
    /// Fills the table slot by slot, arm by arm.
    pub fn sample<R: Rng>(instance: &Instance, horizon: u64, rng: &mut R) -> Self {
        let k = instance.k();
        let mut values = Vec::with_capacity(k * horizon as usize);
        for _ in 0..horizon {
            for arm in instance.arms() {
                values.push(sample_reward(&arm.dist, rng));
            }
        }
        Self { horizon, values }
    }

    pub fn from_values(k: usize, horizon: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * horizon as usize {
            return Err(Error::InvalidArgument(format!(
                "reward table needs {} entries, got {}",
                k * horizon as usize,
                values.len()
            )));
        }
        Ok(Self { horizon, values })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn get(&self, k: usize, arm: ArmIndex, slot: u64) -> f64 {
        self.values[(slot as usize - 1) * k + arm]
    }
}

impl RewardSource for &RewardTable {
    fn draw(&mut self, instance: &Instance, arm: ArmIndex, slot: u64) -> f64 {
        self.get(instance.k(), arm, slot)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub arm: Option<ArmIndex>,
    pub reward: f64,
}

/// Per-slot history of one trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    records: Vec<SlotRecord>,
    cum_reward: f64,
}

impl Trace {
    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cum_reward(&self) -> f64 {
        self.cum_reward
    }

    fn push(&mut self, record: SlotRecord) {
        self.cum_reward += record.reward;
        self.records.push(record);
    }

    /// Play count per arm index.
    pub fn counts(&self, k: usize) -> Vec<u64> {
        let mut counts = vec![0; k];
        for r in &self.records {
            if let Some(a) = r.arm {
                counts[a] += 1;
            }
        }
        counts
    }

    /// The arm sequence, idle slots as `None`.
    pub fn actions(&self) -> Vec<Option<ArmIndex>> {
        self.records.iter().map(|r| r.arm).collect()
    }

    /// Writes `slot,arm_id,reward,cum_reward`; idle slots leave `arm_id`
    /// empty.
    pub fn write_csv<W: Write>(&self, instance: &Instance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "arm_id", "reward", "cum_reward"])?;
        let mut cum = 0.0;
        for r in &self.records {
            cum += r.reward;
            let id = r.arm.map(|a| instance.arm(a).id.to_string()).unwrap_or_default();
            w.write_record([r.slot.to_string(), id, r.reward.to_string(), cum.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mutable state of one trajectory.
#[derive(Clone, Debug)]
pub struct EnvState<'a> {
    instance: &'a Instance,
    t: u64,
    cooldown: Vec<u32>,
    available: Vec<bool>,
    trace: Option<Trace>,
}

impl<'a> EnvState<'a> {
    /// Fresh state at slot 1 with every arm available.
    pub fn new(instance: &'a Instance) -> Self {
        Self {
            instance,
            t: 1,
            cooldown: vec![0; instance.k()],
            available: vec![true; instance.k()],
            trace: Some(Trace::default()),
        }
    }

    /// Like [`EnvState::new`] but keeps no per-slot records.
    pub fn untraced(instance: &'a Instance) -> Self {
        Self { trace: None, ..Self::new(instance) }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn cooldown(&self) -> &[u32] {
        &self.cooldown
    }

    pub fn view(&self) -> SlotView<'_> {
        SlotView { t: self.t, available: &self.available }
    }

    /// Arm indices with zero remaining cooldown.
    pub fn available_set(&self) -> Vec<ArmIndex> {
        self.view().available_arms().collect()
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn into_trace(self) -> Option<Trace> {
        self.trace
    }

    /// Plays `choice` (or idles) in the current slot and advances the clock.
    pub fn step<S: RewardSource + ?Sized>(
        &mut self,
        choice: Option<ArmIndex>,
        rewards: &mut S,
    ) -> Result<f64> {
        if let Some(arm) = choice {
            if arm >= self.cooldown.len() {
                return Err(Error::InvalidArgument(format!("arm index {arm} out of range")));
            }
            if self.cooldown[arm] > 0 {
                return Err(Error::BlockedArm {
                    id: self.instance.arm(arm).id,
                    remaining: self.cooldown[arm],
                });
            }
        }
        let reward = match choice {
            Some(arm) => rewards.draw(self.instance, arm, self.t),
            None => 0.0,
        };
        for (c, avail) in self.cooldown.iter_mut().zip(self.available.iter_mut()) {
            if *c > 0 {
                *c -= 1;
                *avail = *c == 0;
            }
        }
        if let Some(arm) = choice {
            let c = self.instance.arm(arm).delay - 1;
            self.cooldown[arm] = c;
            self.available[arm] = c == 0;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(SlotRecord { slot: self.t, arm: choice, reward });
        }
        self.t += 1;
        Ok(reward)
    }
}

/// Runs `policy` for `horizon` slots against an arbitrary reward source.
pub fn run_with_rewards<P, S>(
    instance: &Instance,
    policy: &mut P,
    horizon: u64,
    rewards: &mut S,
) -> Result<Trace>
where
    P: Policy + ?Sized,
    S: RewardSource + ?Sized,
{
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut state = EnvState::new(instance);
    for _ in 0..horizon {
        let choice = policy.choose(&state.view());
        let reward = state.step(choice, rewards)?;
        if let Some(arm) = choice {
            policy.observe(arm, reward);
        }
    }
    Ok(state.into_trace().expect("traced state"))
}

/// Runs `policy` with rewards drawn from the stream for `seed`. The result is
/// a pure function of the arguments.
pub fn run_policy<P: Policy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
    horizon: u64,
    seed: SeedSpec,
) -> Result<Trace> {
    let mut rewards = StreamRewards(derive_stream(&seed));
    run_with_rewards(instance, policy, horizon, &mut rewards)
}

/// Cumulative reward after every slot, without keeping a trace.
pub fn cumulative_rewards<P, S>(
    instance: &Instance,
    policy: &mut P,
    horizon: u64,
    rewards: &mut S,
) -> Result<Vec<f64>>
where
    P: Policy + ?Sized,
    S: RewardSource + ?Sized,
{
    let mut state = EnvState::untraced(instance);
    let mut out = Vec::with_capacity(horizon as usize);
    let mut cum = 0.0;
    for _ in 0..horizon {
        let choice = policy.choose(&state.view());
        let reward = state.step(choice, rewards)?;
        if let Some(arm) = choice {
            policy.observe(arm, reward);
        }
        cum += reward;
        out.push(cum);
    }
    Ok(out)
}
