//! Online decision rules.
//!
//! All rules break ties toward the lower arm id. Oracle rules read means and
//! delays from the [`Instance`] they are built from; [`UcbGreedy`] only ever
//! sees arm ids, the available set and its own reward observations.

use crate::env::{Policy, SlotView};
use crate::error::{Error, Result};
use crate::model::{ArmIndex, Instance};

/// Default exploration constant of the UCB bonus.
pub const DEFAULT_ALPHA: f64 = 8.0;

/// Plays the available arm with the highest true mean.
#[derive(Clone, Debug, Default)]
pub struct OracleGreedy;

impl OracleGreedy {
    pub fn new() -> Self {
        Self
    }
}

/// Arm indices are in canonical order (mean descending, id ascending), so the
/// first available index is the greedy choice.
pub fn oracle_greedy_choose(view: &SlotView<'_>) -> Option<ArmIndex> {
    view.available_arms().next()
}

impl Policy for OracleGreedy {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        oracle_greedy_choose(view)
    }
}

/// Counts and running means kept by UCB Greedy.
#[derive(Clone, Debug, PartialEq)]
pub struct UcbState {
    pub n: Vec<u64>,
    pub mu_hat: Vec<f64>,
    /// Global slot counter, idle slots included.
    pub t: u64,
    pub alpha: f64,
}

impl UcbState {
    pub fn new(k: usize, alpha: f64) -> Self {
        Self { n: vec![0; k], mu_hat: vec![0.0; k], t: 0, alpha }
    }

    /// `mu_hat + sqrt(alpha * ln t / n)`; `+inf` for an unplayed arm.
    pub fn index(&self, arm: ArmIndex) -> f64 {
        ucb_index(self.mu_hat[arm], self.n[arm], self.t, self.alpha)
    }

    /// Records one observation; the mean is updated incrementally after the
    /// count is bumped.
    pub fn update(&mut self, arm: ArmIndex, reward: f64) {
        self.n[arm] += 1;
        let n = self.n[arm] as f64;
        self.mu_hat[arm] = (1.0 - 1.0 / n) * self.mu_hat[arm] + reward / n;
    }
}

pub fn ucb_index(mu_hat: f64, n: u64, t: u64, alpha: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    mu_hat + (alpha * (t as f64).ln() / n as f64).sqrt()
}

/// UCB Greedy: plays arm id `t` for the first `K` slots, then the available
/// arm with the highest upper confidence index.
#[derive(Clone, Debug)]
pub struct UcbGreedy {
    state: UcbState,
    ids: Vec<u32>,
    /// `init_order[t-1]` is the index of the arm with id `t`.
    init_order: Vec<ArmIndex>,
}

impl UcbGreedy {
    /// `ids[i]` is the label of arm index `i`; labels must be `1..=K`.
    pub fn new(ids: Vec<u32>, alpha: f64) -> Self {
        let k = ids.len();
        let mut init_order = vec![0; k];
        for (index, &id) in ids.iter().enumerate() {
            init_order[id as usize - 1] = index;
        }
        Self { state: UcbState::new(k, alpha), ids, init_order }
    }

    pub fn for_instance(instance: &Instance, alpha: f64) -> Self {
        Self::new(instance.ids(), alpha)
    }

    pub fn state(&self) -> &UcbState {
        &self.state
    }

    /// Choice rule over an explicit state, exposed for testing.
    pub fn choose_with(&self, state: &UcbState, view: &SlotView<'_>) -> Option<ArmIndex> {
        let k = self.ids.len();
        if (view.t as usize) <= k {
            let arm = self.init_order[view.t as usize - 1];
            if view.available[arm] {
                return Some(arm);
            }
        }
        let mut best: Option<(ArmIndex, f64)> = None;
        for arm in view.available_arms() {
            let idx = state.index(arm);
            best = match best {
                Some((b, bi)) if bi > idx || (bi == idx && self.ids[b] < self.ids[arm]) => Some((b, bi)),
                _ => Some((arm, idx)),
            };
        }
        best.map(|(arm, _)| arm)
    }
}

impl Policy for UcbGreedy {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        self.state.t = view.t;
        self.choose_with(&self.state, view)
    }

    fn observe(&mut self, arm: ArmIndex, reward: f64) {
        self.state.update(arm, reward);
    }
}

/// Plays the available arm maximizing `mu / D`.
#[derive(Clone, Debug)]
pub struct GreedyPerRound {
    ratio: Vec<f64>,
    ids: Vec<u32>,
}

impl GreedyPerRound {
    pub fn new(instance: &Instance) -> Self {
        Self {
            ratio: instance.arms().iter().map(|a| a.mu / a.delay as f64).collect(),
            ids: instance.ids(),
        }
    }
}

impl Policy for GreedyPerRound {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        view.available_arms().reduce(|b, a| {
            let (rb, ra) = (self.ratio[b], self.ratio[a]);
            if ra > rb || (ra == rb && self.ids[a] < self.ids[b]) {
                a
            } else {
                b
            }
        })
    }
}

/// Cycles strictly through a fixed arm order, idling whenever the scheduled
/// arm is blocked.
#[derive(Clone, Debug)]
pub struct RoundRobin {
    order: Vec<ArmIndex>,
    pos: usize,
}

impl RoundRobin {
    pub fn new(order: Vec<ArmIndex>) -> Self {
        Self { order, pos: 0 }
    }

    /// All arms in ascending id order.
    pub fn all(instance: &Instance) -> Self {
        let order = (1..=instance.k() as u32)
            .map(|id| instance.index_of_id(id).expect("ids are 1..=K"))
            .collect();
        Self::new(order)
    }
}

impl Policy for RoundRobin {
    fn choose(&mut self, view: &SlotView<'_>) -> Option<ArmIndex> {
        let arm = self.order[self.pos % self.order.len()];
        self.pos += 1;
        view.available[arm].then_some(arm)
    }
}

/// Replays a cyclic schedule verbatim. Blocked entries are passed through so
/// the environment reports them.
#[derive(Clone, Debug)]
pub struct FixedSchedule {
    schedule: Vec<Option<ArmIndex>>,
    pos: usize,
}

impl FixedSchedule {
    pub fn new(schedule: Vec<Option<ArmIndex>>) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::InvalidArgument("fixed schedule is empty".into()));
        }
        Ok(Self { schedule, pos: 0 })
    }

    /// Parses comma-separated arm ids; `-` marks an idle slot.
    pub fn parse(spec: &str, instance: &Instance) -> Result<Self> {
        let schedule = spec
            .split(',')
            .map(str::trim)
            .map(|tok| {
                if tok == "-" {
                    return Ok(None);
                }
                let id: u32 = tok
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad arm id {tok:?} in schedule")))?;
                instance
                    .index_of_id(id)
                    .map(Some)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown arm id {id} in schedule")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schedule)
    }
}

impl Policy for FixedSchedule {
    fn choose(&mut self, _view: &SlotView<'_>) -> Option<ArmIndex> {
        let a = self.schedule[self.pos % self.schedule.len()];
        self.pos += 1;
        a
    }
}

/// A rule that commits to `D` distinct arms per block of `D` slots and sees
/// the rewards of a block only once the block is over (semi-bandit feedback).
pub trait BlockPolicy {
    /// Arms for block `block` (0-based), in intended play order.
    fn next_block(&mut self, block: u64, d: usize) -> Vec<ArmIndex>;

    /// Rewards of the block just finished, in slot order.
    fn observe_block(&mut self, _feedback: &[(ArmIndex, f64)]) {}
}

impl<B: BlockPolicy + ?Sized> BlockPolicy for Box<B> {
    fn next_block(&mut self, block: u64, d: usize) -> Vec<ArmIndex> {
        (**self).next_block(block, d)
    }

    fn observe_block(&mut self, feedback: &[(ArmIndex, f64)]) {
        (**self).observe_block(feedback)
    }
}

/// Always the `D` best arms, best first.
#[derive(Clone, Debug, Default)]
pub struct TopArmsBlock;

impl BlockPolicy for TopArmsBlock {
    fn next_block(&mut self, _block: u64, d: usize) -> Vec<ArmIndex> {
        (0..d).collect()
    }
}

/// Turns a per-slot policy into a block policy by planning each block with
/// the information available at the block start.
///
/// Inside a block every arm that becomes available was last played before the
/// block began, so a per-slot rule whose choice depends only on the
/// statistics of available arms makes exactly the same decisions as when run
/// slot by slot. Oracle Greedy and UCB Greedy both qualify.
#[derive(Clone, Debug)]
pub struct SimulatedBlock<P> {
    inner: P,
    delay: u32,
    cooldown: Vec<u32>,
}

impl<P: Policy> SimulatedBlock<P> {
    pub fn new(inner: P, k: usize, delay: u32) -> Self {
        Self { inner, delay, cooldown: vec![0; k] }
    }
}

impl<P: Policy> BlockPolicy for SimulatedBlock<P> {
    fn next_block(&mut self, block: u64, d: usize) -> Vec<ArmIndex> {
        let mut out = Vec::with_capacity(d);
        for offset in 0..d {
            let available: Vec<bool> = self.cooldown.iter().map(|&c| c == 0).collect();
            let view = SlotView { t: block * d as u64 + offset as u64 + 1, available: &available };
            let choice = self.inner.choose(&view);
            for c in self.cooldown.iter_mut() {
                *c = c.saturating_sub(1);
            }
            if let Some(arm) = choice {
                self.cooldown[arm] = self.delay - 1;
                out.push(arm);
            }
        }
        out
    }

    fn observe_block(&mut self, feedback: &[(ArmIndex, f64)]) {
        for &(arm, reward) in feedback {
            self.inner.observe(arm, reward);
        }
    }
}

/// Runs a [`BlockPolicy`] slot by slot on an instance whose arms all share
/// one delay `D <= K`.
///
/// A block is emitted in the block policy's order when that order keeps every
/// arm repeated from the previous block at least `D` slots apart. Otherwise
/// each repeated arm is pinned to its offset in the previous block and the
/// remaining arms fill the free offsets in the given order.
#[derive(Clone, Debug)]
pub struct BlockAdapter<B> {
    inner: B,
    d: usize,
    k: usize,
    block: u64,
    offset: usize,
    current: Vec<ArmIndex>,
    feedback: Vec<(ArmIndex, f64)>,
}

impl<B: BlockPolicy> BlockAdapter<B> {
    pub fn new(inner: B, instance: &Instance) -> Result<Self> {
        let d = instance.arm(0).delay;
        if instance.arms().iter().any(|a| a.delay != d) {
            return Err(Error::InvalidArgument("block adapter needs equal delays".into()));
        }
        if d as usize > instance.k() {
            return Err(Error::InvalidArgument(format!(
                "block adapter needs D <= K, got D={d}, K={}",
                instance.k()
            )));
        }
        Ok(Self {
            inner,
            d: d as usize,
            k: instance.k(),
            block: 0,
            offset: 0,
            current: Vec::new(),
            feedback: Vec::new(),
        })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn start_block(&mut self) -> Result<()> {
        if !self.feedback.is_empty() {
            self.inner.observe_block(&self.feedback);
            self.feedback.clear();
        }
        let proposed = self.inner.next_block(self.block, self.d);
        validate_block(&proposed, self.d, self.k)?;
        self.current = arrange_block(&self.current, proposed);
        self.block += 1;
        self.offset = 0;
        Ok(())
    }

    /// Next arm, or the block policy's contract violation.
    pub fn try_choose(&mut self) -> Result<ArmIndex> {
        if self.offset == self.current.len() || self.current.is_empty() {
            self.start_block()?;
        }
        let arm = self.current[self.offset];
        self.offset += 1;
        Ok(arm)
    }
}

fn validate_block(block: &[ArmIndex], d: usize, k: usize) -> Result<()> {
    if block.len() != d {
        return Err(Error::BlockContract(format!("block has {} arms, expected {d}", block.len())));
    }
    let mut seen = vec![false; k];
    for &a in block {
        if a >= k {
            return Err(Error::BlockContract(format!("arm index {a} out of range")));
        }
        if seen[a] {
            return Err(Error::BlockContract(format!("arm index {a} repeated within a block")));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Orders `next` so that every arm shared with `prev` is at least one block
/// length after its previous play.
pub fn arrange_block(prev: &[ArmIndex], next: Vec<ArmIndex>) -> Vec<ArmIndex> {
    let prev_offset = |arm: ArmIndex| prev.iter().position(|&p| p == arm);
    let feasible = next
        .iter()
        .enumerate()
        .all(|(o, &a)| prev_offset(a).is_none_or(|po| o >= po));
    if feasible {
        return next;
    }
    let mut slots: Vec<Option<ArmIndex>> = vec![None; next.len()];
    for &a in &next {
        if let Some(po) = prev_offset(a) {
            slots[po] = Some(a);
        }
    }
    let mut fresh = next.iter().copied().filter(|&a| prev_offset(a).is_none());
    slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| fresh.next().expect("one fresh arm per free offset")))
        .collect()
}

impl<B: BlockPolicy> Policy for BlockAdapter<B> {
    /// Panics if the block policy breaks its contract; use
    /// [`BlockAdapter::try_choose`] to get the error instead.
    fn choose(&mut self, _view: &SlotView<'_>) -> Option<ArmIndex> {
        Some(self.try_choose().unwrap_or_else(|e| panic!("{e}")))
    }

    fn observe(&mut self, arm: ArmIndex, reward: f64) {
        self.feedback.push((arm, reward));
    }
}

/// Builds a policy from its CLI name: `oracle-greedy`, `ucb-greedy`,
/// `greedy-per-round`, `round-robin`, `fixed:<ids>` or `block:<name>` where
/// `<name>` is `top`, `oracle-greedy` or `ucb-greedy`.
pub fn policy_by_name(name: &str, instance: &Instance, alpha: f64) -> Result<Box<dyn Policy>> {
    if let Some(spec) = name.strip_prefix("fixed:") {
        return Ok(Box::new(FixedSchedule::parse(spec, instance)?));
    }
    if let Some(inner) = name.strip_prefix("block:") {
        let k = instance.k();
        let d = instance.arm(0).delay;
        let block: Box<dyn BlockPolicy> = match inner {
            "top" => Box::new(TopArmsBlock),
            "oracle-greedy" => Box::new(SimulatedBlock::new(OracleGreedy, k, d)),
            "ucb-greedy" => Box::new(SimulatedBlock::new(UcbGreedy::for_instance(instance, alpha), k, d)),
            other => return Err(Error::UnknownPolicy(format!("block:{other}"))),
        };
        return Ok(Box::new(BlockAdapter::new(block, instance)?));
    }
    Ok(match name {
        "oracle-greedy" => Box::new(OracleGreedy),
        "ucb-greedy" => Box::new(UcbGreedy::for_instance(instance, alpha)),
        "greedy-per-round" => Box::new(GreedyPerRound::new(instance)),
        "round-robin" => Box::new(RoundRobin::all(instance)),
        other => return Err(Error::UnknownPolicy(other.to_string())),
    })
}
