//! Arms, instances, reward sampling and the seeding contract.
//!
//! Every other module refers to arms by their *index* in a normalized
//! [`Instance`]: arms are sorted by non-increasing mean, ties broken by
//! ascending id, so index 0 is the best arm. The original `id` labels survive
//! the sort and are what files and the CLI print.
//!
//! Delays follow the formal model: an arm played at slot `t` is playable again
//! at slot `t + delay`, so `delay == 1` means never blocked.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of an arm inside a normalized [`Instance`] (0 = highest mean).
pub type ArmIndex = usize;

/// Random stream used for reward draws. See [`derive_stream`].
pub type RewardStream = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum RewardDistribution {
    /// Point mass at the mean.
    Deterministic(f64),
    Bernoulli(f64),
    /// Uniform draw, with replacement, from a fixed list of values.
    Empirical(Arc<[f64]>),
}

impl RewardDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            RewardDistribution::Deterministic(m) | RewardDistribution::Bernoulli(m) => *m,
            RewardDistribution::Empirical(values) => {
                values.iter().sum::<f64>() / values.len() as f64
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RewardDistribution::Deterministic(_) => "deterministic",
            RewardDistribution::Bernoulli(_) => "bernoulli",
            RewardDistribution::Empirical(_) => "empirical",
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            RewardDistribution::Deterministic(m) | RewardDistribution::Bernoulli(m) => {
                if !(0.0..=1.0).contains(m) {
                    return Err(format!("mu {m} outside [0,1]"));
                }
            }
            RewardDistribution::Empirical(values) => {
                if values.is_empty() {
                    return Err("empirical distribution has no values".into());
                }
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(format!("empirical value {v} outside [0,1]"));
                }
            }
        }
        Ok(())
    }
}

/// Draws one reward. Deterministic arms return their mean, Bernoulli arms 0
/// or 1, empirical arms a uniformly chosen stored value.
pub fn sample_reward<R: Rng + ?Sized>(dist: &RewardDistribution, rng: &mut R) -> f64 {
    match dist {
        RewardDistribution::Deterministic(m) => *m,
        RewardDistribution::Bernoulli(p) => {
            if rng.gen_bool(*p) {
                1.0
            } else {
                0.0
            }
        }
        RewardDistribution::Empirical(values) => values[rng.gen_range(0..values.len())],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSpec {
    pub id: u32,
    pub mu: f64,
    pub delay: u32,
    pub dist: RewardDistribution,
}

impl ArmSpec {
    /// Builds an arm whose mean is taken from `dist`.
    pub fn new(id: u32, delay: u32, dist: RewardDistribution) -> Result<Self> {
        if delay < 1 {
            return Err(Error::InvalidInstance(format!("arm {id}: delay < 1")));
        }
        dist.validate()
            .map_err(|msg| Error::InvalidInstance(format!("arm {id}: {msg}")))?;
        Ok(Self { id, mu: dist.mean(), delay, dist })
    }

    pub fn bernoulli(id: u32, mu: f64, delay: u32) -> Result<Self> {
        Self::new(id, delay, RewardDistribution::Bernoulli(mu))
    }

    pub fn deterministic(id: u32, mu: f64, delay: u32) -> Result<Self> {
        Self::new(id, delay, RewardDistribution::Deterministic(mu))
    }

    pub fn empirical(id: u32, values: Vec<f64>, delay: u32) -> Result<Self> {
        Self::new(id, delay, RewardDistribution::Empirical(values.into()))
    }
}

/// A validated blocking-bandit instance with arms in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    arms: Vec<ArmSpec>,
}

fn canonical_order(a: &ArmSpec, b: &ArmSpec) -> Ordering {
    b.mu.total_cmp(&a.mu).then(a.id.cmp(&b.id))
}

impl Instance {
    /// Validates the arms and sorts them into canonical order.
    ///
    /// Ids must be a permutation of `1..=K`.
    pub fn new(mut arms: Vec<ArmSpec>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::InvalidInstance("arms: at least one arm required".into()));
        }
        let k = arms.len();
        let mut seen = vec![false; k];
        for (pos, arm) in arms.iter().enumerate() {
            let id = arm.id as usize;
            if id == 0 || id > k || seen[id - 1] {
                return Err(Error::InvalidInstance(format!(
                    "arms[{pos}].id: ids must be a permutation of 1..={k}, got {}",
                    arm.id
                )));
            }
            seen[id - 1] = true;
            if arm.delay < 1 {
                return Err(Error::InvalidInstance(format!("arms[{pos}].delay: delay < 1")));
            }
            arm.dist
                .validate()
                .map_err(|msg| Error::InvalidInstance(format!("arms[{pos}].dist: {msg}")))?;
            if (arm.mu - arm.dist.mean()).abs() > 1e-9 {
                return Err(Error::InvalidInstance(format!(
                    "arms[{pos}].mu: {} disagrees with distribution mean {}",
                    arm.mu,
                    arm.dist.mean()
                )));
            }
        }
        arms.sort_by(canonical_order);
        Ok(Self { arms })
    }

    /// Convenience constructor: Bernoulli arms with ids `1..=K` in the given
    /// order.
    pub fn bernoulli(mus: &[f64], delays: &[u32]) -> Result<Self> {
        Self::from_parts(mus, delays, RewardDistribution::Bernoulli)
    }

    /// Deterministic arms with ids `1..=K` in the given order.
    pub fn deterministic(mus: &[f64], delays: &[u32]) -> Result<Self> {
        Self::from_parts(mus, delays, RewardDistribution::Deterministic)
    }

    fn from_parts(
        mus: &[f64],
        delays: &[u32],
        make: impl Fn(f64) -> RewardDistribution,
    ) -> Result<Self> {
        if mus.len() != delays.len() {
            return Err(Error::InvalidInstance(format!(
                "{} means but {} delays",
                mus.len(),
                delays.len()
            )));
        }
        let arms = mus
            .iter()
            .zip(delays)
            .enumerate()
            .map(|(i, (&mu, &d))| ArmSpec::new(i as u32 + 1, d, make(mu)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(arms)
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmSpec] {
        &self.arms
    }

    pub fn arm(&self, index: ArmIndex) -> &ArmSpec {
        &self.arms[index]
    }

    pub fn mus(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mu).collect()
    }

    pub fn delays(&self) -> Vec<u32> {
        self.arms.iter().map(|a| a.delay).collect()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.arms.iter().map(|a| a.id).collect()
    }

    pub fn index_of_id(&self, id: u32) -> Option<ArmIndex> {
        self.arms.iter().position(|a| a.id == id)
    }

    /// Same arms with every reward replaced by a point mass at its mean.
    pub fn to_deterministic(&self) -> Instance {
        let arms = self
            .arms
            .iter()
            .map(|a| ArmSpec {
                dist: RewardDistribution::Deterministic(a.mu),
                ..a.clone()
            })
            .collect();
        Instance { arms }
    }

    /// Re-runs validation and sorting. Idempotent.
    pub fn normalize(&self) -> Result<Instance> {
        Instance::new(self.arms.clone())
    }

    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInstance(format!("schema: {e}")))?;
        let mut arms = Vec::with_capacity(file.arms.len());
        for (pos, raw) in file.arms.into_iter().enumerate() {
            arms.push(raw.into_arm(pos, base_dir)?);
        }
        Self::new(arms)
    }

    /// Serializes to the instance schema. Empirical values are written inline.
    pub fn to_json(&self) -> serde_json::Value {
        let arms: Vec<ArmFile> = self
            .arms
            .iter()
            .map(|a| ArmFile {
                id: a.id,
                mu: Some(a.mu),
                delay: a.delay as i64,
                dist: Some(match &a.dist {
                    RewardDistribution::Deterministic(_) => DistFile::Deterministic,
                    RewardDistribution::Bernoulli(_) => DistFile::Bernoulli,
                    RewardDistribution::Empirical(v) => DistFile::Empirical {
                        values_path: None,
                        values: Some(v.to_vec()),
                    },
                }),
            })
            .collect();
        serde_json::to_value(InstanceFile { arms }).expect("instance serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Reads and validates an instance file. Relative `values_path` entries are
/// resolved against the instance file's directory.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    Instance::from_json_str(&text, path.parent())
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    arms: Vec<ArmFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmFile {
    id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    delay: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<DistFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum DistFile {
    Bernoulli,
    Deterministic,
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values_path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
}

impl ArmFile {
    fn into_arm(self, pos: usize, base_dir: Option<&Path>) -> Result<ArmSpec> {
        let field = |name: &str, msg: String| Error::InvalidInstance(format!("arms[{pos}].{name}: {msg}"));
        if self.delay < 1 {
            return Err(field("delay", "delay < 1".into()));
        }
        let delay = u32::try_from(self.delay).map_err(|_| field("delay", "delay too large".into()))?;
        let need_mu = || -> Result<f64> {
            let mu = self.mu.ok_or_else(|| field("mu", "missing".into()))?;
            if !(0.0..=1.0).contains(&mu) {
                return Err(field("mu", format!("mu {mu} outside [0,1]")));
            }
            Ok(mu)
        };
        let dist = match self.dist.unwrap_or(DistFile::Bernoulli) {
            DistFile::Bernoulli => RewardDistribution::Bernoulli(need_mu()?),
            DistFile::Deterministic => RewardDistribution::Deterministic(need_mu()?),
            DistFile::Empirical { values_path, values } => {
                let values = match (values, values_path) {
                    (Some(v), _) => v,
                    (None, Some(p)) => {
                        let mut full = PathBuf::from(&p);
                        if full.is_relative() {
                            if let Some(dir) = base_dir {
                                full = dir.join(full);
                            }
                        }
                        read_values_file(&full).map_err(|e| field("dist.values_path", e.to_string()))?
                    }
                    (None, None) => {
                        return Err(field("dist", "empirical needs values or values_path".into()))
                    }
                };
                RewardDistribution::Empirical(values.into())
            }
        };
        dist.validate().map_err(|msg| field("dist", msg))?;
        Ok(ArmSpec { id: self.id, mu: dist.mean(), delay, dist })
    }
}

fn read_values_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Data(format!("{}: bad value {l:?}: {e}", path.display())))
        })
        .collect()
}

/// Identifies one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        Self { master_seed, replication_index }
    }

    /// Seed for a nested stream, e.g. inner run `index` of replication
    /// `self`. The parent pair is folded into a fresh master seed with
    /// SplitMix64 so children of different parents never share a key.
    pub fn child(&self, index: u64) -> SeedSpec {
        let folded = splitmix64(self.master_seed ^ splitmix64(self.replication_index ^ 0x6a09_e667_f3bc_c909));
        SeedSpec { master_seed: folded, replication_index: index }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds the stream for `seed`: ChaCha8 keyed by `seed_from_u64(master_seed)`
/// with the 64-bit ChaCha stream id set to `replication_index`.
pub fn derive_stream(seed: &SeedSpec) -> RewardStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
    rng.set_stream(seed.replication_index);
    rng
}
