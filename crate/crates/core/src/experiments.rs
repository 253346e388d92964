//! Monte-Carlo regret experiments: synthetic instance families, expected
//! regret of UCB Greedy against Oracle Greedy, quantile bands across
//! replications, the identical-delay scaling suite and Jester ingestion.
//!
//! Seeding: with master seed `m`, the instance is drawn from the stream
//! `SeedSpec(m, 0)` and inner run `j` of outer replication `r` (0-based) from
//! `SeedSpec(m, r + 1).child(j)`. Every output is a pure function of the
//! config.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{cumulative_rewards, Policy, RewardTable};
use crate::error::{Error, Result};
use crate::model::{derive_stream, ArmSpec, Instance, SeedSpec};
use crate::policies::{OracleGreedy, UcbGreedy, DEFAULT_ALPHA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayMode {
    /// Uniform over the integers 1..=10.
    Small,
    /// Uniform over the integers 11..=20.
    Large,
    Identical { delay: u32 },
}

impl DelayMode {
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<u32> {
        match *self {
            DelayMode::Small => (0..k).map(|_| rng.gen_range(1..=10)).collect(),
            DelayMode::Large => (0..k).map(|_| rng.gen_range(11..=20)).collect(),
            DelayMode::Identical { delay } => vec![delay; k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JesterConfig {
    pub ratings_path: PathBuf,
    #[serde(default = "default_n_jokes")]
    pub n_jokes: usize,
    #[serde(default = "default_min_ratings")]
    pub min_ratings: usize,
}

fn default_n_jokes() -> usize {
    70
}

fn default_min_ratings() -> usize {
    15_000
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_inner_runs() -> usize {
    250
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "K")]
    pub k: usize,
    pub gap_low: f64,
    pub gap_high: f64,
    pub delay_mode: DelayMode,
    #[serde(alias = "T")]
    pub horizon: u64,
    #[serde(default = "default_inner_runs")]
    pub inner_runs: usize,
    pub outer_reps: usize,
    pub master_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Delays for the scaling suite.
    #[serde(default)]
    pub k_star_values: Vec<usize>,
    #[serde(default)]
    pub jester: Option<JesterConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k < 1 {
            return bad("K must be at least 1".into());
        }
        if !(0.0 <= self.gap_low && self.gap_low <= self.gap_high && self.gap_high <= 1.0) {
            return bad(format!("need 0 <= gap_low <= gap_high <= 1, got [{}, {}]", self.gap_low, self.gap_high));
        }
        if self.horizon < 1 || self.inner_runs < 1 || self.outer_reps < 1 {
            return bad("T, inner_runs and outer_reps must be at least 1".into());
        }
        if let DelayMode::Identical { delay: 0 } = self.delay_mode {
            return bad("identical delay must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn instance_seed(&self) -> SeedSpec {
        SeedSpec::new(self.master_seed, 0)
    }

    pub fn replication_seed(&self, rep: usize) -> SeedSpec {
        SeedSpec::new(self.master_seed, rep as u64 + 1)
    }
}

/// Bernoulli instance with `mu_K = 0` and `mu_i = mu_{i+1} + gaps[i]`.
pub fn instance_from_gaps(gaps: &[f64], delays: &[u32]) -> Result<Instance> {
    if delays.len() != gaps.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} gaps need {} delays, got {}",
            gaps.len(),
            gaps.len() + 1,
            delays.len()
        )));
    }
    let total: f64 = gaps.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidInstance(format!("gaps sum to {total} > 1")));
    }
    let mut mus = vec![0.0; delays.len()];
    for i in (0..gaps.len()).rev() {
        mus[i] = (mus[i + 1] + gaps[i]).min(1.0);
    }
    Instance::bernoulli(&mus, delays)
}

/// Draws the `K-1` adjacent gaps uniformly from `[gap_low, gap_high]`, then
/// the delays according to the mode, both from `rng` in that order.
pub fn sample_synthetic_instance<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<Instance> {
    config.validate()?;
    let gaps: Vec<f64> = (1..config.k)
        .map(|_| {
            if config.gap_low == config.gap_high {
                config.gap_low
            } else {
                rng.gen_range(config.gap_low..=config.gap_high)
            }
        })
        .collect();
    let delays = config.delay_mode.sample(config.k, rng);
    instance_from_gaps(&gaps, &delays)
}

/// Mean over `inner_runs` of `reference - learner` cumulative reward at every
/// slot. Both policies of one run see the same presampled reward table.
pub fn measure_regret_against<R, L, FR, FL>(
    instance: &Instance,
    horizon: u64,
    inner_runs: usize,
    seed: SeedSpec,
    make_reference: FR,
    make_learner: FL,
) -> Result<Vec<f64>>
where
    R: Policy,
    L: Policy,
    FR: Fn() -> R + Sync,
    FL: Fn() -> L + Sync,
{
    if inner_runs < 1 {
        return Err(Error::InvalidArgument("inner_runs must be at least 1".into()));
    }
    let runs: Vec<Vec<f64>> = (0..inner_runs)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let mut rng = derive_stream(&seed.child(j as u64));
            let table = RewardTable::sample(instance, horizon, &mut rng);
            let reference = cumulative_rewards(instance, &mut make_reference(), horizon, &mut &table)?;
            let learner = cumulative_rewards(instance, &mut make_learner(), horizon, &mut &table)?;
            Ok(reference.iter().zip(&learner).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; horizon as usize];
    for run in &runs {
        for (m, r) in mean.iter_mut().zip(run) {
            *m += r;
        }
    }
    let n = inner_runs as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Expected regret of UCB Greedy against Oracle Greedy.
pub fn measure_regret(instance: &Instance, horizon: u64, inner_runs: usize, seed: SeedSpec, alpha: f64) -> Result<Vec<f64>> {
    measure_regret_against(
        instance,
        horizon,
        inner_runs,
        seed,
        || OracleGreedy,
        || UcbGreedy::for_instance(instance, alpha),
    )
}

/// Per-slot median and quartile band over replications.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretCurve {
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

/// Nearest-rank quantile of sorted data: the value at 1-based rank
/// `max(1, ceil(p n))`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn aggregate_quantiles(curves: &[Vec<f64>]) -> Result<RegretCurve> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("need at least one curve".into()));
    };
    let len = first.len();
    if let Some(bad) = curves.iter().position(|c| c.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "curve {bad} has length {}, expected {len}",
            curves[bad].len()
        )));
    }
    let mut out = RegretCurve { median: Vec::with_capacity(len), q25: Vec::with_capacity(len), q75: Vec::with_capacity(len) };
    let mut column = vec![0.0; curves.len()];
    for t in 0..len {
        for (c, curve) in column.iter_mut().zip(curves) {
            *c = curve[t];
        }
        column.sort_by(f64::total_cmp);
        out.q25.push(nearest_rank(&column, 0.25));
        out.median.push(nearest_rank(&column, 0.5));
        out.q75.push(nearest_rank(&column, 0.75));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CurveRow {
    slot: u64,
    median: f64,
    q25: f64,
    q75: f64,
}

impl RegretCurve {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..self.len() {
            let (lo, mid, hi) = (self.q25[t], self.median[t], self.q75[t]);
            if !(lo <= mid && mid <= hi) {
                return Err(Error::Data(format!(
                    "slot {}: need q25 <= median <= q75, got {lo}, {mid}, {hi}",
                    t + 1
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `slot,median,q25,q75`, slots numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "median", "q25", "q75"])?;
        for t in 0..self.len() {
            w.write_record([
                (t + 1).to_string(),
                self.median[t].to_string(),
                self.q25[t].to_string(),
                self.q75[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["slot", "median", "q25", "q75"] {
            return Err(Error::Data(format!("expected header slot,median,q25,q75, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut curve = RegretCurve { median: vec![], q25: vec![], q75: vec![] };
        for (i, row) in reader.deserialize::<CurveRow>().enumerate() {
            let row = row.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
            if row.slot != i as u64 + 1 {
                return Err(Error::Data(format!("row {}: slot {} out of sequence", i + 1, row.slot)));
            }
            curve.median.push(row.median);
            curve.q25.push(row.q25);
            curve.q75.push(row.q75);
        }
        curve.validate()?;
        Ok(curve)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// One instance studied across all outer replications.
#[derive(Clone, Debug)]
pub struct StudyResult {
    pub instance: Instance,
    pub curve: RegretCurve,
    /// Final expected regret of each replication.
    pub final_regrets: Vec<f64>,
}

/// Runs every outer replication of `config` on `instance`.
pub fn study_instance(config: &ExperimentConfig, instance: Instance) -> Result<StudyResult> {
    let curves = (0..config.outer_reps)
        .map(|r| measure_regret(&instance, config.horizon, config.inner_runs, config.replication_seed(r), config.alpha))
        .collect::<Result<Vec<_>>>()?;
    let final_regrets = curves.iter().map(|c| *c.last().expect("horizon >= 1")).collect();
    Ok(StudyResult { curve: aggregate_quantiles(&curves)?, final_regrets, instance })
}

/// Samples one synthetic instance from the config and studies it.
pub fn synthetic_suite(config: &ExperimentConfig) -> Result<StudyResult> {
    let mut rng = derive_stream(&config.instance_seed());
    let instance = sample_synthetic_instance(config, &mut rng)?;
    study_instance(config, instance)
}

/// One identical-delay study per value in `k_star_values`. The gaps are the
/// same for every value because they are drawn before the delays from the
/// same stream.
pub fn kstar_scaling_suite(config: &ExperimentConfig, k_star_values: &[usize]) -> Result<Vec<(usize, StudyResult)>> {
    k_star_values
        .iter()
        .map(|&ks| {
            if ks < 1 || ks > config.k {
                return Err(Error::InvalidArgument(format!("K* = {ks} must lie in 1..={}", config.k)));
            }
            let cfg = ExperimentConfig { delay_mode: DelayMode::Identical { delay: ks as u32 }, ..config.clone() };
            Ok((ks, synthetic_suite(&cfg)?))
        })
        .collect()
}

/// Jokes loaded as empirical arms. Arm id `i` is `joke_ids[i-1]`.
#[derive(Clone, Debug)]
pub struct JesterArms {
    pub instance: Instance,
    pub joke_ids: Vec<u32>,
    /// Number of valid ratings per joke, in arm-id order.
    pub rating_counts: Vec<usize>,
}

/// Maps a rating in `[-10, 10]` to `[0, 1]`.
pub fn rescale_rating(x: f64) -> f64 {
    (x + 10.0) / 20.0
}

/// Rating value meaning "not rated".
pub const MISSING_RATING: f64 = 99.0;

/// Reads a `joke_id,rating` CSV (header optional), drops missing ratings,
/// keeps the first `n_jokes` jokes by id that have at least `min_ratings`
/// valid ratings, and turns each into an empirical arm over its rescaled
/// ratings. All delays are set to 1; use [`with_delays`] to assign them.
pub fn jester_load(path: impl AsRef<Path>, n_jokes: usize, min_ratings: usize) -> Result<JesterArms> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut ratings: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Data(format!("line {}: expected joke_id,rating", line + 1)));
        }
        let (Ok(joke), Ok(rating)) = (record[0].parse::<u32>(), record[1].parse::<f64>()) else {
            if line == 0 {
                continue;
            }
            return Err(Error::Data(format!("line {}: cannot parse {:?}", line + 1, record.iter().collect::<Vec<_>>())));
        };
        if rating == MISSING_RATING {
            continue;
        }
        if !(-10.0..=10.0).contains(&rating) {
            return Err(Error::Data(format!("line {}: rating {rating} outside [-10, 10]", line + 1)));
        }
        ratings.entry(joke).or_default().push(rescale_rating(rating));
    }
    let qualifying: Vec<(u32, Vec<f64>)> = ratings.into_iter().filter(|(_, v)| v.len() >= min_ratings).collect();
    if qualifying.len() < n_jokes {
        return Err(Error::Data(format!(
            "only {} jokes have at least {min_ratings} valid ratings, need {n_jokes}",
            qualifying.len()
        )));
    }
    let mut joke_ids = Vec::with_capacity(n_jokes);
    let mut rating_counts = Vec::with_capacity(n_jokes);
    let mut arms = Vec::with_capacity(n_jokes);
    for (i, (joke, values)) in qualifying.into_iter().take(n_jokes).enumerate() {
        joke_ids.push(joke);
        rating_counts.push(values.len());
        arms.push(ArmSpec::empirical(i as u32 + 1, values, 1)?);
    }
    Ok(JesterArms { instance: Instance::new(arms)?, joke_ids, rating_counts })
}

/// Same arms with delays `delays[id - 1]` assigned by arm id.
pub fn with_delays(instance: &Instance, delays_by_id: &[u32]) -> Result<Instance> {
    if delays_by_id.len() != instance.k() {
        return Err(Error::InvalidArgument(format!("need {} delays, got {}", instance.k(), delays_by_id.len())));
    }
    let arms = instance
        .arms()
        .iter()
        .map(|a| ArmSpec::new(a.id, delays_by_id[a.id as usize - 1], a.dist.clone()))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(arms)
}

/// Loads the jokes named by `config.jester`, draws delays from the instance
/// stream with the configured mode, and studies the result.
pub fn jester_suite(config: &ExperimentConfig) -> Result<(JesterArms, StudyResult)> {
    let jc = config
        .jester
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("config has no jester section".into()))?;
    let mut arms = jester_load(&jc.ratings_path, jc.n_jokes, jc.min_ratings)?;
    let mut rng = derive_stream(&config.instance_seed());
    let delays = config.delay_mode.sample(arms.instance.k(), &mut rng);
    arms.instance = with_delays(&arms.instance, &delays)?;
    let study = study_instance(config, arms.instance.clone())?;
    Ok((arms, study))
}

/// Least-squares fit of `y` against `ln t` over slots `t_lo..=t_hi`
/// (1-based). Returns `(slope, intercept, r_squared)`.
pub fn log_fit(curve: &[f64], t_lo: u64, t_hi: u64) -> Result<(f64, f64, f64)> {
    if t_lo < 1 || t_hi <= t_lo || t_hi as usize > curve.len() {
        return Err(Error::InvalidArgument(format!("bad fit window {t_lo}..={t_hi} for length {}", curve.len())));
    }
    let xs: Vec<f64> = (t_lo..=t_hi).map(|t| (t as f64).ln()).collect();
    let ys: Vec<f64> = (t_lo..=t_hi).map(|t| curve[t as usize - 1]).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}
