//! Pinwheel scheduling: does a schedule exist in which every symbol `i`
//! appears at least once in every window of `a_i` consecutive slots?
//!
//! Symbols are 1-based throughout, matching the usual statement of the
//! problem and the ids of the arms produced by [`reduce_to_maxreward`].

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ArmSpec, Instance};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PinwheelInstance {
    a: Vec<u32>,
}

impl PinwheelInstance {
    pub fn new(a: Vec<u32>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidInstance("pinwheel instance needs at least one window".into()));
        }
        if let Some(pos) = a.iter().position(|&x| x == 0) {
            return Err(Error::InvalidInstance(format!("a[{pos}]: window length < 1")));
        }
        Ok(Self { a })
    }

    /// Parses a comma-separated list such as `2,4,4`.
    pub fn parse(text: &str) -> Result<Self> {
        let a = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidInstance(format!("bad window length {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(a)
    }

    pub fn windows(&self) -> &[u32] {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// Exact `sum 1/a_i`.
    pub fn density(&self) -> BigRational {
        self.a
            .iter()
            .map(|&x| BigRational::new(BigInt::one(), BigInt::from(x)))
            .fold(BigRational::zero(), |acc, r| acc + r)
    }

    pub fn is_dense(&self) -> bool {
        self.density() == BigRational::one()
    }

    /// `prod a_i`, saturating.
    pub fn window_product(&self) -> u128 {
        self.a.iter().fold(1u128, |acc, &x| acc.saturating_mul(x as u128))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PinwheelStatus {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// One period of a valid schedule.
    Schedule { period: usize, schedule: Vec<u32> },
    /// The search visited every reachable safe state without finding a cycle.
    Exhausted { states_explored: u64, reason: String },
    CapHit { cap: u64, states_explored: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PinwheelVerdict {
    pub status: PinwheelStatus,
    pub certificate: Certificate,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    OnPath,
    Dead,
}

/// Depth-first search over states `c_i` = slots since symbol `i` last
/// appeared, starting from all zeros. A state is safe while `c_i < a_i` for
/// every `i`; a schedule exists iff some cycle of safe states is reachable.
/// Successors are tried lowest symbol first, so certificates are
/// reproducible.
///
/// Starting from all zeros is enough: it is the most permissive state, so any
/// valid periodic schedule stays safe when replayed from it. Every symbol must
/// occur on a cycle (its counter would otherwise grow without bound), so the
/// counters along the cycle are the true ones and the cycle is itself a
/// valid schedule.
pub fn decide(instance: &PinwheelInstance, state_cap: u64) -> PinwheelVerdict {
    if instance.density() > BigRational::one() {
        return PinwheelVerdict {
            status: PinwheelStatus::No,
            certificate: Certificate::Exhausted {
                states_explored: 0,
                reason: "density exceeds 1".into(),
            },
        };
    }
    let a = instance.windows();
    let k = a.len();
    let successor = |state: &[u32], symbol: usize| -> Option<Vec<u32>> {
        let mut next = Vec::with_capacity(k);
        for (i, (&c, &w)) in state.iter().zip(a).enumerate() {
            let c = if i == symbol { 0 } else { c + 1 };
            if c >= w {
                return None;
            }
            next.push(c);
        }
        Some(next)
    };

    let mut marks: HashMap<Vec<u32>, Mark> = HashMap::new();
    // Each frame: a state on the current path and the next symbol to try.
    let mut path: Vec<(Vec<u32>, usize)> = Vec::new();
    let start = vec![0u32; k];
    marks.insert(start.clone(), Mark::OnPath);
    path.push((start, 0));
    let mut explored: u64 = 1;

    while let Some((state, next_symbol)) = path.last().cloned() {
        if next_symbol == k {
            marks.insert(state, Mark::Dead);
            path.pop();
            continue;
        }
        path.last_mut().expect("non-empty").1 += 1;
        let Some(child) = successor(&state, next_symbol) else { continue };
        match marks.get(&child) {
            Some(Mark::Dead) => continue,
            Some(Mark::OnPath) => {
                let from = path.iter().position(|(s, _)| *s == child).expect("child is on path");
                // Each frame has already advanced past the symbol it left by,
                // so its counter is that symbol in 1-based form.
                let schedule: Vec<u32> = path[from..].iter().map(|(_, n)| *n as u32).collect();
                return PinwheelVerdict {
                    status: PinwheelStatus::Yes,
                    certificate: Certificate::Schedule { period: schedule.len(), schedule },
                };
            }
            None => {
                explored += 1;
                if explored > state_cap {
                    return PinwheelVerdict {
                        status: PinwheelStatus::Unknown,
                        certificate: Certificate::CapHit { cap: state_cap, states_explored: explored - 1 },
                    };
                }
                marks.insert(child.clone(), Mark::OnPath);
                path.push((child, 0));
            }
        }
    }
    PinwheelVerdict {
        status: PinwheelStatus::No,
        certificate: Certificate::Exhausted {
            states_explored: explored,
            reason: "no cycle of safe states is reachable".into(),
        },
    }
}

/// Whether the periodic extension of `schedule` has symbol `i` in every
/// window of `a_i` consecutive slots.
pub fn verify_schedule(schedule: &[u32], period: usize, instance: &PinwheelInstance) -> Result<bool> {
    if schedule.len() != period || period == 0 {
        return Err(Error::InvalidArgument(format!(
            "schedule length {} does not match period {period}",
            schedule.len()
        )));
    }
    let k = instance.k();
    if let Some(&bad) = schedule.iter().find(|&&s| s == 0 || s as usize > k) {
        return Err(Error::InvalidArgument(format!("symbol {bad} outside 1..={k}")));
    }
    for (i, &window) in instance.windows().iter().enumerate() {
        let symbol = i as u32 + 1;
        let positions: Vec<usize> = (0..period).filter(|&p| schedule[p] == symbol).collect();
        let Some(&first) = positions.first() else { return Ok(false) };
        let wrap = first + period - positions[positions.len() - 1];
        let worst = positions.windows(2).map(|w| w[1] - w[0]).chain([wrap]).max().unwrap_or(0);
        if worst > window as usize {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One deterministic arm per window (mean 1, delay `a_i`, id `i`) plus a
/// zero-mean sink arm with delay 1 and id `K+1`. For a dense instance the
/// optimal reward over `T` slots is `T` exactly when a schedule exists.
pub fn reduce_to_maxreward(instance: &PinwheelInstance) -> Instance {
    let k = instance.k() as u32;
    let mut arms: Vec<ArmSpec> = instance
        .windows()
        .iter()
        .enumerate()
        .map(|(i, &a)| ArmSpec::deterministic(i as u32 + 1, 1.0, a).expect("valid arm"))
        .collect();
    arms.push(ArmSpec::deterministic(k + 1, 0.0, 1).expect("valid arm"));
    Instance::new(arms).expect("ids are 1..=K+1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::{exact_opt_value, DEFAULT_STATE_CAP};

    fn pw(a: &[u32]) -> PinwheelInstance {
        PinwheelInstance::new(a.to_vec()).unwrap()
    }

    #[test]
    fn densities() {
        assert!(pw(&[2, 4, 4]).is_dense());
        assert!(pw(&[2, 3, 6]).is_dense());
        assert!(pw(&[1]).is_dense());
        assert_eq!(pw(&[3, 3]).density(), BigRational::new(2.into(), 3.into()));
        assert!(PinwheelInstance::new(vec![2, 0]).is_err());
        assert!(PinwheelInstance::parse("2,x").is_err());
    }

    #[test]
    fn decide_examples() {
        let v = decide(&pw(&[2, 4, 4]), 1_000_000);
        assert_eq!(v.status, PinwheelStatus::Yes);
        let Certificate::Schedule { period, schedule } = &v.certificate else { panic!() };
        assert_eq!(*period, 4);
        assert!(verify_schedule(schedule, *period, &pw(&[2, 4, 4])).unwrap());
        assert_eq!(decide(&pw(&[2, 3, 6]), 1_000_000).status, PinwheelStatus::No);
        assert_eq!(decide(&pw(&[1, 2]), 1_000_000).status, PinwheelStatus::No);
        let one = decide(&pw(&[1]), 10);
        assert_eq!(one.certificate, Certificate::Schedule { period: 1, schedule: vec![1] });
    }

    #[test]
    fn density_over_one_is_no_without_search() {
        let v = decide(&pw(&[2, 2, 2]), 1_000_000);
        assert_eq!(v.status, PinwheelStatus::No);
        assert!(matches!(v.certificate, Certificate::Exhausted { states_explored: 0, .. }));
    }

    #[test]
    fn cap_gives_unknown() {
        let v = decide(&pw(&[2, 3, 6]), 3);
        assert_eq!(v.status, PinwheelStatus::Unknown);
    }

    #[test]
    fn decide_is_permutation_invariant() {
        for a in [[2, 4, 4], [2, 3, 6], [3, 3, 3], [4, 2, 4], [2, 5, 5]] {
            let base = decide(&pw(&a), 1_000_000).status;
            for p in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                let perm: Vec<u32> = p.iter().map(|&i| a[i]).collect();
                assert_eq!(decide(&pw(&perm), 1_000_000).status, base, "{a:?} vs {perm:?}");
            }
        }
    }

    #[test]
    fn verify_examples() {
        let inst = pw(&[2, 4, 4]);
        assert!(verify_schedule(&[1, 2, 1, 3], 4, &inst).unwrap());
        assert!(!verify_schedule(&[1, 2, 3, 1], 4, &inst).unwrap());
        assert!(verify_schedule(&[1], 1, &pw(&[1])).unwrap());
        assert!(!verify_schedule(&[1, 1], 2, &pw(&[1, 3])).unwrap());
        assert!(verify_schedule(&[1, 4], 2, &inst).is_err());
        assert!(verify_schedule(&[1, 2], 3, &inst).is_err());
    }

    #[test]
    fn reduction_values() {
        let yes = reduce_to_maxreward(&pw(&[2, 4, 4]));
        assert_eq!(yes.delays(), vec![2, 4, 4, 1]);
        assert_eq!(yes.ids(), vec![1, 2, 3, 4]);
        assert_eq!(exact_opt_value(&yes, 8, DEFAULT_STATE_CAP).unwrap(), 8.0);
        let no = reduce_to_maxreward(&pw(&[2, 3, 6]));
        assert!(exact_opt_value(&no, 36, DEFAULT_STATE_CAP).unwrap() <= 35.0);
        let trivial = reduce_to_maxreward(&pw(&[1]));
        assert_eq!(exact_opt_value(&trivial, 5, DEFAULT_STATE_CAP).unwrap(), 5.0);
    }
}
