//! Train/test split protocols.
//!
//! Splits are created once from a manifest and a seed, then serialized and
//! reused unchanged, so every downstream number is attributable to one
//! split file. All randomized protocols stratify per class.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::manifest::DatasetManifest;
use crate::tensor::{mix_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// One trial per sequence; that sequence is the whole test set.
    LeaveOneOut,
    /// Stratified k folds; trial i tests fold i.
    KFold(usize),
    /// `trials` independent stratified splits with `train_fraction` of each
    /// class in train.
    RandomTrials { trials: usize, train_fraction: f64 },
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::LeaveOneOut => f.write_str("loo"),
            Protocol::KFold(k) => write!(f, "kfold:{}", k),
            Protocol::RandomTrials { trials, train_fraction } => {
                write!(f, "random:{}:{}", trials, train_fraction)
            }
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Protocol> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || {
            Error::Config(format!(
                "unknown protocol '{}' (expected loo, kfold:K or random:TRIALS:FRACTION)",
                s
            ))
        };
        match parts.as_slice() {
            ["loo"] => Ok(Protocol::LeaveOneOut),
            ["kfold", k] => Ok(Protocol::KFold(k.parse().map_err(|_| bad())?)),
            ["random", t, f] => Ok(Protocol::RandomTrials {
                trials: t.parse().map_err(|_| bad())?,
                train_fraction: f.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// One train/test partition; values index into `manifest.sequences`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub seed: u64,
    pub trials: Vec<Trial>,
}

/// Number of train sequences for a class of size `s`: round(fraction * s),
/// clamped so both sides stay nonempty (feasibility is checked upfront).
fn train_count(s: usize, fraction: f64) -> usize {
    let n = (fraction * s as f64).round() as usize;
    n.clamp(1, s - 1)
}

pub fn make_splits(
    manifest: &DatasetManifest,
    protocol: Protocol,
    seed: u64,
) -> Result<SplitPlan> {
    let by_class = manifest.sequences_by_class();
    let min_class = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let n = manifest.sequences.len();

    let trials = match protocol {
        Protocol::LeaveOneOut => (0..n)
            .map(|i| Trial {
                train: (0..n).filter(|&j| j != i).collect(),
                test: vec![i],
            })
            .collect(),
        Protocol::KFold(k) => {
            if k < 2 {
                return Err(Error::Constraint(format!("kfold needs k >= 2, got {}", k)));
            }
            if k > min_class {
                return Err(Error::Constraint(format!(
                    "kfold:{} infeasible: smallest class has {} sequences",
                    k, min_class
                )));
            }
            // Shuffle each class once, chop it into k nearly equal chunks;
            // fold f tests chunk f of every class.
            let shuffled: Vec<Vec<usize>> = by_class
                .iter()
                .enumerate()
                .map(|(c, members)| {
                    let mut m = members.clone();
                    Rng::new(mix_seed(&[seed, c as u64])).shuffle(&mut m);
                    m
                })
                .collect();
            (0..k)
                .map(|fold| {
                    let mut train = Vec::new();
                    let mut test = Vec::new();
                    for members in &shuffled {
                        let s = members.len();
                        let base = s / k;
                        let rem = s % k;
                        // Chunk f covers [f*base + min(f, rem), ...); the
                        // first `rem` chunks get one extra element.
                        let start = fold * base + fold.min(rem);
                        let end = start + base + usize::from(fold < rem);
                        for (pos, &idx) in members.iter().enumerate() {
                            if pos >= start && pos < end {
                                test.push(idx);
                            } else {
                                train.push(idx);
                            }
                        }
                    }
                    train.sort_unstable();
                    test.sort_unstable();
                    Trial { train, test }
                })
                .collect()
        }
        Protocol::RandomTrials { trials, train_fraction } => {
            if trials == 0 {
                return Err(Error::Constraint("random protocol needs >= 1 trial".into()));
            }
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::Constraint(format!(
                    "train fraction must be in (0, 1), got {}",
                    train_fraction
                )));
            }
            if min_class < 2 {
                return Err(Error::Constraint(
                    "random protocol needs >= 2 sequences per class".into(),
                ));
            }
            (0..trials)
                .map(|t| {
                    let mut train = Vec::new();
                    let mut test = Vec::new();
                    for (c, members) in by_class.iter().enumerate() {
                        let mut m = members.clone();
                        Rng::new(mix_seed(&[seed, t as u64, c as u64])).shuffle(&mut m);
                        let cut = train_count(m.len(), train_fraction);
                        train.extend_from_slice(&m[..cut]);
                        test.extend_from_slice(&m[cut..]);
                    }
                    train.sort_unstable();
                    test.sort_unstable();
                    Trial { train, test }
                })
                .collect()
        }
    };
    Ok(SplitPlan {
        protocol,
        seed,
        trials,
    })
}

/// Text form: a protocol/seed header, then per trial a `trial` line followed
/// by a `train` and a `test` line listing sequence ids.
pub fn save_splits(path: &Path, plan: &SplitPlan, manifest: &DatasetManifest) -> Result<()> {
    let id_of = |i: &usize| manifest.sequences[*i].id.as_str();
    let mut out = String::new();
    out.push_str(&format!("protocol {}\n", plan.protocol));
    out.push_str(&format!("seed {}\n", plan.seed));
    for (t, trial) in plan.trials.iter().enumerate() {
        out.push_str(&format!("trial {}\n", t));
        let train: Vec<&str> = trial.train.iter().map(id_of).collect();
        let test: Vec<&str> = trial.test.iter().map(id_of).collect();
        out.push_str(&format!("train {}\n", train.join(" ")));
        out.push_str(&format!("test {}\n", test.join(" ")));
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

pub fn load_splits(path: &Path, manifest: &DatasetManifest) -> Result<SplitPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let bad = |lineno: usize, msg: &str| {
        Error::Data(format!("{}:{}: {}", path.display(), lineno + 1, msg))
    };
    let index_of = |lineno: usize, id: &str| -> Result<usize> {
        manifest
            .sequences
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| bad(lineno, &format!("unknown sequence id '{}'", id)))
    };
    let mut protocol = None;
    let mut seed = None;
    let mut trials: Vec<Trial> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "protocol" => protocol = Some(rest.parse::<Protocol>()?),
            "seed" => {
                seed = Some(
                    rest.parse::<u64>()
                        .map_err(|_| bad(lineno, "bad seed"))?,
                )
            }
            "trial" => {
                let n: usize = rest.parse().map_err(|_| bad(lineno, "bad trial index"))?;
                if n != trials.len() {
                    return Err(bad(lineno, "trial indices must be consecutive from 0"));
                }
                trials.push(Trial {
                    train: Vec::new(),
                    test: Vec::new(),
                });
            }
            "train" | "test" => {
                let trial = trials
                    .last_mut()
                    .ok_or_else(|| bad(lineno, "train/test line before any trial"))?;
                let ids = rest
                    .split_whitespace()
                    .map(|id| index_of(lineno, id))
                    .collect::<Result<Vec<usize>>>()?;
                if key == "train" {
                    trial.train = ids;
                } else {
                    trial.test = ids;
                }
            }
            _ => return Err(bad(lineno, &format!("unknown line '{}'", key))),
        }
    }
    Ok(SplitPlan {
        protocol: protocol.ok_or_else(|| bad(0, "missing protocol line"))?,
        seed: seed.ok_or_else(|| bad(0, "missing seed line"))?,
        trials,
    })
}
