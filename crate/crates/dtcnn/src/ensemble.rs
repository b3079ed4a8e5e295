//! Late fusion of per-slice classifier outputs.
//!
//! Each slice of a sequence yields a raw (non-normalized) score vector from
//! its plane's network. Scores are summed per plane, then across a chosen
//! plane subset, and the collective label is the argmax of that sum. All
//! accumulation happens in f64 and per-plane sums run in a canonical slice
//! order, so fusion results are independent of input ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::slicer::PlaneId;
use crate::{Error, Result};

/// Raw classifier output for one slice of one sequence on one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub sequence_id: String,
    pub plane: PlaneId,
    pub slice_index: usize,
    pub values: Vec<f64>,
}

/// Nonempty subset of the three planes, kept in canonical (xy, xt, yt) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneSubset {
    planes: Vec<PlaneId>,
}

impl PlaneSubset {
    pub fn new(planes: &[PlaneId]) -> Result<PlaneSubset> {
        if planes.is_empty() {
            return Err(Error::Constraint("plane subset must be nonempty".into()));
        }
        let mut chosen = Vec::new();
        for p in PlaneId::ALL {
            if planes.contains(&p) {
                chosen.push(p);
            }
        }
        if chosen.len() != planes.len() {
            return Err(Error::Constraint("plane subset has duplicates".into()));
        }
        Ok(PlaneSubset { planes: chosen })
    }

    pub fn all() -> PlaneSubset {
        PlaneSubset { planes: PlaneId::ALL.to_vec() }
    }

    pub fn planes(&self) -> &[PlaneId] {
        &self.planes
    }

    pub fn contains(&self, p: PlaneId) -> bool {
        self.planes.contains(&p)
    }

    /// The seven nonempty subsets in ablation-table order:
    /// xy, xt, yt, xy+xt, xy+yt, xt+yt, xy+xt+yt.
    pub fn enumerate_all() -> Vec<PlaneSubset> {
        use PlaneId::*;
        [
            vec![Xy],
            vec![Xt],
            vec![Yt],
            vec![Xy, Xt],
            vec![Xy, Yt],
            vec![Xt, Yt],
            vec![Xy, Xt, Yt],
        ]
        .into_iter()
        .map(|p| PlaneSubset { planes: p })
        .collect()
    }
}

impl fmt::Display for PlaneSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.planes.iter().map(|p| p.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for PlaneSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<PlaneSubset> {
        let planes: Vec<PlaneId> = s
            .split('+')
            .map(|part| part.trim().parse::<PlaneId>())
            .collect::<Result<_>>()?;
        PlaneSubset::new(&planes)
    }
}

/// Sum the slice scores of one sequence on one plane. Inputs may arrive in
/// any order; they are summed in ascending slice_index order, so the result
/// is bit-for-bit permutation-invariant.
pub fn plane_score(slices: &[ScoreVector]) -> Result<Vec<f64>> {
    let first = slices
        .first()
        .ok_or_else(|| Error::Constraint("plane score over an empty slice list".into()))?;
    let n = first.values.len();
    let mut ordered: Vec<&ScoreVector> = slices.iter().collect();
    ordered.sort_by_key(|s| s.slice_index);
    let mut sum = vec![0.0f64; n];
    for s in ordered {
        if s.values.len() != n {
            return Err(Error::Constraint(format!(
                "score length mismatch for sequence {}: {} vs {}",
                s.sequence_id,
                s.values.len(),
                n
            )));
        }
        if s.sequence_id != first.sequence_id || s.plane != first.plane {
            return Err(Error::Constraint(
                "plane score mixes sequences or planes".into(),
            ));
        }
        for (acc, &v) in sum.iter_mut().zip(&s.values) {
            *acc += v;
        }
    }
    Ok(sum)
}

/// Sum per-plane score vectors over a plane subset.
pub fn global_score(
    per_plane: &BTreeMap<PlaneId, Vec<f64>>,
    subset: &PlaneSubset,
) -> Result<Vec<f64>> {
    let mut out: Option<Vec<f64>> = None;
    for &p in subset.planes() {
        let v = per_plane
            .get(&p)
            .ok_or_else(|| Error::Constraint(format!("missing scores for plane {}", p)))?;
        match out.as_mut() {
            None => out = Some(v.clone()),
            Some(acc) => {
                if acc.len() != v.len() {
                    return Err(Error::Constraint("plane score length mismatch".into()));
                }
                for (a, &b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
    }
    out.ok_or_else(|| Error::Constraint("plane subset must be nonempty".into()))
}

/// Argmax with ties broken toward the lowest index.
pub fn predict_label(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = i;
        }
    }
    best
}

/// How slice scores are combined into a sequence prediction. Raw summation
/// is the default; the alternatives exist for comparison runs only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionRule {
    /// Sum raw score vectors (default).
    SumRaw,
    /// Softmax-normalize each slice's scores before summing.
    SumSoftmax,
    /// Each slice votes for its argmax class; most votes wins.
    Majority,
    /// Each slice ranks all classes; points N-1 (best) down to 0 are summed.
    Borda,
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionRule::SumRaw => "sum",
            FusionRule::SumSoftmax => "sum-softmax",
            FusionRule::Majority => "majority",
            FusionRule::Borda => "borda",
        })
    }
}

impl FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<FusionRule> {
        match s {
            "sum" => Ok(FusionRule::SumRaw),
            "sum-softmax" => Ok(FusionRule::SumSoftmax),
            "majority" => Ok(FusionRule::Majority),
            "borda" => Ok(FusionRule::Borda),
            other => Err(Error::Config(format!(
                "unknown fusion rule '{}' (expected sum, sum-softmax, majority or borda)",
                other
            ))),
        }
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Predict one sequence's label from all of its slice scores on the planes
/// of `subset`, under the given fusion rule.
pub fn predict_sequence(
    slices: &[ScoreVector],
    subset: &PlaneSubset,
    rule: FusionRule,
) -> Result<usize> {
    let picked: Vec<&ScoreVector> = slices
        .iter()
        .filter(|s| subset.contains(s.plane))
        .collect();
    if picked.is_empty() {
        return Err(Error::Constraint("no slice scores on the selected planes".into()));
    }
    let n = picked[0].values.len();
    if picked.iter().any(|s| s.values.len() != n) {
        return Err(Error::Constraint("score length mismatch within sequence".into()));
    }
    // Canonical order (plane, slice_index) keeps every rule deterministic
    // under input permutation.
    let mut ordered = picked;
    ordered.sort_by_key(|s| (s.plane, s.slice_index));
    match rule {
        FusionRule::SumRaw => {
            let mut per_plane: BTreeMap<PlaneId, Vec<f64>> = BTreeMap::new();
            for &p in subset.planes() {
                let plane_slices: Vec<ScoreVector> = ordered
                    .iter()
                    .filter(|s| s.plane == p)
                    .map(|&s| s.clone())
                    .collect();
                per_plane.insert(p, plane_score(&plane_slices)?);
            }
            Ok(predict_label(&global_score(&per_plane, subset)?))
        }
        FusionRule::SumSoftmax => {
            let mut sum = vec![0.0; n];
            for s in &ordered {
                for (a, p) in sum.iter_mut().zip(softmax(&s.values)) {
                    *a += p;
                }
            }
            Ok(predict_label(&sum))
        }
        FusionRule::Majority => {
            let mut votes = vec![0usize; n];
            for s in &ordered {
                votes[predict_label(&s.values)] += 1;
            }
            let mut best = 0;
            for (i, &v) in votes.iter().enumerate().skip(1) {
                if v > votes[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        FusionRule::Borda => {
            let mut points = vec![0usize; n];
            for s in &ordered {
                // Rank classes by descending score, ties toward lower index.
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    s.values[b]
                        .partial_cmp(&s.values[a])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                for (rank, &class) in order.iter().enumerate() {
                    points[class] += n - 1 - rank;
                }
            }
            let mut best = 0;
            for (i, &v) in points.iter().enumerate().skip(1) {
                if v > points[best] {
                    best = i;
                }
            }
            Ok(best)
        }
    }
}

/// Classification summary over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes, entries counts.
    pub confusion: Vec<Vec<usize>>,
    /// Per-class accuracy (diagonal over row sum); NaN-free — classes with
    /// no test sequences report 0.
    pub per_class: Vec<f64>,
    pub n_sequences: usize,
    pub n_classes: usize,
}

impl EvalReport {
    /// Row-normalized confusion matrix (each row sums to 1 where nonempty).
    pub fn confusion_normalized(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&v| if total == 0 { 0.0 } else { v as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }
}

/// Score a full test set: `truth` maps sequence_id to true class index.
/// Every sequence in `truth` must have scores for all planes of `subset`.
pub fn evaluate(
    scores: &[ScoreVector],
    truth: &BTreeMap<String, usize>,
    n_classes: usize,
    subset: &PlaneSubset,
    rule: FusionRule,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::Constraint("evaluation over an empty test set".into()));
    }
    let mut by_seq: BTreeMap<&str, Vec<&ScoreVector>> = BTreeMap::new();
    for s in scores {
        by_seq.entry(s.sequence_id.as_str()).or_default().push(s);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    for (id, &label) in truth {
        if label >= n_classes {
            return Err(Error::Constraint(format!(
                "label {} out of range for sequence {}",
                label, id
            )));
        }
        let seq_scores = by_seq
            .get(id.as_str())
            .ok_or_else(|| Error::Constraint(format!("no scores for sequence {}", id)))?;
        for &p in subset.planes() {
            if !seq_scores.iter().any(|s| s.plane == p) {
                return Err(Error::Constraint(format!(
                    "sequence {} has no scores on plane {}",
                    id, p
                )));
            }
        }
        let owned: Vec<ScoreVector> = seq_scores.iter().map(|&s| s.clone()).collect();
        let pred = predict_sequence(&owned, subset, rule)?;
        confusion[label][pred] += 1;
        if pred == label {
            correct += 1;
        }
    }
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 { 0.0 } else { row[i] as f64 / total as f64 }
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / truth.len() as f64,
        confusion,
        per_class,
        n_sequences: truth.len(),
        n_classes,
    })
}

// ---------------------------------------------------------------------------
// score dump files

const SCORE_HEADER: &str = "sequence_id\tplane\tslice_index\tscores";

/// Write slice scores as line-oriented text: a fixed header, then one record
/// per slice (sequence_id, plane, slice_index, N tab-separated scores).
/// Values use the shortest round-trip decimal form, so read_scores recovers
/// them exactly.
pub fn write_scores(path: &Path, scores: &[ScoreVector]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let emit = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{}", SCORE_HEADER)?;
        for s in scores {
            write!(out, "{}\t{}\t{}", s.sequence_id, s.plane, s.slice_index)?;
            for v in &s.values {
                write!(out, "\t{:?}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    };
    emit(&mut out).map_err(|e| Error::io_at(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreVector>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h == SCORE_HEADER => {}
        _ => {
            return Err(Error::Data(format!(
                "{}: missing score header",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io_at(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(Error::Data(format!(
                "{}: malformed score record on line {}",
                path.display(),
                lineno + 2
            )));
        }
        let parse_err = |what: &str| {
            Error::Data(format!(
                "{}: bad {} on line {}",
                path.display(),
                what,
                lineno + 2
            ))
        };
        let values: Vec<f64> = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err("score value")))
            .collect::<Result<_>>()?;
        out.push(ScoreVector {
            sequence_id: fields[0].to_string(),
            plane: fields[1].parse()?,
            slice_index: fields[2].parse().map_err(|_| parse_err("slice index"))?,
            values,
        });
    }
    Ok(out)
}
