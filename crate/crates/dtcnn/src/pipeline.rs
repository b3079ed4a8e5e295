//! End-to-end runs: slicing a dataset to disk, training one network per
//! plane, scoring test sequences, fusing, and the plane-subset ablation.
//!
//! Every artifact lives under the configured output directory:
//!
//! ```text
//! out/splits.txt              train/test plan, created once then reused
//! out/slices/<plane>/<seq>/slice_000.pgm ...
//! out/slices/index.txt        slice ordinal -> source position map
//! out/<plane>.ckpt            final checkpoint per plane
//! out/<plane>_iter0001500.ckpt checkpoint at each lr step
//! out/<plane>_train.tsv       iteration, lr, loss
//! out/scores_<plane>.tsv      per-slice raw scores of the test split
//! out/report.{txt,tsv}        fused evaluation
//! out/ablation.{txt,tsv}      accuracy per plane subset
//! ```
//!
//! Reruns are idempotent: a finished plane is not retrained, an interrupted
//! one resumes from its newest checkpoint, and identical configuration
//! yields byte-identical score dumps and reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::arch::NetworkSpec;
use crate::config::RunConfig;
use crate::data::checkpoint::{fnv1a64, load_checkpoint, save_checkpoint, Checkpoint};
use crate::data::manifest::{self, DatasetManifest};
use crate::data::pgm::{self, Image};
use crate::data::splits::{self, SplitPlan};
use crate::ensemble::{self, EvalReport, PlaneSubset, ScoreVector};
use crate::nn::{train_step, Network, TrainSample};
use crate::slicer::{extract_plane, plane_positions, PlaneId, SliceConfig};
use crate::tensor::{mix_seed, Rng, Tensor};
use crate::{Error, Result};

fn plane_index(plane: PlaneId) -> u64 {
    PlaneId::ALL.iter().position(|&p| p == plane).unwrap() as u64
}

/// Seed-stream tags, so the independent streams (init, batch order,
/// per-sample augmentation) can never collide.
const STREAM_INIT: u64 = 0;
const STREAM_ORDER: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

pub fn slices_root(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("slices")
}

fn slice_dir(cfg: &RunConfig, plane: PlaneId, seq_id: &str) -> PathBuf {
    slices_root(cfg).join(plane.as_str()).join(seq_id)
}

fn slice_file(dir: &Path, ordinal: usize) -> PathBuf {
    dir.join(format!("slice_{:03}.pgm", ordinal))
}

pub fn checkpoint_path(cfg: &RunConfig, plane: PlaneId) -> PathBuf {
    cfg.out_dir.join(format!("{}.ckpt", plane))
}

fn step_checkpoint_path(cfg: &RunConfig, plane: PlaneId, iteration: usize) -> PathBuf {
    cfg.out_dir.join(format!("{}_iter{:07}.ckpt", plane, iteration))
}

fn train_log_path(cfg: &RunConfig, plane: PlaneId) -> PathBuf {
    cfg.out_dir.join(format!("{}_train.tsv", plane))
}

pub fn scores_path(cfg: &RunConfig, plane: PlaneId) -> PathBuf {
    cfg.out_dir.join(format!("scores_{}.tsv", plane))
}

/// Load the dataset manifest, preferring a `manifest.txt` beside the data
/// and scanning the tree (then writing one) otherwise.
pub fn load_or_scan_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.root.join("manifest.txt");
    if path.is_file() {
        manifest::load_manifest(&path, &cfg.root)
    } else {
        let m = manifest::scan(&cfg.root)?;
        manifest::save_manifest(&path, &m)?;
        Ok(m)
    }
}

/// Load the split plan from the output directory, or create and save it.
/// A stored plan must match the configured protocol and seed; anything else
/// means the output directory belongs to a different experiment.
pub fn load_or_make_splits(cfg: &RunConfig, m: &DatasetManifest) -> Result<SplitPlan> {
    let path = cfg.out_dir.join("splits.txt");
    if path.is_file() {
        let plan = splits::load_splits(&path, m)?;
        if plan.protocol != cfg.protocol || plan.seed != cfg.seed {
            return Err(Error::Config(format!(
                "{} was created with protocol {} seed {}, run wants {} seed {} \
                 (use a fresh output directory)",
                path.display(),
                plan.protocol,
                plan.seed,
                cfg.protocol,
                cfg.seed
            )));
        }
        Ok(plan)
    } else {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io_at(&cfg.out_dir, e))?;
        let plan = splits::make_splits(m, cfg.protocol, cfg.seed)?;
        splits::save_splits(&path, &plan, m)?;
        Ok(plan)
    }
}

fn dataset_channels(m: &DatasetManifest) -> Result<usize> {
    let c = m.sequences[0].channels;
    if m.sequences.iter().any(|s| s.channels != c) {
        return Err(Error::Data(
            "dataset mixes grayscale and color sequences".into(),
        ));
    }
    Ok(c)
}

/// The network this configuration trains on this dataset.
pub fn network_spec(cfg: &RunConfig, m: &DatasetManifest) -> Result<NetworkSpec> {
    cfg.arch.build(dataset_channels(m)?, m.n_classes())
}

/// Digest binding checkpoints to the exact architecture description.
pub fn spec_digest(spec: &NetworkSpec) -> u64 {
    fnv1a64(format!("{:?}", spec).as_bytes())
}

fn trial_of<'p>(plan: &'p SplitPlan, trial: usize) -> Result<&'p splits::Trial> {
    plan.trials.get(trial).ok_or_else(|| {
        Error::Config(format!(
            "trial {} out of range: the split plan has {} trials",
            trial,
            plan.trials.len()
        ))
    })
}

// ---------------------------------------------------------------------------
// slicing

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSummary {
    pub sequences: usize,
    pub slices_written: usize,
}

/// Cut every sequence into `m` slices per plane, resized to the configured
/// side, and write them as grayscale/color frames plus one index file.
pub fn run_slice(cfg: &RunConfig) -> Result<SliceSummary> {
    let m = load_or_scan_manifest(cfg)?;
    let slice_cfg = SliceConfig::new(cfg.slices_per_plane, cfg.effective_slice_side())?;
    std::fs::create_dir_all(slices_root(cfg)).map_err(|e| Error::io_at(&slices_root(cfg), e))?;

    let per_seq: Vec<Vec<String>> = m
        .sequences
        .par_iter()
        .map(|entry| -> Result<Vec<String>> {
            let volume = manifest::load_sequence(&m, &entry.id)?;
            let mut index_lines = Vec::new();
            for plane in PlaneId::ALL {
                let positions = plane_positions(&volume, plane, cfg.slices_per_plane)
                    .map_err(|e| with_sequence(e, &entry.id))?;
                let stack = extract_plane(&volume, plane, &slice_cfg)
                    .map_err(|e| with_sequence(e, &entry.id))?;
                let dir = slice_dir(cfg, plane, &entry.id);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
                let (side, channels) = (slice_cfg.side, volume.channels());
                for (ordinal, &pos) in positions.iter().enumerate() {
                    let mut pixels = Vec::with_capacity(side * side * channels);
                    for y in 0..side {
                        for x in 0..side {
                            for ch in 0..channels {
                                let v = stack.get(&[y, x, ordinal, ch]);
                                pixels.push(v.clamp(0.0, 255.0).round() as u8);
                            }
                        }
                    }
                    let img = Image::new(side, side, channels, pixels)?;
                    pgm::write_image(&slice_file(&dir, ordinal), &img)?;
                    index_lines.push(format!("{} {} {} {}", plane, entry.id, ordinal, pos));
                }
            }
            Ok(index_lines)
        })
        .collect::<Result<_>>()?;

    let mut index = format!(
        "m {}\nn {}\n",
        cfg.slices_per_plane,
        cfg.effective_slice_side()
    );
    let mut written = 0;
    for lines in per_seq {
        written += lines.len();
        for line in lines {
            index.push_str(&line);
            index.push('\n');
        }
    }
    let index_path = slices_root(cfg).join("index.txt");
    std::fs::write(&index_path, index).map_err(|e| Error::io_at(&index_path, e))?;
    Ok(SliceSummary {
        sequences: m.sequences.len(),
        slices_written: written,
    })
}

fn with_sequence(e: Error, id: &str) -> Error {
    match e {
        Error::Constraint(msg) => Error::Constraint(format!("sequence {}: {}", id, msg)),
        Error::Shape(msg) => Error::Shape(format!("sequence {}: {}", id, msg)),
        other => other,
    }
}

/// Read one stored slice as an `[side, side, c]` tensor scaled to [0, 1].
fn load_slice_tensor(path: &Path) -> Result<Tensor<f32>> {
    let img = pgm::read_image(path)?;
    let data = img.pixels.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(&[img.height, img.width, img.channels], data)
}

/// All slices of one sequence on one plane, in ordinal order.
fn load_sequence_slices(cfg: &RunConfig, plane: PlaneId, seq_id: &str) -> Result<Vec<Tensor<f32>>> {
    let dir = slice_dir(cfg, plane, seq_id);
    if !dir.is_dir() {
        return Err(Error::Data(format!(
            "no slices for sequence {} on plane {} under {} (run the slice step first)",
            seq_id,
            plane,
            slices_root(cfg).display()
        )));
    }
    let mut slices = Vec::new();
    for ordinal in 0..cfg.slices_per_plane {
        slices.push(load_slice_tensor(&slice_file(&dir, ordinal))?);
    }
    Ok(slices)
}

/// Pixel-wise mean of equally shaped tensors, accumulated in f64.
fn mean_image(samples: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("mean image over an empty training set".into()))?;
    let mut acc = vec![0.0f64; first.len()];
    for s in samples {
        if s.shape() != first.shape() {
            return Err(Error::Shape("mean image over differently sized slices".into()));
        }
        for (a, &v) in acc.iter_mut().zip(s.data()) {
            *a += v as f64;
        }
    }
    let n = samples.len() as f64;
    Tensor::new(first.shape(), acc.into_iter().map(|a| (a / n) as f32).collect())
}

fn subtract(x: &Tensor<f32>, mean: &Tensor<f32>) -> Result<Tensor<f32>> {
    if x.shape() != mean.shape() {
        return Err(Error::Data(format!(
            "slice shape {:?} does not match the checkpoint mean image {:?} \
             (slices were cut with a different side)",
            x.shape(),
            mean.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(mean.data())
        .map(|(&a, &b)| a - b)
        .collect();
    Tensor::new(x.shape(), data)
}

// ---------------------------------------------------------------------------
// training

/// Deterministic sample order: one shuffled pass over the training set per
/// epoch, derived purely from (key, epoch), so any iteration's batch can be
/// reconstructed without replaying earlier ones.
struct BatchOrder {
    key: u64,
    n: usize,
    epoch: u64,
    perm: Vec<usize>,
}

impl BatchOrder {
    fn new(key: u64, n: usize) -> BatchOrder {
        let mut order = BatchOrder {
            key,
            n,
            epoch: u64::MAX,
            perm: Vec::new(),
        };
        order.load_epoch(0);
        order
    }

    fn load_epoch(&mut self, epoch: u64) {
        if self.epoch != epoch {
            let mut perm: Vec<usize> = (0..self.n).collect();
            Rng::new(mix_seed(&[self.key, epoch])).shuffle(&mut perm);
            self.epoch = epoch;
            self.perm = perm;
        }
    }

    /// Sample index for global slot `k` (slot = iter * batch_size + lane).
    fn sample_at(&mut self, k: usize) -> usize {
        let epoch = (k / self.n) as u64;
        self.load_epoch(epoch);
        self.perm[k % self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub plane: PlaneId,
    /// Iterations executed by this invocation (0 when already finished).
    pub iterations_run: usize,
    pub start_iteration: usize,
    pub final_loss: Option<f64>,
    pub checkpoint: PathBuf,
}

struct LoadedNet {
    net: Network<f32>,
    mean: Tensor<f32>,
    start_iter: usize,
}

/// Rebuild a network from a checkpoint, verifying the digest.
fn network_from_checkpoint(
    spec: &NetworkSpec,
    ckpt: &Checkpoint,
    cfg: &RunConfig,
    source: &Path,
) -> Result<Network<f32>> {
    if ckpt.spec_digest != spec_digest(spec) {
        return Err(Error::Data(format!(
            "{}: checkpoint was trained for a different network than this \
             configuration describes (digest {:016x} vs {:016x})",
            source.display(),
            ckpt.spec_digest,
            spec_digest(spec)
        )));
    }
    let mut net = Network::<f32>::init(spec.clone(), &mut Rng::new(0), cfg.init_std)?;
    net.dropout_rate = cfg.dropout_rate;
    net.augment_mirror = cfg.mirror;
    for (name, idx) in net.param_layers() {
        let p = net.params[idx].as_mut().expect("named layer has params");
        for (suffix, slot) in [
            ("weights", &mut p.weights),
            ("bias", &mut p.bias),
            ("v_weights", &mut p.v_weights),
            ("v_bias", &mut p.v_bias),
        ] {
            let stored = ckpt.tensor(&format!("{}.{}", name, suffix))?;
            if stored.shape() != slot.shape() {
                return Err(Error::Data(format!(
                    "{}: tensor {}.{} has shape {:?}, network wants {:?}",
                    source.display(),
                    name,
                    suffix,
                    stored.shape(),
                    slot.shape()
                )));
            }
            *slot = stored.clone();
        }
    }
    Ok(net)
}

fn checkpoint_from_network(
    net: &Network<f32>,
    mean: &Tensor<f32>,
    digest: u64,
    iteration: usize,
    rng_state: u64,
) -> Checkpoint {
    let mut tensors = Vec::new();
    for (name, idx) in net.param_layers() {
        let p = net.params[idx].as_ref().expect("named layer has params");
        tensors.push((format!("{}.weights", name), p.weights.clone()));
        tensors.push((format!("{}.bias", name), p.bias.clone()));
        tensors.push((format!("{}.v_weights", name), p.v_weights.clone()));
        tensors.push((format!("{}.v_bias", name), p.v_bias.clone()));
    }
    tensors.push(("mean".to_string(), mean.clone()));
    Checkpoint {
        spec_digest: digest,
        iteration: iteration as u64,
        rng_state,
        tensors,
    }
}

/// Newest usable checkpoint for a plane: the final one if present, else the
/// highest lr-step checkpoint.
fn resume_source(cfg: &RunConfig, plane: PlaneId) -> Option<PathBuf> {
    let final_path = checkpoint_path(cfg, plane);
    if final_path.is_file() {
        return Some(final_path);
    }
    let prefix = format!("{}_iter", plane);
    let mut best: Option<(u64, PathBuf)> = None;
    let entries = std::fs::read_dir(&cfg.out_dir).ok()?;
    for entry in entries.flatten() {
        let name = entry.file_name().into_string().ok()?;
        if let Some(rest) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".ckpt")) {
            if let Ok(iter) = rest.parse::<u64>() {
                if best.as_ref().map_or(true, |(b, _)| iter > *b) {
                    best = Some((iter, entry.path()));
                }
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Train the network for one plane on one trial's training split.
///
/// Idempotent: a finished run returns immediately; an interrupted one
/// resumes from its newest checkpoint, reproducing the exact iteration
/// stream a single uninterrupted run would have produced.
pub fn run_train(cfg: &RunConfig, plane: PlaneId, trial: usize) -> Result<TrainSummary> {
    let m = load_or_scan_manifest(cfg)?;
    let plan = load_or_make_splits(cfg, &m)?;
    let train_ids = &trial_of(&plan, trial)?.train;
    let spec = network_spec(cfg, &m)?;
    let digest = spec_digest(&spec);
    let p_idx = plane_index(plane);
    // The stored stream id doubles as a config guard on resume.
    let stream_id = mix_seed(&[cfg.seed, p_idx]);

    // Training samples: every slice of every training sequence, in
    // (sequence, ordinal) order.
    let mut inputs: Vec<Tensor<f32>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for &seq_idx in train_ids {
        let entry = &m.sequences[seq_idx];
        for slice in load_sequence_slices(cfg, plane, &entry.id)? {
            inputs.push(slice);
            labels.push(entry.class_index);
        }
    }
    if inputs.is_empty() {
        return Err(Error::Data("training split has no slices".into()));
    }

    let loaded = match resume_source(cfg, plane) {
        Some(path) => {
            let ckpt = load_checkpoint(&path)?;
            if ckpt.rng_state != stream_id {
                return Err(Error::Config(format!(
                    "{}: checkpoint belongs to a run with a different seed",
                    path.display()
                )));
            }
            let net = network_from_checkpoint(&spec, &ckpt, cfg, &path)?;
            LoadedNet {
                net,
                mean: ckpt.tensor("mean")?.clone(),
                start_iter: ckpt.iteration as usize,
            }
        }
        None => {
            let mean = if cfg.mean_subtract {
                let refs: Vec<&Tensor<f32>> = inputs.iter().collect();
                mean_image(&refs)?
            } else {
                Tensor::zeros(inputs[0].shape())?
            };
            let mut rng = Rng::new(mix_seed(&[cfg.seed, p_idx, STREAM_INIT]));
            let mut net = Network::<f32>::init(spec.clone(), &mut rng, cfg.init_std)?;
            net.dropout_rate = cfg.dropout_rate;
            net.augment_mirror = cfg.mirror;
            LoadedNet {
                net,
                mean,
                start_iter: 0,
            }
        }
    };
    let LoadedNet {
        mut net,
        mean,
        start_iter,
    } = loaded;

    let final_path = checkpoint_path(cfg, plane);
    if start_iter >= cfg.train.num_iters {
        // Nothing left to run; make sure the final checkpoint exists (a
        // zero-iteration run saves the raw initialization).
        if !final_path.is_file() {
            let ckpt = checkpoint_from_network(&net, &mean, digest, start_iter, stream_id);
            save_checkpoint(&final_path, &ckpt)?;
        }
        return Ok(TrainSummary {
            plane,
            iterations_run: 0,
            start_iteration: start_iter,
            final_loss: None,
            checkpoint: final_path,
        });
    }

    let centered: Vec<Tensor<f32>> = inputs
        .iter()
        .map(|x| subtract(x, &mean))
        .collect::<Result<_>>()?;
    drop(inputs);

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io_at(&cfg.out_dir, e))?;
    let log_path = train_log_path(cfg, plane);
    let mut log = if start_iter == 0 {
        let mut f = std::fs::File::create(&log_path).map_err(|e| Error::io_at(&log_path, e))?;
        writeln!(f, "iter\tlr\tloss").map_err(|e| Error::io_at(&log_path, e))?;
        f
    } else {
        std::fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io_at(&log_path, e))?
    };

    let mut order = BatchOrder::new(mix_seed(&[cfg.seed, p_idx, STREAM_ORDER]), centered.len());
    let batch_size = cfg.train.batch_size;
    let mut last_loss = f64::NAN;
    for iter in start_iter..cfg.train.num_iters {
        let batch: Vec<TrainSample<f32>> = (0..batch_size)
            .map(|lane| {
                let sample = order.sample_at(iter * batch_size + lane);
                (
                    centered[sample].clone(),
                    labels[sample],
                    mix_seed(&[cfg.seed, p_idx, STREAM_SAMPLE, iter as u64, lane as u64]),
                )
            })
            .collect();
        let loss = train_step(&mut net, &batch, &cfg.train, iter)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged: loss {} at iteration {} (plane {}, lr {})",
                loss,
                iter,
                plane,
                cfg.train.lr_at(iter)
            )));
        }
        writeln!(log, "{}\t{:?}\t{:?}", iter, cfg.train.lr_at(iter), loss)
            .map_err(|e| Error::io_at(&log_path, e))?;
        last_loss = loss;

        let completed = iter + 1;
        if cfg.train.steps.contains(&completed) {
            let ckpt = checkpoint_from_network(&net, &mean, digest, completed, stream_id);
            save_checkpoint(&step_checkpoint_path(cfg, plane, completed), &ckpt)?;
        }
    }

    let ckpt = checkpoint_from_network(&net, &mean, digest, cfg.train.num_iters, stream_id);
    save_checkpoint(&final_path, &ckpt)?;
    Ok(TrainSummary {
        plane,
        iterations_run: cfg.train.num_iters - start_iter,
        start_iteration: start_iter,
        final_loss: Some(last_loss),
        checkpoint: final_path,
    })
}

// ---------------------------------------------------------------------------
// evaluation

/// Per-slice raw scores of a trial's test split on one plane, reading the
/// stored dump when allowed and present, running inference otherwise.
fn plane_scores(
    cfg: &RunConfig,
    m: &DatasetManifest,
    plan: &SplitPlan,
    trial: usize,
    plane: PlaneId,
    reuse: bool,
) -> Result<Vec<ScoreVector>> {
    let path = scores_path(cfg, plane);
    if reuse && path.is_file() {
        return ensemble::read_scores(&path);
    }
    let spec = network_spec(cfg, m)?;
    let ckpt_path = checkpoint_path(cfg, plane);
    if !ckpt_path.is_file() {
        return Err(Error::Data(format!(
            "{}: no checkpoint for plane {} (train it first)",
            ckpt_path.display(),
            plane
        )));
    }
    let ckpt = load_checkpoint(&ckpt_path)?;
    let net = network_from_checkpoint(&spec, &ckpt, cfg, &ckpt_path)?;
    let mean = ckpt.tensor("mean")?;

    let test_ids = &trial_of(plan, trial)?.test;
    let scores: Vec<Vec<ScoreVector>> = test_ids
        .par_iter()
        .map(|&seq_idx| -> Result<Vec<ScoreVector>> {
            let entry = &m.sequences[seq_idx];
            let mut out = Vec::new();
            for (ordinal, slice) in load_sequence_slices(cfg, plane, &entry.id)?
                .into_iter()
                .enumerate()
            {
                let x = subtract(&slice, mean)?;
                let logits = net.logits(&x)?;
                out.push(ScoreVector {
                    sequence_id: entry.id.clone(),
                    plane,
                    slice_index: ordinal,
                    values: logits.data().iter().map(|&v| v as f64).collect(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<ScoreVector> = scores.into_iter().flatten().collect();
    ensemble::write_scores(&path, &flat)?;
    Ok(flat)
}

fn truth_of(m: &DatasetManifest, test_ids: &[usize]) -> BTreeMap<String, usize> {
    test_ids
        .iter()
        .map(|&i| (m.sequences[i].id.clone(), m.sequences[i].class_index))
        .collect()
}

fn render_report_txt(
    cfg: &RunConfig,
    m: &DatasetManifest,
    subset: &PlaneSubset,
    trial: usize,
    report: &EvalReport,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("trial {}\n", trial));
    out.push_str(&format!("planes {}\n", subset));
    out.push_str(&format!("fusion {}\n", cfg.fusion));
    out.push_str(&format!("sequences {}\n", report.n_sequences));
    out.push_str(&format!("accuracy {:.4}\n", report.accuracy));
    out.push_str("per-class accuracy\n");
    for (name, acc) in m.classes.iter().zip(&report.per_class) {
        out.push_str(&format!("  {} {:.4}\n", name, acc));
    }
    out.push_str("confusion matrix (rows true, columns predicted)\n");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("  {}\n", cells.join(" ")));
    }
    out
}

fn render_report_tsv(m: &DatasetManifest, report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("accuracy\t{:?}\n", report.accuracy));
    for (name, acc) in m.classes.iter().zip(&report.per_class) {
        out.push_str(&format!("per-class\t{}\t{:?}\n", name, acc));
    }
    for (name, row) in m.classes.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("confusion\t{}\t{}\n", name, cells.join("\t")));
    }
    out
}

/// Score the test split on the configured planes, fuse, and write reports.
/// With `reuse_scores`, existing dumps are trusted instead of re-running
/// inference, so fusion variants can be recomputed cheaply.
pub fn run_eval(cfg: &RunConfig, trial: usize, reuse_scores: bool) -> Result<EvalReport> {
    let m = load_or_scan_manifest(cfg)?;
    let plan = load_or_make_splits(cfg, &m)?;
    let test_ids = &trial_of(&plan, trial)?.test;

    let mut all_scores = Vec::new();
    for &plane in cfg.planes.planes() {
        all_scores.extend(plane_scores(cfg, &m, &plan, trial, plane, reuse_scores)?);
    }
    let truth = truth_of(&m, test_ids);
    let report = ensemble::evaluate(&all_scores, &truth, m.n_classes(), &cfg.planes, cfg.fusion)?;

    let txt_path = cfg.out_dir.join("report.txt");
    std::fs::write(
        &txt_path,
        render_report_txt(cfg, &m, &cfg.planes, trial, &report),
    )
    .map_err(|e| Error::io_at(&txt_path, e))?;
    let tsv_path = cfg.out_dir.join("report.tsv");
    std::fs::write(&tsv_path, render_report_tsv(&m, &report))
        .map_err(|e| Error::io_at(&tsv_path, e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub subset: PlaneSubset,
    pub accuracy: f64,
}

/// Evaluate every plane subset from one set of score dumps; one row per
/// subset, singletons first.
pub fn run_ablate(cfg: &RunConfig, trial: usize, reuse_scores: bool) -> Result<Vec<AblationRow>> {
    let m = load_or_scan_manifest(cfg)?;
    let plan = load_or_make_splits(cfg, &m)?;
    let test_ids = &trial_of(&plan, trial)?.test;

    let mut all_scores = Vec::new();
    for plane in PlaneId::ALL {
        all_scores.extend(plane_scores(cfg, &m, &plan, trial, plane, reuse_scores)?);
    }
    let truth = truth_of(&m, test_ids);

    let mut rows = Vec::new();
    for subset in PlaneSubset::enumerate_all() {
        let report = ensemble::evaluate(&all_scores, &truth, m.n_classes(), &subset, cfg.fusion)?;
        rows.push(AblationRow {
            subset,
            accuracy: report.accuracy,
        });
    }

    let mut txt = String::from("planes    accuracy\n");
    let mut tsv = String::from("subset\taccuracy\n");
    for row in &rows {
        txt.push_str(&format!("{:<9} {:.4}\n", row.subset.to_string(), row.accuracy));
        tsv.push_str(&format!("{}\t{:?}\n", row.subset, row.accuracy));
    }
    let txt_path = cfg.out_dir.join("ablation.txt");
    std::fs::write(&txt_path, txt).map_err(|e| Error::io_at(&txt_path, e))?;
    let tsv_path = cfg.out_dir.join("ablation.tsv");
    std::fs::write(&tsv_path, tsv).map_err(|e| Error::io_at(&tsv_path, e))?;
    Ok(rows)
}
