//! Run configuration with layered overrides.
//!
//! Every knob has a built-in default; a key=value config file overrides the
//! defaults; command-line flags override the file. Both the file parser and
//! the flag parser produce the same [`ConfigPatch`], so the two layers
//! cannot drift apart.

use std::path::{Path, PathBuf};

use crate::arch::ArchKind;
use crate::data::splits::Protocol;
use crate::ensemble::{FusionRule, PlaneSubset};
use crate::nn::TrainConfig;
use crate::{Error, Result};

/// Everything a run needs. Defaults describe the stock configuration:
/// the 50-pixel architecture with its matching schedule, ten slices per
/// plane, and raw-sum fusion over all three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub root: PathBuf,
    pub out_dir: PathBuf,
    pub protocol: Protocol,
    pub planes: PlaneSubset,
    pub arch: ArchKind,
    pub train: TrainConfig,
    /// Slices taken per plane (m).
    pub slices_per_plane: usize,
    /// Side length slices are resized to before cropping; `None` means the
    /// architecture's native slice side.
    pub slice_side: Option<usize>,
    pub seed: u64,
    /// Subtract the training-set mean image from every slice.
    pub mean_subtract: bool,
    /// Random horizontal mirroring during training.
    pub mirror: bool,
    pub fusion: FusionRule,
    pub dropout_rate: f64,
    pub init_std: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            root: PathBuf::from("."),
            out_dir: PathBuf::from("out"),
            protocol: Protocol::RandomTrials { trials: 20, train_fraction: 0.5 },
            planes: PlaneSubset::all(),
            arch: ArchKind::Tcnn50,
            train: TrainConfig::preset_dyntex_pp(),
            slices_per_plane: 10,
            slice_side: None,
            seed: 1,
            mean_subtract: true,
            mirror: true,
            fusion: FusionRule::SumRaw,
            dropout_rate: 0.5,
            init_std: 0.01,
        }
    }
}

impl RunConfig {
    /// The slice side actually in effect.
    pub fn effective_slice_side(&self) -> usize {
        self.slice_side.unwrap_or_else(|| self.arch.default_slice_side())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.slices_per_plane == 0 {
            return Err(Error::Config("slices per plane must be >= 1".into()));
        }
        let side = self.effective_slice_side();
        if side < self.arch.input_side() {
            return Err(Error::Config(format!(
                "slice side {} is smaller than the {} crop side {}",
                side,
                self.arch,
                self.arch.input_side()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config(format!(
                "init std must be positive, got {}",
                self.init_std
            )));
        }
        Ok(())
    }

    /// defaults <- file (if any) <- flags, then validate.
    pub fn resolve(file: Option<&Path>, flags: &ConfigPatch) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            parse_config_file(path)?.apply(&mut cfg);
        }
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A partial configuration; `None` fields leave the target untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPatch {
    pub root: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub protocol: Option<Protocol>,
    pub planes: Option<PlaneSubset>,
    pub arch: Option<ArchKind>,
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub weight_decay: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub num_iters: Option<usize>,
    pub steps: Option<Vec<usize>>,
    pub slices_per_plane: Option<usize>,
    pub slice_side: Option<usize>,
    pub seed: Option<u64>,
    pub mean_subtract: Option<bool>,
    pub mirror: Option<bool>,
    pub fusion: Option<FusionRule>,
    pub dropout_rate: Option<f64>,
    pub init_std: Option<f64>,
}

impl ConfigPatch {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! put {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$($target)+ = v;
                }
            };
        }
        put!(root => root);
        put!(out_dir => out_dir);
        put!(protocol => protocol);
        put!(planes => planes);
        put!(arch => arch);
        put!(lr => train.lr);
        put!(gamma => train.gamma);
        put!(weight_decay => train.weight_decay);
        put!(momentum => train.momentum);
        put!(batch_size => train.batch_size);
        put!(num_iters => train.num_iters);
        put!(steps => train.steps);
        put!(slices_per_plane => slices_per_plane);
        put!(seed => seed);
        put!(mean_subtract => mean_subtract);
        put!(mirror => mirror);
        put!(fusion => fusion);
        put!(dropout_rate => dropout_rate);
        put!(init_std => init_std);
        if let Some(v) = self.slice_side {
            cfg.slice_side = Some(v);
        }
    }

    /// Set one field from its config-file key. Shared by the file parser
    /// and the CLI flag handler.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::Config(format!("bad value '{}' for key '{}' ({})", value, key, what))
        };
        match key {
            "root" => self.root = Some(PathBuf::from(value)),
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "protocol" => self.protocol = Some(value.parse()?),
            "planes" => self.planes = Some(value.parse()?),
            "arch" => self.arch = Some(value.parse()?),
            "lr" => self.lr = Some(value.parse().map_err(|_| bad("number"))?),
            "gamma" => self.gamma = Some(value.parse().map_err(|_| bad("number"))?),
            "weight-decay" => {
                self.weight_decay = Some(value.parse().map_err(|_| bad("number"))?)
            }
            "momentum" => self.momentum = Some(value.parse().map_err(|_| bad("number"))?),
            "batch" => self.batch_size = Some(value.parse().map_err(|_| bad("integer"))?),
            "iters" => self.num_iters = Some(value.parse().map_err(|_| bad("integer"))?),
            "steps" => {
                let steps = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad("integer list")))
                        .collect::<Result<_>>()?
                };
                self.steps = Some(steps);
            }
            "slices" => {
                self.slices_per_plane = Some(value.parse().map_err(|_| bad("integer"))?)
            }
            "slice-side" => self.slice_side = Some(value.parse().map_err(|_| bad("integer"))?),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad("integer"))?),
            "mean-subtract" => self.mean_subtract = Some(parse_bool(value).ok_or_else(|| bad("bool"))?),
            "mirror" => self.mirror = Some(parse_bool(value).ok_or_else(|| bad("bool"))?),
            "fusion" => self.fusion = Some(value.parse()?),
            "dropout" => self.dropout_rate = Some(value.parse().map_err(|_| bad("number"))?),
            "init-std" => self.init_std = Some(value.parse().map_err(|_| bad("number"))?),
            _ => return Err(Error::Config(format!("unknown config key '{}'", key))),
        }
        Ok(())
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "on" | "1" | "yes" => Some(true),
        "false" | "off" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Line-oriented `key = value` text; `#` starts a comment, blank lines are
/// skipped.
pub fn parse_config_file(path: &Path) -> Result<ConfigPatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut patch = ConfigPatch::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key=value, got '{}'",
                path.display(),
                lineno + 1,
                line
            ))
        })?;
        patch
            .set(key.trim(), value.trim())
            .map_err(|e| match e {
                Error::Config(msg) => {
                    Error::Config(format!("{}:{}: {}", path.display(), lineno + 1, msg))
                }
                other => other,
            })?;
    }
    Ok(patch)
}
