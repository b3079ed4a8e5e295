//! `dtcnn` — dynamic-texture classification from the command line.
//!
//! The pipeline is run as independent commands sharing one configuration:
//! `synth`/`scan` prepare a dataset, `slice` cuts every sequence on the
//! three orthogonal planes, `train` fits one network per plane, `eval`
//! fuses the per-slice scores of a test split into a report, and `ablate`
//! repeats the evaluation for every plane subset.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtcnn::config::{ConfigPatch, RunConfig};
use dtcnn::data::{generate_dataset, save_manifest, scan, SynthKind};
use dtcnn::pipeline;
use dtcnn::slicer::PlaneId;
use dtcnn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dtcnn",
    version,
    about = "Dynamic-texture classification on three orthogonal video planes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset manifest by scanning root/class/sequence/frames.
    Scan {
        /// Dataset root directory.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
    /// Generate a synthetic dynamic-texture dataset.
    Synth {
        /// Directory to create the dataset under.
        #[arg(long)]
        root: PathBuf,
        /// Comma-separated texture kinds (static, flicker, drift-x,
        /// drift-y, advected-noise, wave).
        #[arg(long, default_value = "static,flicker,drift-x")]
        kinds: String,
        /// Sequences per class.
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 48)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Cut every sequence into per-plane slice stacks on disk.
    Slice {
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Train the network for one plane (or all three) on a trial's
    /// training split.
    Train {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Plane to train: xy, xt, yt, or all.
        #[arg(long, default_value = "all")]
        plane: String,
        /// Trial index within the split plan.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Score the test split, fuse the configured planes, write reports.
    Eval {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Re-run inference even when score dumps already exist.
        #[arg(long)]
        rescore: bool,
    },
    /// Evaluate every plane subset from one set of score dumps.
    Ablate {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Re-run inference even when score dumps already exist.
        #[arg(long)]
        rescore: bool,
    },
}

/// One optional flag per configuration key. Values are parsed by the same
/// code as config-file lines, so `--lr 0.01` and `lr = 0.01` cannot drift.
#[derive(Args, Default)]
struct ConfigFlags {
    /// Configuration file with key = value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long)]
    root: Option<String>,
    /// Output directory for slices, checkpoints and reports.
    #[arg(long)]
    out: Option<String>,
    /// Split protocol: loo, kfold:K, or random:TRIALS:FRACTION.
    #[arg(long)]
    protocol: Option<String>,
    /// Planes to fuse at evaluation, e.g. xy+xt+yt.
    #[arg(long)]
    planes: Option<String>,
    /// Architecture: tcnn3, tcnn50, or tcnn50-micro.
    #[arg(long)]
    arch: Option<String>,
    /// Base learning rate.
    #[arg(long)]
    lr: Option<String>,
    /// Learning-rate decay factor applied at each step.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<String>,
    /// Training iterations.
    #[arg(long)]
    iters: Option<String>,
    /// Comma-separated iterations at which the lr decays (empty clears).
    #[arg(long)]
    steps: Option<String>,
    /// Slices per plane (m).
    #[arg(long)]
    slices: Option<String>,
    /// Side length slices are resized to (defaults to the architecture's).
    #[arg(long = "slice-side")]
    slice_side: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Subtract the training-set mean image (true/false).
    #[arg(long = "mean-subtract")]
    mean_subtract: Option<String>,
    /// Random horizontal mirroring during training (true/false).
    #[arg(long)]
    mirror: Option<String>,
    /// Fusion rule: sum, sum-softmax, majority, or borda.
    #[arg(long)]
    fusion: Option<String>,
    /// Dropout rate in [0, 1).
    #[arg(long)]
    dropout: Option<String>,
    /// Std of the Gaussian weight initialization.
    #[arg(long = "init-std")]
    init_std: Option<String>,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut patch = ConfigPatch::default();
        let pairs: [(&str, &Option<String>); 20] = [
            ("root", &self.root),
            ("out", &self.out),
            ("protocol", &self.protocol),
            ("planes", &self.planes),
            ("arch", &self.arch),
            ("lr", &self.lr),
            ("gamma", &self.gamma),
            ("weight-decay", &self.weight_decay),
            ("momentum", &self.momentum),
            ("batch", &self.batch),
            ("iters", &self.iters),
            ("steps", &self.steps),
            ("slices", &self.slices),
            ("slice-side", &self.slice_side),
            ("seed", &self.seed),
            ("mean-subtract", &self.mean_subtract),
            ("mirror", &self.mirror),
            ("fusion", &self.fusion),
            ("dropout", &self.dropout),
            ("init-std", &self.init_std),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                patch.set(key, v)?;
            }
        }
        RunConfig::resolve(self.config.as_deref(), &patch)
    }
}

fn parse_kinds(s: &str) -> Result<Vec<SynthKind>> {
    s.split(',')
        .map(|k| k.trim().parse())
        .collect::<Result<Vec<_>>>()
}

fn parse_planes(s: &str) -> Result<Vec<PlaneId>> {
    if s == "all" {
        Ok(PlaneId::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

fn report_train(summary: &pipeline::TrainSummary) {
    if summary.iterations_run == 0 {
        println!(
            "plane {}: already trained through iteration {} ({})",
            summary.plane,
            summary.start_iteration,
            summary.checkpoint.display()
        );
    } else {
        println!(
            "plane {}: {} iterations (from {}), final loss {:.4}, wrote {}",
            summary.plane,
            summary.iterations_run,
            summary.start_iteration,
            summary.final_loss.unwrap_or(f64::NAN),
            summary.checkpoint.display()
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scan { root } => {
            let m = scan(&root)?;
            let path = root.join("manifest.txt");
            save_manifest(&path, &m)?;
            println!(
                "{} classes, {} sequences -> {}",
                m.n_classes(),
                m.sequences.len(),
                path.display()
            );
        }
        Command::Synth {
            root,
            kinds,
            per_class,
            height,
            width,
            frames,
            seed,
        } => {
            let kinds = parse_kinds(&kinds)?;
            let m = generate_dataset(&root, &kinds, per_class, height, width, frames, seed)?;
            println!(
                "generated {} sequences in {} classes under {}",
                m.sequences.len(),
                m.n_classes(),
                root.display()
            );
        }
        Command::Slice { cfg } => {
            let cfg = cfg.resolve()?;
            let summary = pipeline::run_slice(&cfg)?;
            println!(
                "sliced {} sequences into {} slices under {}",
                summary.sequences,
                summary.slices_written,
                pipeline::slices_root(&cfg).display()
            );
        }
        Command::Train { cfg, plane, trial } => {
            let cfg = cfg.resolve()?;
            let planes = parse_planes(&plane)?;
            if planes.len() == 1 {
                report_train(&pipeline::run_train(&cfg, planes[0], trial)?);
            } else {
                // Materialize the manifest and split plan once so the
                // concurrent per-plane runs only read them.
                let m = pipeline::load_or_scan_manifest(&cfg)?;
                pipeline::load_or_make_splits(&cfg, &m)?;
                let cfg = &cfg;
                let summaries = std::thread::scope(|scope| {
                    let handles: Vec<_> = planes
                        .iter()
                        .map(|&p| scope.spawn(move || pipeline::run_train(cfg, p, trial)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("training thread panicked"))
                        .collect::<Result<Vec<_>>>()
                })?;
                for summary in &summaries {
                    report_train(summary);
                }
            }
        }
        Command::Eval { cfg, trial, rescore } => {
            let cfg = cfg.resolve()?;
            pipeline::run_eval(&cfg, trial, !rescore)?;
            let path = cfg.out_dir.join("report.txt");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io_at(&path, e))?;
            print!("{}", text);
        }
        Command::Ablate { cfg, trial, rescore } => {
            let cfg = cfg.resolve()?;
            let rows = pipeline::run_ablate(&cfg, trial, !rescore)?;
            println!("planes    accuracy");
            for row in &rows {
                println!("{:<9} {:.4}", row.subset.to_string(), row.accuracy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
