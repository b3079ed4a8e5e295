//! Dataset plumbing: frame files, manifests, splits, synthetic data and
//! checkpoints.

pub mod checkpoint;
pub mod manifest;
pub mod pgm;
pub mod splits;
pub mod synth;

pub use checkpoint::{fnv1a64, load_checkpoint, save_checkpoint, Checkpoint};
pub use manifest::{load_manifest, load_sequence, save_manifest, scan, DatasetManifest, SequenceEntry};
pub use pgm::{read_image, write_image, Image};
pub use splits::{load_splits, make_splits, save_splits, Protocol, SplitPlan, Trial};
pub use synth::{generate_dataset, synth_volume, SynthKind};
