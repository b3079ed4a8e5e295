//! Synthetic dynamic-texture families for desk-scale experiments.
//!
//! The generator is built so that single frames leak as little class
//! information as possible while the temporal structure separates classes
//! cleanly. All texture kinds start from the same gained value-noise
//! texture: a static kind freezes it, a flicker kind modulates the gain
//! sinusoidally over time, drift kinds translate it. With equal seeds the
//! flicker and drift volumes share frame 0 with the static volume bit for
//! bit, and every kind draws its per-sequence gain from one distribution,
//! so the per-frame marginal statistics match across kinds. Classifiers
//! restricted to single frames therefore sit near chance; the signal lives
//! in the time axis.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::manifest::{self, DatasetManifest};
use crate::data::pgm::{self, Image};
use crate::slicer::VideoVolume;
use crate::tensor::{mix_seed, Rng, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    StaticTexture,
    DriftX,
    DriftY,
    Flicker,
    AdvectedNoise,
    Wave,
}

impl SynthKind {
    pub const ALL: [SynthKind; 6] = [
        SynthKind::StaticTexture,
        SynthKind::DriftX,
        SynthKind::DriftY,
        SynthKind::Flicker,
        SynthKind::AdvectedNoise,
        SynthKind::Wave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::StaticTexture => "static",
            SynthKind::DriftX => "drift-x",
            SynthKind::DriftY => "drift-y",
            SynthKind::Flicker => "flicker",
            SynthKind::AdvectedNoise => "advected-noise",
            SynthKind::Wave => "wave",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SynthKind> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown texture kind '{}' (expected one of static, drift-x, drift-y, \
                     flicker, advected-noise, wave)",
                    s
                ))
            })
    }
}

/// Gain modulation depth shared by all texture kinds.
const GAIN_AMPLITUDE: f64 = 0.35;
/// Full flicker periods over one sequence.
const FLICKER_CYCLES: f64 = 3.0;
/// Drift speed in pixels per frame.
const DRIFT_SPEED: usize = 1;
/// Texture values are mapped into [LO, LO+SPAN] so the maximum gain never
/// clips; clipping would break the matched-marginals construction.
const TEX_LO: f64 = 0.1;
const TEX_SPAN: f64 = 0.6;

/// Toroidal multi-octave value noise in [0, 1], row-major h x w.
fn value_noise_2d(rng: &mut Rng, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; h * w];
    let mut amplitude = 1.0;
    let mut total = 0.0;
    for octave in 0..3u32 {
        let l = 4usize << octave;
        let lattice: Vec<f64> = (0..l * l).map(|_| rng.next_f64()).collect();
        for y in 0..h {
            let fy = y as f64 / h as f64 * l as f64;
            let y0 = fy as usize;
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = x as f64 / w as f64 * l as f64;
                let x0 = fx as usize;
                let tx = fx - x0 as f64;
                let v00 = lattice[(y0 % l) * l + x0 % l];
                let v01 = lattice[(y0 % l) * l + (x0 + 1) % l];
                let v10 = lattice[((y0 + 1) % l) * l + x0 % l];
                let v11 = lattice[((y0 + 1) % l) * l + (x0 + 1) % l];
                let top = v00 + (v01 - v00) * tx;
                let bot = v10 + (v11 - v10) * tx;
                out[y * w + x] += amplitude * (top + (bot - top) * ty);
            }
        }
        total += amplitude;
        amplitude *= 0.5;
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Toroidal 3D value noise in [0, 1], index order (y, x, t).
fn value_noise_3d(rng: &mut Rng, h: usize, w: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; h * w * d];
    let mut amplitude = 1.0;
    let mut total = 0.0;
    for octave in 0..2u32 {
        let l = 3usize << octave;
        let lattice: Vec<f64> = (0..l * l * l).map(|_| rng.next_f64()).collect();
        let at = |a: usize, b: usize, c: usize| lattice[((a % l) * l + b % l) * l + c % l];
        for y in 0..h {
            let fy = y as f64 / h as f64 * l as f64;
            let y0 = fy as usize;
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = x as f64 / w as f64 * l as f64;
                let x0 = fx as usize;
                let tx = fx - x0 as f64;
                for t in 0..d {
                    let ft = t as f64 / d as f64 * l as f64;
                    let t0 = ft as usize;
                    let tt = ft - t0 as f64;
                    let mut acc = 0.0;
                    for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                            for (dt, wt) in [(0, 1.0 - tt), (1, tt)] {
                                acc += wy * wx * wt * at(y0 + dy, x0 + dx, t0 + dt);
                            }
                        }
                    }
                    out[(y * w + x) * d + t] += amplitude * acc;
                }
            }
        }
        total += amplitude;
        amplitude *= 0.5;
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32
}

fn volume_from(h: usize, w: usize, d: usize, f: impl Fn(usize, usize, usize) -> f64) -> VideoVolume {
    let mut t = Tensor::<f32>::zeros(&[h, w, d, 1]).expect("valid shape");
    let data = t.data_mut();
    for y in 0..h {
        for x in 0..w {
            for tt in 0..d {
                data[(y * w + x) * d + tt] = quantize(f(y, x, tt));
            }
        }
    }
    VideoVolume::new(t).expect("rank 4, c=1")
}

/// Generate one grayscale sequence. Values are already quantized to whole
/// 8-bit levels, so writing frames to disk and reloading them is lossless.
pub fn synth_volume(kind: SynthKind, seed: u64, h: usize, w: usize, d: usize) -> Result<VideoVolume> {
    if h == 0 || w == 0 || d == 0 {
        return Err(Error::Constraint(format!(
            "synthetic volume dimensions must be positive, got {}x{}x{}",
            h, w, d
        )));
    }
    let mut rng = Rng::new(seed);
    let volume = match kind {
        SynthKind::StaticTexture | SynthKind::Flicker | SynthKind::DriftX => {
            // Shared draws, in this order, keep frame 0 identical across the
            // three kinds for one seed.
            let noise = value_noise_2d(&mut rng, h, w);
            let phase = rng.next_f64() * std::f64::consts::TAU;
            let tex = move |y: usize, x: usize| TEX_LO + TEX_SPAN * noise[y * w + x];
            match kind {
                SynthKind::StaticTexture => {
                    let gain = 1.0 + GAIN_AMPLITUDE * phase.sin();
                    volume_from(h, w, d, move |y, x, _| gain * tex(y, x))
                }
                SynthKind::Flicker => volume_from(h, w, d, move |y, x, t| {
                    let gain = 1.0
                        + GAIN_AMPLITUDE
                            * (std::f64::consts::TAU * FLICKER_CYCLES * t as f64 / d as f64
                                + phase)
                                .sin();
                    gain * tex(y, x)
                }),
                _ => {
                    let gain = 1.0 + GAIN_AMPLITUDE * phase.sin();
                    volume_from(h, w, d, move |y, x, t| {
                        gain * tex(y, (x + t * DRIFT_SPEED) % w)
                    })
                }
            }
        }
        // The y-drift is the x-drift with the spatial axes swapped, which
        // makes the pair exactly transpose-symmetric.
        SynthKind::DriftY => synth_volume(SynthKind::DriftX, seed, w, h, d)?.transpose_xy(),
        SynthKind::AdvectedNoise => {
            let noise = value_noise_3d(&mut rng, h, w, d);
            let vx = 1 + rng.next_below(2); // 1..=2 px/frame
            let vy = 1 + rng.next_below(2);
            volume_from(h, w, d, move |y, x, t| {
                let sy = (y + vy * t) % h;
                let sx = (x + vx * t) % w;
                TEX_LO + TEX_SPAN * noise[(sy * w + sx) * d + t]
            })
        }
        SynthKind::Wave => {
            // Two traveling plane waves with random orientation, spatial
            // frequency, temporal frequency and phase.
            let mut waves = Vec::new();
            for _ in 0..2 {
                let theta = rng.next_f64() * std::f64::consts::TAU;
                let spatial = 1.0 + 2.0 * rng.next_f64(); // cycles per image
                let temporal = 1.0 + 2.0 * rng.next_f64(); // cycles per sequence
                let phi = rng.next_f64() * std::f64::consts::TAU;
                waves.push((theta, spatial, temporal, phi));
            }
            volume_from(h, w, d, move |y, x, t| {
                let mut v = 0.5;
                for &(theta, spatial, temporal, phi) in &waves {
                    let along =
                        theta.cos() * x as f64 / w as f64 + theta.sin() * y as f64 / h as f64;
                    v += 0.22
                        * (std::f64::consts::TAU * (spatial * along - temporal * t as f64 / d as f64)
                            + phi)
                            .sin();
                }
                v
            })
        }
    };
    Ok(volume)
}

/// Write a labeled dataset of synthetic sequences under `root` (one class
/// directory per kind), plus a `manifest.txt`, and return the manifest.
pub fn generate_dataset(
    root: &Path,
    kinds: &[SynthKind],
    per_class: usize,
    h: usize,
    w: usize,
    d: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if kinds.is_empty() || per_class == 0 {
        return Err(Error::Constraint(
            "synthetic dataset needs at least one kind and one sequence per class".into(),
        ));
    }
    let mut sorted = kinds.to_vec();
    sorted.sort_by_key(|k| k.as_str());
    sorted.dedup();
    if sorted.len() != kinds.len() {
        return Err(Error::Constraint("duplicate texture kinds requested".into()));
    }
    for (ci, &kind) in sorted.iter().enumerate() {
        for i in 0..per_class {
            let seq_seed = mix_seed(&[seed, ci as u64, i as u64]);
            let volume = synth_volume(kind, seq_seed, h, w, d)?;
            let dir = root
                .join(kind.as_str())
                .join(format!("{}_{:03}", kind.as_str(), i));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
            for t in 0..d {
                let pixels: Vec<u8> = (0..h * w)
                    .map(|p| volume.at(p / w, p % w, t, 0) as u8)
                    .collect();
                let img = Image::new(h, w, 1, pixels)?;
                pgm::write_image(&dir.join(format!("frame_{:05}.pgm", t)), &img)?;
            }
        }
    }
    let m = manifest::scan(root)?;
    manifest::save_manifest(&root.join("manifest.txt"), &m)?;
    Ok(m)
}
