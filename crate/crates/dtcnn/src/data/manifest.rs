//! Dataset discovery and sequence loading.
//!
//! On-disk layout: `root/<class_name>/<sequence_id>/frame_00000.pgm`, one
//! directory per class, one per sequence, frames sorted by filename. A scan
//! produces a manifest — one line per sequence: `id class frames h w c` —
//! which every later stage consumes instead of re-walking the tree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::pgm;
use crate::slicer::VideoVolume;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceEntry {
    pub id: String,
    pub class_index: usize,
    pub frame_count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Class names sorted lexicographically; position = class index.
    pub classes: Vec<String>,
    /// Sorted by (class index, id).
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn sequence(&self, id: &str) -> Result<&SequenceEntry> {
        self.sequences
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Data(format!("unknown sequence id '{}'", id)))
    }

    /// Per-class lists of indices into `sequences`.
    pub fn sequences_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.classes.len()];
        for (i, s) in self.sequences.iter().enumerate() {
            by_class[s.class_index].push(i);
        }
        by_class
    }

    pub fn sequence_dir(&self, entry: &SequenceEntry) -> PathBuf {
        self.root
            .join(&self.classes[entry.class_index])
            .join(&entry.id)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for s in &self.sequences {
            if s.class_index >= self.classes.len() {
                return Err(Error::Data(format!(
                    "sequence {} has class index {} but only {} classes exist",
                    s.id,
                    s.class_index,
                    self.classes.len()
                )));
            }
            if s.frame_count == 0 {
                return Err(Error::Data(format!("sequence {} has no frames", s.id)));
            }
            if s.channels != 1 && s.channels != 3 {
                return Err(Error::Data(format!(
                    "sequence {} has {} channels (expected 1 or 3)",
                    s.id, s.channels
                )));
            }
            if let Some(prev) = seen.insert(s.id.clone(), s.class_index) {
                return Err(Error::Data(format!(
                    "duplicate sequence id '{}' (classes {} and {})",
                    s.id, prev, s.class_index
                )));
            }
        }
        let used: Vec<bool> = {
            let mut used = vec![false; self.classes.len()];
            for s in &self.sequences {
                used[s.class_index] = true;
            }
            used
        };
        if used.iter().any(|&u| !u) {
            return Err(Error::Data("manifest lists a class with no sequences".into()));
        }
        Ok(())
    }
}

fn sorted_dir_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io_at(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io_at(dir, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().into_string().map_err(|_| {
            Error::Data(format!("non-UTF-8 directory name under {}", dir.display()))
        })?;
        if name.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!(
                "directory name '{}' contains whitespace (manifest lines are whitespace-split)",
                name
            )));
        }
        names.push(name);
    }
    names.sort();
    Ok(names)
}

/// Frame filenames of one sequence directory, lexicographically sorted.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io_at(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io_at(dir, e))?;
        let path = entry.path();
        let is_frame = path.is_file()
            && path
                .extension()
                .map_or(false, |e| e == "pgm" || e == "ppm");
        if is_frame {
            frames.push(path);
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Data(format!(
            "{}: sequence directory has no frames",
            dir.display()
        )));
    }
    Ok(frames)
}

/// Walk `root/class/sequence/frame.pgm` and build a manifest. Every frame
/// header is read so size mismatches surface here, not mid-training.
pub fn scan(root: &Path) -> Result<DatasetManifest> {
    let classes = sorted_dir_names(root)?;
    if classes.is_empty() {
        return Err(Error::Data(format!(
            "{}: no class directories found",
            root.display()
        )));
    }
    let mut sequences = Vec::new();
    for (class_index, class) in classes.iter().enumerate() {
        let class_dir = root.join(class);
        let ids = sorted_dir_names(&class_dir)?;
        if ids.is_empty() {
            return Err(Error::Data(format!(
                "{}: class directory has no sequences",
                class_dir.display()
            )));
        }
        for id in ids {
            let seq_dir = class_dir.join(&id);
            let frames = frame_files(&seq_dir)?;
            let (height, width, channels) = pgm::read_image_meta(&frames[0])?;
            for frame in &frames[1..] {
                let meta = pgm::read_image_meta(frame)?;
                if meta != (height, width, channels) {
                    return Err(Error::Data(format!(
                        "{}: frame size {:?} differs from first frame {:?}",
                        frame.display(),
                        meta,
                        (height, width, channels)
                    )));
                }
            }
            sequences.push(SequenceEntry {
                id,
                class_index,
                frame_count: frames.len(),
                height,
                width,
                channels,
            });
        }
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        classes,
        sequences,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut out = String::new();
    for s in &manifest.sequences {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            s.id,
            manifest.classes[s.class_index],
            s.frame_count,
            s.height,
            s.width,
            s.channels
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

/// Load a manifest file. `root` is the dataset directory the ids resolve
/// against (the file itself stores only relative sequence ids).
pub fn load_manifest(path: &Path, root: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!(
                "{}:{}: expected 6 fields (id class frames h w c), got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize, what: &str| -> Result<usize> {
            fields[i].parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{}: bad {} '{}'",
                    path.display(),
                    lineno + 1,
                    what,
                    fields[i]
                ))
            })
        };
        rows.push((
            fields[0].to_string(),
            fields[1].to_string(),
            num(2, "frame count")?,
            num(3, "height")?,
            num(4, "width")?,
            num(5, "channel count")?,
        ));
    }
    let mut classes: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    classes.sort();
    classes.dedup();
    let index_of = |name: &str| classes.iter().position(|c| c == name).unwrap();
    let mut sequences: Vec<SequenceEntry> = rows
        .into_iter()
        .map(|(id, class, frame_count, height, width, channels)| SequenceEntry {
            id,
            class_index: index_of(&class),
            frame_count,
            height,
            width,
            channels,
        })
        .collect();
    sequences.sort_by(|a, b| (a.class_index, &a.id).cmp(&(b.class_index, &b.id)));
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        classes,
        sequences,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Load all frames of one sequence into an `h x w x d x c` volume with
/// pixel values 0..=255 as f32.
pub fn load_sequence(manifest: &DatasetManifest, id: &str) -> Result<VideoVolume> {
    let entry = manifest.sequence(id)?;
    let dir = manifest.sequence_dir(entry);
    let frames = frame_files(&dir)?;
    if frames.len() != entry.frame_count {
        return Err(Error::Data(format!(
            "{}: manifest says {} frames, directory has {}",
            dir.display(),
            entry.frame_count,
            frames.len()
        )));
    }
    let (h, w, d, c) = (entry.height, entry.width, entry.frame_count, entry.channels);
    let mut volume = Tensor::<f32>::zeros(&[h, w, d, c])?;
    let data = volume.data_mut();
    for (t, frame_path) in frames.iter().enumerate() {
        let img = pgm::read_image(frame_path)?;
        if (img.height, img.width, img.channels) != (h, w, c) {
            return Err(Error::Data(format!(
                "{}: frame size {}x{}x{} does not match manifest {}x{}x{}",
                frame_path.display(),
                img.height,
                img.width,
                img.channels,
                h,
                w,
                c
            )));
        }
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[((y * w + x) * d + t) * c + ch] =
                        img.pixels[(y * w + x) * c + ch] as f32;
                }
            }
        }
    }
    VideoVolume::new(volume)
}
