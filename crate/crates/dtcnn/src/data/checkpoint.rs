//! Binary training checkpoints.
//!
//! Little-endian layout, documented field by field:
//!
//! ```text
//! magic          8 bytes  "DTCNNCKP"
//! version        u32      currently 1
//! spec_digest    u64      FNV-1a over the owning network description
//! iteration      u64      completed training iterations
//! rng_state      u64      training-stream generator state
//! tensor_count   u32
//! per tensor:
//!   name_len     u32      then that many UTF-8 bytes
//!   rank         u32      then rank x u64 extents
//!   data         f32 x product(extents), little-endian
//! ```
//!
//! Writes go to a sibling temp file and land via atomic rename, so a crash
//! never leaves a half-written checkpoint under the real name. Loading
//! re-validates everything: magic, version, shapes, and byte counts.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DTCNNCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_digest: u64,
    pub iteration: u64,
    pub rng_state: u64,
    /// Named tensors in a fixed order (parameters, momenta, mean image).
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Data(format!("checkpoint has no tensor '{}'", name)))
    }
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io_at(&tmp, e))?;
        let mut w = BufWriter::new(file);
        write_body(&mut w, ckpt).map_err(|e| Error::io_at(&tmp, e))?;
        w.flush().map_err(|e| Error::io_at(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

fn write_body(w: &mut impl Write, ckpt: &Checkpoint) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ckpt.spec_digest.to_le_bytes())?;
    w.write_all(&ckpt.iteration.to_le_bytes())?;
    w.write_all(&ckpt.rng_state.to_le_bytes())?;
    w.write_all(&(ckpt.tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in &ckpt.tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &ext in tensor.shape() {
            w.write_all(&(ext as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: String| Error::Data(format!("{}: {}", path.display(), msg));
    let trunc = || bad("truncated checkpoint".into());

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| trunc())?;
    if &magic != MAGIC {
        return Err(bad("bad magic (not a checkpoint file)".into()));
    }
    let version = read_u32(&mut r).ok_or_else(trunc)?;
    if version != VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {} (expected {})",
            version, VERSION
        )));
    }
    let spec_digest = read_u64(&mut r).ok_or_else(trunc)?;
    let iteration = read_u64(&mut r).ok_or_else(trunc)?;
    let rng_state = read_u64(&mut r).ok_or_else(trunc)?;
    let count = read_u32(&mut r).ok_or_else(trunc)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r).ok_or_else(trunc)? as usize;
        if name_len > 4096 {
            return Err(bad(format!("implausible tensor name length {}", name_len)));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| trunc())?;
        let name = String::from_utf8(name).map_err(|_| bad("non-UTF-8 tensor name".into()))?;
        let rank = read_u32(&mut r).ok_or_else(trunc)? as usize;
        if rank == 0 || rank > 8 {
            return Err(bad(format!("implausible tensor rank {}", rank)));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r).ok_or_else(trunc)? as usize);
        }
        // Cap before allocating so a corrupt header cannot demand the moon.
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&l| l <= 1 << 31)
            .ok_or_else(|| bad(format!("implausible tensor shape {:?}", shape)))?;
        let mut raw = vec![0u8; len * 4];
        r.read_exact(&mut raw).map_err(|_| trunc())?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((name, Tensor::new(&shape, data)?));
    }
    // Anything after the declared tensors is corruption.
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io_at(path, e))? != 0 {
        return Err(bad("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint {
        spec_digest,
        iteration,
        rng_state,
        tensors,
    })
}

fn read_u32(r: &mut impl Read) -> Option<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).ok()?;
    Some(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Option<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).ok()?;
    Some(u64::from_le_bytes(buf))
}
