//! Orthogonal-plane slicing of video volumes.
//!
//! A dynamic-texture sequence is a volume `h x w x d x c` (rows, columns,
//! frames, channels). Each of the three orthogonal planes yields a stack of
//! `m` equally spaced slices, every slice resized to `n x n`:
//!
//! * `xy` — spatial frames, sampled along the time axis
//! * `xt` — one pixel row over time (time along slice rows, x along columns)
//! * `yt` — one pixel column over time (time along rows, y along columns)

use std::fmt;
use std::str::FromStr;

use crate::tensor::{bilinear_resize, Tensor};
use crate::{Error, Result};

/// One of the three orthogonal slicing planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlaneId {
    Xy,
    Xt,
    Yt,
}

impl PlaneId {
    pub const ALL: [PlaneId; 3] = [PlaneId::Xy, PlaneId::Xt, PlaneId::Yt];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneId::Xy => "xy",
            PlaneId::Xt => "xt",
            PlaneId::Yt => "yt",
        }
    }
}

impl fmt::Display for PlaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaneId {
    type Err = Error;

    fn from_str(s: &str) -> Result<PlaneId> {
        match s {
            "xy" => Ok(PlaneId::Xy),
            "xt" => Ok(PlaneId::Xt),
            "yt" => Ok(PlaneId::Yt),
            other => Err(Error::Config(format!("unknown plane '{}'", other))),
        }
    }
}

/// How many slices to take per plane and the output side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceConfig {
    /// Slices per plane (m).
    pub slices_per_plane: usize,
    /// Output side length (n); every slice is resized to n x n.
    pub side: usize,
}

impl SliceConfig {
    pub fn new(slices_per_plane: usize, side: usize) -> Result<SliceConfig> {
        if slices_per_plane == 0 || side == 0 {
            return Err(Error::Constraint(
                "slice config wants m >= 1 and n >= 1".into(),
            ));
        }
        Ok(SliceConfig {
            slices_per_plane,
            side,
        })
    }

    /// m must not exceed the smallest volume extent. The analogous bound on n
    /// is deliberately not enforced; slices may be resized up or down.
    pub fn validate_for(&self, volume: &VideoVolume) -> Result<()> {
        let min_ext = volume.height().min(volume.width()).min(volume.frames());
        if self.slices_per_plane > min_ext {
            return Err(Error::Constraint(format!(
                "m = {} exceeds min(h, w, d) = {} of a {}x{}x{} volume",
                self.slices_per_plane,
                min_ext,
                volume.height(),
                volume.width(),
                volume.frames(),
            )));
        }
        Ok(())
    }
}

/// A dynamic-texture sequence: `h x w x d x c` tensor with fixed axis roles.
#[derive(Debug, Clone)]
pub struct VideoVolume {
    data: Tensor<f32>,
}

impl VideoVolume {
    pub fn new(data: Tensor<f32>) -> Result<VideoVolume> {
        let shape = data.shape();
        if shape.len() != 4 {
            return Err(Error::Shape(format!(
                "video volume wants rank 4 (h x w x d x c), got {:?}",
                shape
            )));
        }
        let c = shape[3];
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("channel count must be 1 or 3, got {}", c)));
        }
        Ok(VideoVolume { data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize, t: usize, ch: usize) -> f32 {
        self.data.get(&[y, x, t, ch])
    }

    /// Swap the x and y axes; exchanges the roles of the xt and yt planes.
    pub fn transpose_xy(&self) -> VideoVolume {
        let (h, w, d, c) = (self.height(), self.width(), self.frames(), self.channels());
        let mut out = Tensor::zeros(&[w, h, d, c]).expect("valid shape");
        let src = self.data.data();
        let dst = out.data_mut();
        for y in 0..h {
            for x in 0..w {
                for t in 0..d {
                    let s = ((y * w + x) * d + t) * c;
                    let o = ((x * h + y) * d + t) * c;
                    dst[o..o + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
        VideoVolume { data: out }
    }
}

/// Indices of `m` equally spaced samples over `0..extent`.
///
/// For m == 1 the middle index is used; otherwise index i is
/// `round_half_up(i * (extent - 1) / (m - 1))`, which always includes both
/// endpoints. Computed in exact integer arithmetic.
pub fn slice_indices(extent: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Constraint("m must be >= 1".into()));
    }
    if m > extent {
        return Err(Error::Constraint(format!(
            "cannot take {} slices from extent {}",
            m, extent
        )));
    }
    if m == 1 {
        return Ok(vec![(extent - 1) / 2]);
    }
    Ok((0..m)
        .map(|i| {
            let num = i * (extent - 1);
            let den = m - 1;
            // round_half_up(num / den)
            (2 * num + den) / (2 * den)
        })
        .collect())
}

/// Extract the pre-resize slice image for one plane position.
///
/// * xy: the frame at time index `pos` (`h x w x c`)
/// * xt: the row `pos` over time, time along slice rows (`d x w x c`)
/// * yt: the column `pos` over time, time along slice rows (`d x h x c`)
pub fn raw_slice(volume: &VideoVolume, plane: PlaneId, pos: usize) -> Tensor<f32> {
    let (h, w, d, c) = (
        volume.height(),
        volume.width(),
        volume.frames(),
        volume.channels(),
    );
    let src = volume.tensor().data();
    match plane {
        PlaneId::Xy => {
            let mut out = Tensor::zeros(&[h, w, c]).expect("valid shape");
            let dst = out.data_mut();
            for y in 0..h {
                for x in 0..w {
                    let s = ((y * w + x) * d + pos) * c;
                    let o = (y * w + x) * c;
                    dst[o..o + c].copy_from_slice(&src[s..s + c]);
                }
            }
            out
        }
        PlaneId::Xt => {
            let mut out = Tensor::zeros(&[d, w, c]).expect("valid shape");
            let dst = out.data_mut();
            for t in 0..d {
                for x in 0..w {
                    let s = ((pos * w + x) * d + t) * c;
                    let o = (t * w + x) * c;
                    dst[o..o + c].copy_from_slice(&src[s..s + c]);
                }
            }
            out
        }
        PlaneId::Yt => {
            let mut out = Tensor::zeros(&[d, h, c]).expect("valid shape");
            let dst = out.data_mut();
            for t in 0..d {
                for y in 0..h {
                    let s = ((y * w + pos) * d + t) * c;
                    let o = (t * h + y) * c;
                    dst[o..o + c].copy_from_slice(&src[s..s + c]);
                }
            }
            out
        }
    }
}

/// Positions at which a plane is sliced (time for xy, y for xt, x for yt).
pub fn plane_positions(volume: &VideoVolume, plane: PlaneId, m: usize) -> Result<Vec<usize>> {
    let extent = match plane {
        PlaneId::Xy => volume.frames(),
        PlaneId::Xt => volume.height(),
        PlaneId::Yt => volume.width(),
    };
    slice_indices(extent, m)
}

/// Extract the full slice stack for one plane: an `n x n x m x c` tensor.
pub fn extract_plane(
    volume: &VideoVolume,
    plane: PlaneId,
    cfg: &SliceConfig,
) -> Result<Tensor<f32>> {
    cfg.validate_for(volume)?;
    let (m, n) = (cfg.slices_per_plane, cfg.side);
    let c = volume.channels();
    let positions = plane_positions(volume, plane, m)?;

    let mut out = Tensor::zeros(&[n, n, m, c])?;
    let dst = out.data_mut();
    for (i, &pos) in positions.iter().enumerate() {
        let slice = bilinear_resize(&raw_slice(volume, plane, pos), n, n)?;
        let sd = slice.data();
        for y in 0..n {
            for x in 0..n {
                let s = (y * n + x) * c;
                let o = ((y * n + x) * m + i) * c;
                dst[o..o + c].copy_from_slice(&sd[s..s + c]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn random_volume(h: usize, w: usize, d: usize, c: usize, seed: u64) -> VideoVolume {
        let mut t = Tensor::zeros(&[h, w, d, c]).unwrap();
        t.fill_gaussian(&mut Rng::new(seed), 0.0, 1.0);
        VideoVolume::new(t).unwrap()
    }

    // Element-wise reference extractor: no shared code with raw_slice.
    fn oracle_slice(v: &VideoVolume, plane: PlaneId, pos: usize) -> Vec<f32> {
        let (h, w, d, c) = (v.height(), v.width(), v.frames(), v.channels());
        let mut out = Vec::new();
        match plane {
            PlaneId::Xy => {
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            out.push(v.at(y, x, pos, ch));
                        }
                    }
                }
            }
            PlaneId::Xt => {
                for t in 0..d {
                    for x in 0..w {
                        for ch in 0..c {
                            out.push(v.at(pos, x, t, ch));
                        }
                    }
                }
            }
            PlaneId::Yt => {
                for t in 0..d {
                    for y in 0..h {
                        for ch in 0..c {
                            out.push(v.at(y, pos, t, ch));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn indices_extent_50_m_5() {
        // round_half_up(i * 49 / 4): 0, 12.25, 24.5, 36.75, 49.
        assert_eq!(slice_indices(50, 5).unwrap(), vec![0, 12, 25, 37, 49]);
    }

    #[test]
    fn indices_extent_250_m_10() {
        assert_eq!(
            slice_indices(250, 10).unwrap(),
            vec![0, 28, 55, 83, 111, 138, 166, 194, 221, 249]
        );
    }

    #[test]
    fn indices_dense_selection() {
        assert_eq!(slice_indices(7, 7).unwrap(), vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn indices_singleton_takes_middle() {
        assert_eq!(slice_indices(9, 1).unwrap(), vec![4]);
        assert_eq!(slice_indices(10, 1).unwrap(), vec![4]);
        assert_eq!(slice_indices(1, 1).unwrap(), vec![0]);
    }

    #[test]
    fn indices_reject_m_above_extent() {
        assert!(slice_indices(4, 5).is_err());
    }

    #[test]
    fn indices_nondecreasing_with_endpoints() {
        for extent in 2..60usize {
            for m in 2..=extent {
                let idx = slice_indices(extent, m).unwrap();
                assert_eq!(idx[0], 0);
                assert_eq!(*idx.last().unwrap(), extent - 1);
                assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn constant_volume_gives_identical_xy_slices_and_striped_xt() {
        // Every frame identical: all xy slices equal; every xt slice has
        // identical rows.
        let mut t = Tensor::zeros(&[6, 5, 8, 1]).unwrap();
        for y in 0..6 {
            for x in 0..5 {
                for tt in 0..8 {
                    t.set(&[y, x, tt, 0], (y * 5 + x) as f32);
                }
            }
        }
        let v = VideoVolume::new(t).unwrap();
        let cfg = SliceConfig::new(3, 5).unwrap();
        let xy = extract_plane(&v, PlaneId::Xy, &cfg).unwrap();
        for i in 1..3 {
            for y in 0..5 {
                for x in 0..5 {
                    assert_eq!(xy.get(&[y, x, i, 0]), xy.get(&[y, x, 0, 0]));
                }
            }
        }
        let xt = raw_slice(&v, PlaneId::Xt, 2);
        for t_row in 1..8 {
            for x in 0..5 {
                assert_eq!(xt.get(&[t_row, x, 0]), xt.get(&[0, x, 0]));
            }
        }
    }

    #[test]
    fn cube_dense_xy_slices_equal_frames_exactly() {
        // h = w = d = n and m = d: resize is identity, slice i is frame i.
        let v = random_volume(6, 6, 6, 3, 17);
        let cfg = SliceConfig::new(6, 6).unwrap();
        let xy = extract_plane(&v, PlaneId::Xy, &cfg).unwrap();
        for i in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    for ch in 0..3 {
                        assert_eq!(xy.get(&[y, x, i, ch]), v.at(y, x, i, ch));
                    }
                }
            }
        }
    }

    #[test]
    fn time_ramp_volume_has_constant_xt_rows() {
        // Frame t is the constant image t / (d - 1); row r of an xt slice is
        // the constant t_r / (d - 1).
        let d = 9;
        let mut t = Tensor::zeros(&[4, 5, d, 1]).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                for tt in 0..d {
                    t.set(&[y, x, tt, 0], tt as f32 / (d - 1) as f32);
                }
            }
        }
        let v = VideoVolume::new(t).unwrap();
        let xt = raw_slice(&v, PlaneId::Xt, 1);
        let oracle = oracle_slice(&v, PlaneId::Xt, 1);
        assert_eq!(xt.data(), &oracle[..]);
        for tt in 0..d {
            for x in 0..5 {
                assert_eq!(xt.get(&[tt, x, 0]), tt as f32 / (d - 1) as f32);
            }
        }
    }

    #[test]
    fn raw_slices_match_triple_loop_oracle() {
        let mut rng = Rng::new(23);
        for _ in 0..40 {
            let h = 1 + rng.next_below(16);
            let w = 1 + rng.next_below(16);
            let d = 1 + rng.next_below(16);
            let c = if rng.next_below(2) == 0 { 1 } else { 3 };
            let v = random_volume(h, w, d, c, rng.next_u64());
            for plane in PlaneId::ALL {
                let extent = match plane {
                    PlaneId::Xy => d,
                    PlaneId::Xt => h,
                    PlaneId::Yt => w,
                };
                let pos = rng.next_below(extent);
                assert_eq!(raw_slice(&v, plane, pos).data(), &oracle_slice(&v, plane, pos)[..]);
            }
        }
    }

    #[test]
    fn plane_stacks_share_shape() {
        let v = random_volume(7, 9, 11, 3, 5);
        let cfg = SliceConfig::new(4, 5).unwrap();
        let shapes: Vec<_> = PlaneId::ALL
            .iter()
            .map(|&p| extract_plane(&v, p, &cfg).unwrap().shape().to_vec())
            .collect();
        assert_eq!(shapes[0], vec![5, 5, 4, 3]);
        assert_eq!(shapes[0], shapes[1]);
        assert_eq!(shapes[1], shapes[2]);
    }

    #[test]
    fn transposing_xy_swaps_xt_and_yt() {
        let v = random_volume(6, 8, 5, 1, 31);
        let vt = v.transpose_xy();
        // Pre-resize slices: xt of the transposed volume equals yt of the
        // original (and vice versa) at matching positions.
        for pos in 0..6 {
            assert_eq!(
                raw_slice(&vt, PlaneId::Yt, pos).data(),
                raw_slice(&v, PlaneId::Xt, pos).data()
            );
        }
        for pos in 0..8 {
            assert_eq!(
                raw_slice(&vt, PlaneId::Xt, pos).data(),
                raw_slice(&v, PlaneId::Yt, pos).data()
            );
        }
    }

    #[test]
    fn xy_extraction_commutes_with_channel_permutation() {
        let v = random_volume(5, 5, 6, 3, 77);
        // Permute channels (0,1,2) -> (2,0,1) on the volume.
        let (h, w, d, c) = (5, 5, 6, 3);
        let mut permuted = Tensor::zeros(&[h, w, d, c]).unwrap();
        for y in 0..h {
            for x in 0..w {
                for t in 0..d {
                    for ch in 0..c {
                        permuted.set(&[y, x, t, (ch + 2) % 3], v.at(y, x, t, ch));
                    }
                }
            }
        }
        let vp = VideoVolume::new(permuted).unwrap();
        let cfg = SliceConfig::new(3, 5).unwrap();
        let a = extract_plane(&v, PlaneId::Xy, &cfg).unwrap();
        let b = extract_plane(&vp, PlaneId::Xy, &cfg).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                for i in 0..3 {
                    for ch in 0..3 {
                        assert_eq!(a.get(&[y, x, i, ch]), b.get(&[y, x, i, (ch + 2) % 3]));
                    }
                }
            }
        }
    }

    #[test]
    fn config_constraint_violations_propagate() {
        let v = random_volume(4, 4, 4, 1, 1);
        let cfg = SliceConfig::new(5, 4).unwrap();
        assert!(extract_plane(&v, PlaneId::Xy, &cfg).is_err());
    }
}
