use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Bilinear resize of an `h x w x c` image tensor to `out_h x out_w x c`.
///
/// Half-pixel-center convention: output pixel (i, j) samples the source at
/// `((i + 0.5) * h / out_h - 0.5, (j + 0.5) * w / out_w - 0.5)`, clamped to
/// the source rectangle. Channels are interpolated independently.
pub fn bilinear_resize<T: Scalar>(src: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = src.shape() else {
        return Err(Error::Shape(format!(
            "bilinear_resize wants a rank-3 image, got {:?}",
            src.shape()
        )));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("bilinear_resize: zero output extent".into()));
    }

    let mut out = Tensor::zeros(&[out_h, out_w, c])?;
    // Per-axis sample positions: (low index, high index, fraction toward high).
    let ys = axis_samples(h, out_h);
    let xs = axis_samples(w, out_w);

    let sd = src.data();
    let od = out.data_mut();
    for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
            let p00 = (y0 * w + x0) * c;
            let p01 = (y0 * w + x1) * c;
            let p10 = (y1 * w + x0) * c;
            let p11 = (y1 * w + x1) * c;
            let o = (i * out_w + j) * c;
            let fy = T::from_f64(fy);
            let fx = T::from_f64(fx);
            let one = T::one();
            for k in 0..c {
                let top = (one - fx) * sd[p00 + k] + fx * sd[p01 + k];
                let bot = (one - fx) * sd[p10 + k] + fx * sd[p11 + k];
                od[o + k] = (one - fy) * top + fy * bot;
            }
        }
    }
    Ok(out)
}

fn axis_samples(extent: usize, out: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|i| {
            let pos = (i as f64 + 0.5) * extent as f64 / out as f64 - 0.5;
            let pos = pos.clamp(0.0, (extent - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(extent - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}
