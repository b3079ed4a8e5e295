//! Declarative network descriptions and the three concrete classifier
//! architectures, with symbolic shape inference and parameter counting so
//! layer geometry can be verified without running anything.

use std::fmt;
use std::str::FromStr;

use crate::nn::window_out_extent;
use crate::{Error, Result};

/// One layer of a network, as data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Random window (training) / center window (inference) of `side x side`.
    Crop { side: usize },
    Conv {
        kernel: usize,
        pad: usize,
        stride: usize,
        out_channels: usize,
    },
    ReLU,
    /// Max pooling; `pad` is carried for completeness but every architecture
    /// here uses 0 and the executor rejects anything else.
    MaxPool { kernel: usize, pad: usize, stride: usize },
    Lrn,
    /// Spatial mean per feature map, collapsing h x w x c to a length-c vector.
    Energy,
    FullyConnected { out_features: usize },
    Dropout,
    SoftmaxLoss,
}

/// A full network: an ordered layer list plus its input contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub input_channels: usize,
    pub num_classes: usize,
    /// Side length after the crop layer — the canonical network input size.
    /// Raw inputs may be any size >= this; the crop layer reduces them.
    pub input_side: usize,
}

/// The selectable architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Tcnn3,
    Tcnn50,
    Tcnn50Micro,
}

impl ArchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Tcnn3 => "tcnn3",
            ArchKind::Tcnn50 => "tcnn50",
            ArchKind::Tcnn50Micro => "tcnn50-micro",
        }
    }

    pub fn build(self, input_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
        match self {
            ArchKind::Tcnn3 => build_tcnn3(input_channels, num_classes),
            ArchKind::Tcnn50 => build_tcnn50(input_channels, num_classes),
            ArchKind::Tcnn50Micro => build_tcnn50_micro(input_channels, num_classes),
        }
    }

    /// Side length slices are materialized at for this architecture; the
    /// margin above the crop side leaves room for random-crop augmentation
    /// (none for the micro variant, whose crop is the identity).
    pub fn default_slice_side(self) -> usize {
        match self {
            ArchKind::Tcnn3 => 256,
            ArchKind::Tcnn50 => 50,
            ArchKind::Tcnn50Micro => 48,
        }
    }

    /// Crop output side: the canonical input size of the network.
    pub fn input_side(self) -> usize {
        match self {
            ArchKind::Tcnn3 => 227,
            ArchKind::Tcnn50 | ArchKind::Tcnn50Micro => 48,
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ArchKind> {
        match s {
            "tcnn3" => Ok(ArchKind::Tcnn3),
            "tcnn50" => Ok(ArchKind::Tcnn50),
            "tcnn50-micro" => Ok(ArchKind::Tcnn50Micro),
            other => Err(Error::Config(format!(
                "unknown architecture '{}' (expected tcnn3, tcnn50 or tcnn50-micro)",
                other
            ))),
        }
    }
}

fn check_io(c: usize, n: usize) -> Result<()> {
    if c != 1 && c != 3 {
        return Err(Error::Config(format!("input channels must be 1 or 3, got {}", c)));
    }
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", n)));
    }
    Ok(())
}

/// The 227-input architecture: five learned layers (three conv, three fc)
/// with LRN after the first two pooling stages and the energy layer bridging
/// convolutional and dense parts.
pub fn build_tcnn3(input_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
    check_io(input_channels, num_classes)?;
    use LayerSpec::*;
    Ok(NetworkSpec {
        layers: vec![
            Crop { side: 227 },
            Conv { kernel: 11, pad: 0, stride: 4, out_channels: 96 },
            ReLU,
            MaxPool { kernel: 3, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 5, pad: 2, stride: 1, out_channels: 256 },
            ReLU,
            MaxPool { kernel: 3, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 3, pad: 1, stride: 1, out_channels: 384 },
            ReLU,
            Energy,
            FullyConnected { out_features: 4096 },
            ReLU,
            Dropout,
            FullyConnected { out_features: 4096 },
            ReLU,
            Dropout,
            FullyConnected { out_features: num_classes },
            SoftmaxLoss,
        ],
        input_channels,
        num_classes,
        input_side: 227,
    })
}

/// The 48-input architecture for small sources: same layer pattern with a
/// gentler first conv and 3000-wide dense layers.
pub fn build_tcnn50(input_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
    check_io(input_channels, num_classes)?;
    use LayerSpec::*;
    Ok(NetworkSpec {
        layers: vec![
            Crop { side: 48 },
            Conv { kernel: 5, pad: 2, stride: 1, out_channels: 96 },
            ReLU,
            MaxPool { kernel: 2, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 3, pad: 1, stride: 1, out_channels: 256 },
            ReLU,
            MaxPool { kernel: 2, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 3, pad: 1, stride: 1, out_channels: 384 },
            ReLU,
            Energy,
            FullyConnected { out_features: 3000 },
            ReLU,
            Dropout,
            FullyConnected { out_features: 3000 },
            ReLU,
            Dropout,
            FullyConnected { out_features: num_classes },
            SoftmaxLoss,
        ],
        input_channels,
        num_classes,
        input_side: 48,
    })
}

/// Scaled-down variant of the 48-input architecture (channels divided by 8,
/// dense width 256). Not part of the reference design; exists so CI and the
/// synthetic experiments run in minutes on a CPU.
pub fn build_tcnn50_micro(input_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
    check_io(input_channels, num_classes)?;
    use LayerSpec::*;
    Ok(NetworkSpec {
        layers: vec![
            Crop { side: 48 },
            Conv { kernel: 5, pad: 2, stride: 1, out_channels: 12 },
            ReLU,
            MaxPool { kernel: 2, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 3, pad: 1, stride: 1, out_channels: 32 },
            ReLU,
            MaxPool { kernel: 2, pad: 0, stride: 2 },
            Lrn,
            Conv { kernel: 3, pad: 1, stride: 1, out_channels: 48 },
            ReLU,
            Energy,
            FullyConnected { out_features: 256 },
            ReLU,
            Dropout,
            FullyConnected { out_features: 256 },
            ReLU,
            Dropout,
            FullyConnected { out_features: num_classes },
            SoftmaxLoss,
        ],
        input_channels,
        num_classes,
        input_side: 48,
    })
}

/// Per-layer output shapes, computed symbolically. Spatial shapes are
/// `[h, w, c]`; vector shapes are `[len]`. The crop layer's output is fixed
/// at its configured side regardless of the (dynamic) raw input size.
pub fn infer_shapes(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    let mut cur: Vec<usize> = vec![spec.input_side, spec.input_side, spec.input_channels];
    let mut out = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        let next = match *layer {
            LayerSpec::Crop { side } => {
                if cur.len() != 3 {
                    return Err(Error::Shape(format!("layer {}: crop wants a spatial input", idx)));
                }
                if side == 0 || side > cur[0] || side > cur[1] {
                    return Err(Error::Shape(format!(
                        "layer {}: crop side {} exceeds input {}x{}",
                        idx, side, cur[0], cur[1]
                    )));
                }
                vec![side, side, cur[2]]
            }
            LayerSpec::Conv { kernel, pad, stride, out_channels } => {
                if cur.len() != 3 {
                    return Err(Error::Shape(format!("layer {}: conv wants a spatial input", idx)));
                }
                let h = window_out_extent(cur[0], kernel, pad, stride)?;
                let w = window_out_extent(cur[1], kernel, pad, stride)?;
                vec![h, w, out_channels]
            }
            LayerSpec::MaxPool { kernel, pad, stride } => {
                if cur.len() != 3 {
                    return Err(Error::Shape(format!("layer {}: pool wants a spatial input", idx)));
                }
                let h = window_out_extent(cur[0], kernel, pad, stride)?;
                let w = window_out_extent(cur[1], kernel, pad, stride)?;
                vec![h, w, cur[2]]
            }
            LayerSpec::Lrn => {
                if cur.len() != 3 {
                    return Err(Error::Shape(format!("layer {}: lrn wants a spatial input", idx)));
                }
                cur.clone()
            }
            LayerSpec::Energy => {
                if cur.len() != 3 {
                    return Err(Error::Shape(format!("layer {}: energy wants a spatial input", idx)));
                }
                vec![cur[2]]
            }
            LayerSpec::FullyConnected { out_features } => {
                if cur.len() != 1 {
                    return Err(Error::Shape(format!("layer {}: fc wants a vector input", idx)));
                }
                vec![out_features]
            }
            LayerSpec::ReLU | LayerSpec::Dropout => cur.clone(),
            LayerSpec::SoftmaxLoss => {
                if cur.len() != 1 {
                    return Err(Error::Shape(format!("layer {}: loss wants a vector input", idx)));
                }
                cur.clone()
            }
        };
        out.push(next.clone());
        cur = next;
    }
    Ok(out)
}

/// Structural validation beyond shape inference: classifier output width
/// matches the class count and the loss layer sits last.
pub fn validate_spec(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    let shapes = infer_shapes(spec)?;
    match spec.layers.last() {
        Some(LayerSpec::SoftmaxLoss) => {}
        _ => return Err(Error::Constraint("network must end with the loss layer".into())),
    }
    if shapes.last().map(|s| s.as_slice()) != Some(&[spec.num_classes][..]) {
        return Err(Error::Constraint(format!(
            "network output width {:?} does not match {} classes",
            shapes.last(),
            spec.num_classes
        )));
    }
    Ok(shapes)
}

/// Trainable parameter count per layer, plus the total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCounts {
    pub per_layer: Vec<usize>,
    pub total: usize,
}

pub fn count_params(spec: &NetworkSpec) -> Result<ParamCounts> {
    let shapes = infer_shapes(spec)?;
    let mut per_layer = Vec::with_capacity(spec.layers.len());
    let mut cur_c = spec.input_channels;
    let mut cur_vec = None::<usize>;
    for (layer, shape) in spec.layers.iter().zip(&shapes) {
        let count = match *layer {
            LayerSpec::Conv { kernel, out_channels, .. } => {
                let n = kernel * kernel * cur_c * out_channels + out_channels;
                cur_c = out_channels;
                n
            }
            LayerSpec::FullyConnected { out_features } => {
                let n_in = cur_vec.expect("fc after energy");
                n_in * out_features + out_features
            }
            _ => 0,
        };
        if shape.len() == 1 {
            cur_vec = Some(shape[0]);
        } else {
            cur_c = shape[2];
        }
        per_layer.push(count);
    }
    let total = per_layer.iter().sum();
    Ok(ParamCounts { per_layer, total })
}

/// Human-readable layer names: learned layers are numbered (C1.., FC1..),
/// the rest keep their kind.
pub fn layer_names(spec: &NetworkSpec) -> Vec<String> {
    let mut conv = 0;
    let mut pool = 0;
    let mut fc = 0;
    spec.layers
        .iter()
        .map(|l| match l {
            LayerSpec::Crop { .. } => "crop".to_string(),
            LayerSpec::Conv { .. } => {
                conv += 1;
                format!("C{}", conv)
            }
            LayerSpec::ReLU => "relu".to_string(),
            LayerSpec::MaxPool { .. } => {
                pool += 1;
                format!("P{}", pool)
            }
            LayerSpec::Lrn => "LRN".to_string(),
            LayerSpec::Energy => "energy".to_string(),
            LayerSpec::FullyConnected { .. } => {
                fc += 1;
                format!("FC{}", fc)
            }
            LayerSpec::Dropout => "dropout".to_string(),
            LayerSpec::SoftmaxLoss => "loss".to_string(),
        })
        .collect()
}

fn shape_cell(shape: &[usize]) -> String {
    match shape {
        [h, w, c] => format!("{}x{}x{}", c, h, w),
        [n] => format!("{}", n),
        other => format!("{:?}", other),
    }
}

/// Render the architecture as a fixed-width table
/// (layer | output size | kernel, pad, stride | trainable params).
pub fn render_table(spec: &NetworkSpec) -> Result<String> {
    let shapes = infer_shapes(spec)?;
    let counts = count_params(spec)?;
    let names = layer_names(spec);
    let mut rows = vec![(
        "layer".to_string(),
        "output size".to_string(),
        "kernel, pad, stride".to_string(),
        "train. param.".to_string(),
    )];
    for i in 0..spec.layers.len() {
        let kps = match spec.layers[i] {
            LayerSpec::Conv { kernel, pad, stride, .. }
            | LayerSpec::MaxPool { kernel, pad, stride } => {
                format!("{}, {}, {}", kernel, pad, stride)
            }
            _ => String::new(),
        };
        let params = if counts.per_layer[i] == 0 {
            "0".to_string()
        } else {
            group_thousands(counts.per_layer[i])
        };
        rows.push((names[i].clone(), shape_cell(&shapes[i]), kps, params));
    }
    rows.push((
        "total".to_string(),
        String::new(),
        String::new(),
        group_thousands(counts.total),
    ));

    let width = |f: fn(&(String, String, String, String)) -> usize| {
        rows.iter().map(f).max().unwrap_or(0)
    };
    let (w0, w1, w2, w3) = (
        width(|r| r.0.len()),
        width(|r| r.1.len()),
        width(|r| r.2.len()),
        width(|r| r.3.len()),
    );
    let mut out = String::new();
    for (i, (a, b, c, d)) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{:<w0$} | {:<w1$} | {:<w2$} | {:>w3$}\n",
            a, b, c, d,
            w0 = w0, w1 = w1, w2 = w2, w3 = w3
        ));
        if i == 0 {
            out.push_str(&format!(
                "{:-<w0$}-+-{:-<w1$}-+-{:-<w2$}-+-{:-<w3$}\n",
                "", "", "", "",
                w0 = w0, w1 = w1, w2 = w2, w3 = w3
            ));
        }
    }
    Ok(out)
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
