//! The release checklist: ten numbered criteria covering architecture
//! fidelity, gradient correctness, slicing and fusion semantics, the
//! training schedule, and a full synthetic three-plane experiment with a
//! determinism rerun. One line is printed per criterion; the test fails if
//! any criterion fails.
//!
//! Criteria 1–7 are fast oracles. Criterion 8 records that full-benchmark
//! accuracies cannot be reproduced without the external video datasets and
//! pretrained weights, and is substituted by criterion 9: a three-class
//! synthetic experiment (static / flicker / drift) in which single video
//! frames carry no class signal, so the spatial plane is stuck near chance
//! while the two temporal planes and the fused ensemble must excel.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use dtcnn::arch::{
    build_tcnn3, build_tcnn50, count_params, infer_shapes, layer_names, ArchKind,
};
use dtcnn::config::RunConfig;
use dtcnn::data::splits::Protocol;
use dtcnn::data::synth::SynthKind;
use dtcnn::data::{generate_dataset, read_image, write_image};
use dtcnn::ensemble::{
    self, evaluate, global_score, plane_score, predict_label, predict_sequence, FusionRule,
    PlaneSubset, ScoreVector,
};
use dtcnn::nn::{
    conv_backward, conv_forward, energy_backward, energy_forward, fc_backward, fc_forward,
    lrn_backward, lrn_forward, maxpool_backward, maxpool_forward, relu, relu_backward,
    softmax_loss, LrnParams, TrainConfig,
};
use dtcnn::pipeline::{self, AblationRow};
use dtcnn::slicer::{extract_plane, raw_slice, slice_indices, PlaneId, SliceConfig, VideoVolume};
use dtcnn::tensor::{Rng, Tensor};

type Check = Result<(), String>;

fn fail(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

fn expect_eq<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Check {
    if got == want {
        Ok(())
    } else {
        fail(format!("{}: got {:?}, want {:?}", what, got, want))
    }
}

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape).unwrap();
    t.fill_gaussian(&mut Rng::new(seed), 0.0, 1.0);
    t
}

// ---------------------------------------------------------------------------
// criterion 1: trainable-parameter counts of the two reference networks

fn named_counts(spec: &dtcnn::arch::NetworkSpec) -> Result<BTreeMap<String, usize>, String> {
    let counts = count_params(spec).map_err(|e| e.to_string())?;
    Ok(layer_names(spec)
        .into_iter()
        .zip(counts.per_layer)
        .collect())
}

fn criterion_params() -> Check {
    let spec = build_tcnn3(3, 1000).map_err(|e| e.to_string())?;
    let by_name = named_counts(&spec)?;
    for (name, want) in [
        ("C1", 34_944usize),
        ("C2", 614_656),
        ("C3", 885_120),
        ("FC1", 1_576_960),
        ("FC2", 16_781_312),
    ] {
        expect_eq(&format!("large net {}", name), by_name[name], want)?;
    }
    for (name, &n) in &by_name {
        if !name.starts_with('C') && !name.starts_with("FC") && n != 0 {
            return fail(format!("large net {} should have no parameters, has {}", name, n));
        }
    }

    let spec = build_tcnn50(1, 10).map_err(|e| e.to_string())?;
    let by_name = named_counts(&spec)?;
    for (name, want) in [
        ("C1", 2_496usize),
        ("C2", 221_440),
        ("C3", 885_120),
        ("FC1", 1_155_000),
        ("FC2", 9_003_000),
    ] {
        expect_eq(&format!("small net {}", name), by_name[name], want)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// criterion 2: layer output shapes of the two reference networks

fn named_shapes(spec: &dtcnn::arch::NetworkSpec) -> Result<BTreeMap<String, Vec<usize>>, String> {
    let shapes = infer_shapes(spec).map_err(|e| e.to_string())?;
    Ok(layer_names(spec).into_iter().zip(shapes).collect())
}

fn criterion_shapes() -> Check {
    let spec = build_tcnn3(3, 1000).map_err(|e| e.to_string())?;
    let by_name = named_shapes(&spec)?;
    for (name, want) in [
        ("crop", vec![227, 227, 3]),
        ("C1", vec![55, 55, 96]),
        ("P1", vec![27, 27, 96]),
        ("C2", vec![27, 27, 256]),
        ("P2", vec![13, 13, 256]),
        ("C3", vec![13, 13, 384]),
        ("energy", vec![384]),
        ("FC1", vec![4096]),
        ("FC2", vec![4096]),
        ("FC3", vec![1000]),
    ] {
        expect_eq(&format!("large net {}", name), by_name[name].clone(), want)?;
    }

    let spec = build_tcnn50(1, 10).map_err(|e| e.to_string())?;
    let by_name = named_shapes(&spec)?;
    for (name, want) in [
        ("crop", vec![48, 48, 1]),
        ("C1", vec![48, 48, 96]),
        ("P1", vec![24, 24, 96]),
        ("C2", vec![24, 24, 256]),
        ("P2", vec![12, 12, 256]),
        ("C3", vec![12, 12, 384]),
        ("energy", vec![384]),
        ("FC1", vec![3000]),
        ("FC2", vec![3000]),
        ("FC3", vec![10]),
    ] {
        expect_eq(&format!("small net {}", name), by_name[name].clone(), want)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// criterion 3: finite-difference gradient checks, every layer kind

const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central-difference check of `analytic` against `loss` probed at each
/// element of `x`; `loss` must treat `x` as its only variable.
fn fd_against(
    what: &str,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> Result<f64, String>,
) -> Check {
    for k in 0..x.len() {
        let mut up = x.clone();
        up.data_mut()[k] += FD_EPS;
        let mut down = x.clone();
        down.data_mut()[k] -= FD_EPS;
        let numeric = (loss(&up)? - loss(&down)?) / (2.0 * FD_EPS);
        let a = analytic.data()[k];
        let denom = a.abs().max(numeric.abs());
        if denom > 1e-7 {
            let rel = (a - numeric).abs() / denom;
            if rel >= FD_TOL {
                return fail(format!(
                    "{} element {}: analytic {} vs numeric {} (rel {:.2e})",
                    what, k, a, numeric, rel
                ));
            }
        }
    }
    Ok(())
}

fn criterion_gradients() -> Check {
    // conv: dx, dw, db on five (shape, pad, stride) cases.
    for (i, &(h, w, ci, co, k, pad, stride)) in [
        (5usize, 5usize, 2usize, 3usize, 3usize, 1usize, 1usize),
        (6, 4, 1, 2, 3, 0, 1),
        (7, 7, 2, 2, 3, 1, 2),
        (4, 6, 3, 1, 1, 0, 1),
        (8, 5, 1, 4, 5, 2, 2),
    ]
    .iter()
    .enumerate()
    {
        let seed = 1000 + i as u64 * 10;
        let x = randn(&[h, w, ci], seed);
        let wt = randn(&[k, k, ci, co], seed + 1);
        let b = randn(&[co], seed + 2);
        let y = conv_forward(&x, &wt, &b, pad, stride).map_err(|e| e.to_string())?;
        let cvec = randn(y.shape(), seed + 3);
        let (dx, dw, db) = conv_backward(&x, &wt, &cvec, pad, stride).map_err(|e| e.to_string())?;
        fd_against(&format!("conv case {} dx", i), &x, &dx, |p| {
            Ok(dot(&conv_forward(p, &wt, &b, pad, stride).map_err(|e| e.to_string())?, &cvec))
        })?;
        fd_against(&format!("conv case {} dw", i), &wt, &dw, |p| {
            Ok(dot(&conv_forward(&x, p, &b, pad, stride).map_err(|e| e.to_string())?, &cvec))
        })?;
        fd_against(&format!("conv case {} db", i), &b, &db, |p| {
            Ok(dot(&conv_forward(&x, &wt, p, pad, stride).map_err(|e| e.to_string())?, &cvec))
        })?;
    }

    // fully connected: dx, dw, db.
    for (i, &(n_in, n_out)) in [(7usize, 4usize), (1, 5), (9, 1), (4, 4), (12, 3)]
        .iter()
        .enumerate()
    {
        let seed = 2000 + i as u64 * 10;
        let x = randn(&[n_in], seed);
        let wt = randn(&[n_in, n_out], seed + 1);
        let b = randn(&[n_out], seed + 2);
        let cvec = randn(&[n_out], seed + 3);
        let (dx, dw, db) = fc_backward(&x, &wt, &cvec).map_err(|e| e.to_string())?;
        fd_against(&format!("fc case {} dx", i), &x, &dx, |p| {
            Ok(dot(&fc_forward(p, &wt, &b).map_err(|e| e.to_string())?, &cvec))
        })?;
        fd_against(&format!("fc case {} dw", i), &wt, &dw, |p| {
            Ok(dot(&fc_forward(&x, p, &b).map_err(|e| e.to_string())?, &cvec))
        })?;
        fd_against(&format!("fc case {} db", i), &b, &db, |p| {
            Ok(dot(&fc_forward(&x, &wt, p).map_err(|e| e.to_string())?, &cvec))
        })?;
    }

    // relu: inputs pushed away from the kink at zero.
    for (i, shape) in [[3usize, 4, 2], [1, 1, 6], [5, 5, 1], [2, 3, 3], [4, 2, 2]]
        .iter()
        .enumerate()
    {
        let seed = 3000 + i as u64 * 10;
        let mut x = randn(shape, seed);
        for v in x.data_mut() {
            *v += 0.2 * v.signum();
        }
        let cvec = randn(shape, seed + 1);
        let dx = relu_backward(&cvec, &x);
        fd_against(&format!("relu case {}", i), &x, &dx, |p| Ok(dot(&relu(p), &cvec)))?;
    }

    // maxpool: distinct, well-separated values keep the argmax stable.
    for (i, &(h, w, c, k, s)) in [
        (6usize, 6usize, 2usize, 2usize, 2usize),
        (7, 7, 1, 3, 2),
        (5, 4, 3, 2, 1),
        (8, 8, 2, 3, 3),
        (4, 6, 1, 2, 2),
    ]
    .iter()
    .enumerate()
    {
        let mut vals: Vec<f64> = (0..h * w * c).map(|j| j as f64 * 0.1).collect();
        Rng::new(4000 + i as u64).shuffle(&mut vals);
        let x = Tensor::new(&[h, w, c], vals).map_err(|e| e.to_string())?;
        let (y, argmax) = maxpool_forward(&x, k, s).map_err(|e| e.to_string())?;
        let cvec = randn(y.shape(), 4100 + i as u64);
        let dx = maxpool_backward(&cvec, &argmax, x.shape()).map_err(|e| e.to_string())?;
        fd_against(&format!("maxpool case {}", i), &x, &dx, |p| {
            Ok(dot(&maxpool_forward(p, k, s).map_err(|e| e.to_string())?.0, &cvec))
        })?;
    }

    // lrn and energy: smooth everywhere.
    let lrn_p = LrnParams::default();
    for (i, shape) in [[3usize, 3, 7], [2, 2, 5], [1, 4, 6], [5, 1, 5], [2, 3, 9]]
        .iter()
        .enumerate()
    {
        let seed = 5000 + i as u64 * 10;
        let x = randn(shape, seed);
        let cvec = randn(shape, seed + 1);
        let (_, scale) = lrn_forward(&x, &lrn_p).map_err(|e| e.to_string())?;
        let dx = lrn_backward(&cvec, &x, &scale, &lrn_p).map_err(|e| e.to_string())?;
        fd_against(&format!("lrn case {}", i), &x, &dx, |p| {
            Ok(dot(&lrn_forward(p, &lrn_p).map_err(|e| e.to_string())?.0, &cvec))
        })?;
    }
    for (i, shape) in [[3usize, 4, 2], [1, 1, 4], [5, 2, 3], [2, 6, 1], [4, 4, 5]]
        .iter()
        .enumerate()
    {
        let seed = 6000 + i as u64 * 10;
        let x = randn(shape, seed);
        let y = energy_forward(&x).map_err(|e| e.to_string())?;
        let cvec = randn(y.shape(), seed + 1);
        let dx = energy_backward(&cvec, x.shape()).map_err(|e| e.to_string())?;
        fd_against(&format!("energy case {}", i), &x, &dx, |p| {
            Ok(dot(&energy_forward(p).map_err(|e| e.to_string())?, &cvec))
        })?;
    }

    // softmax loss: the loss itself is the probe target.
    for (i, &(n, label)) in [(2usize, 0usize), (3, 2), (5, 1), (7, 6), (4, 3)]
        .iter()
        .enumerate()
    {
        let x = randn(&[n], 7000 + i as u64);
        let (_, dl) = softmax_loss(&x, label).map_err(|e| e.to_string())?;
        fd_against(&format!("softmax-loss case {}", i), &x, &dl, |p| {
            Ok(softmax_loss(p, label).map_err(|e| e.to_string())?.0)
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// criterion 4: the energy layer is exactly full-window average pooling

fn criterion_energy_identity() -> Check {
    for case in 0..50u64 {
        let h = 1 + (case as usize % 7);
        let w = 1 + (case as usize * 3 % 9);
        let c = 1 + (case as usize * 7 % 5);
        let x = randn(&[h, w, c], 8000 + case);
        let y = energy_forward(&x).map_err(|e| e.to_string())?;
        // Independent average pooling with a single h x w window.
        let inv = 1.0 / (h * w) as f64;
        for ch in 0..c {
            let mut acc = 0.0f64;
            for pos in 0..h * w {
                acc += x.data()[pos * c + ch];
            }
            if y.data()[ch] != acc * inv {
                return fail(format!(
                    "f64 case {} channel {}: {} vs pooled {}",
                    case, ch, y.data()[ch], acc * inv
                ));
            }
        }

        let xf = x.cast::<f32>();
        let yf = energy_forward(&xf).map_err(|e| e.to_string())?;
        let invf = (1.0 / (h * w) as f64) as f32;
        for ch in 0..c {
            let mut acc = 0.0f32;
            for pos in 0..h * w {
                acc += xf.data()[pos * c + ch];
            }
            if yf.data()[ch] != acc * invf {
                return fail(format!("f32 case {} channel {} mismatch", case, ch));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// criterion 5: slice extraction against a naive reference; pinned positions

fn naive_slice(v: &VideoVolume, plane: PlaneId, pos: usize) -> Vec<f32> {
    let (h, w, d, c) = (v.height(), v.width(), v.frames(), v.channels());
    let mut out = Vec::new();
    match plane {
        // A time slice: the full frame at time pos.
        PlaneId::Xy => {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        out.push(v.at(y, x, pos, ch));
                    }
                }
            }
        }
        // A row slice: row pos over time; time runs along slice rows.
        PlaneId::Xt => {
            for t in 0..d {
                for x in 0..w {
                    for ch in 0..c {
                        out.push(v.at(pos, x, t, ch));
                    }
                }
            }
        }
        // A column slice: column pos over time.
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

fn criterion_slicing() -> Check {
    let mut dims = Rng::new(90);
    for case in 0..200u64 {
        let h = 1 + dims.next_below(16);
        let w = 1 + dims.next_below(16);
        let d = 1 + dims.next_below(16);
        let c = if dims.next_below(2) == 0 { 1 } else { 3 };
        let vol = {
            let mut t = Tensor::<f32>::zeros(&[h, w, d, c]).map_err(|e| e.to_string())?;
            t.fill_gaussian(&mut Rng::new(9000 + case), 0.0, 1.0);
            VideoVolume::new(t).map_err(|e| e.to_string())?
        };
        for plane in PlaneId::ALL {
            let extent = match plane {
                PlaneId::Xy => d,
                PlaneId::Xt => h,
                PlaneId::Yt => w,
            };
            let m = 1 + dims.next_below(extent);
            for &pos in &slice_indices(extent, m).map_err(|e| e.to_string())? {
                let got = raw_slice(&vol, plane, pos);
                if got.data() != naive_slice(&vol, plane, pos).as_slice() {
                    return fail(format!(
                        "case {} plane {} pos {}: raw slice differs from reference",
                        case, plane, pos
                    ));
                }
            }
        }
    }

    // For a cubic volume every slice is already square, so the full stack
    // extractor (which resizes to the configured side) must be bit-exact
    // against the same reference.
    let side = 9;
    let vol = {
        let mut t = Tensor::<f32>::zeros(&[side, side, side, 3]).map_err(|e| e.to_string())?;
        t.fill_gaussian(&mut Rng::new(77), 0.0, 1.0);
        VideoVolume::new(t).map_err(|e| e.to_string())?
    };
    let m = 4;
    let cfg = SliceConfig::new(m, side).map_err(|e| e.to_string())?;
    for plane in PlaneId::ALL {
        let stack = extract_plane(&vol, plane, &cfg).map_err(|e| e.to_string())?;
        for (i, &pos) in slice_indices(side, m).map_err(|e| e.to_string())?.iter().enumerate() {
            let want = naive_slice(&vol, plane, pos);
            for y in 0..side {
                for x in 0..side {
                    for ch in 0..3 {
                        let got = stack.get(&[y, x, i, ch]);
                        if got != want[(y * side + x) * 3 + ch] {
                            return fail(format!(
                                "stack {} slice {} ({}, {}, {}): {} vs {}",
                                plane, i, y, x, ch, got,
                                want[(y * side + x) * 3 + ch]
                            ));
                        }
                    }
                }
            }
        }
    }

    expect_eq(
        "positions for extent 250, 10 slices",
        slice_indices(250, 10).map_err(|e| e.to_string())?,
        vec![0, 28, 55, 83, 111, 138, 166, 194, 221, 249],
    )
}

// ---------------------------------------------------------------------------
// criterion 6: fusion properties on randomized instances

fn random_scores(
    rng: &mut Rng,
    planes: &[PlaneId],
    slices: usize,
    classes: usize,
) -> Vec<ScoreVector> {
    let mut out = Vec::new();
    for &plane in planes {
        for idx in 0..slices {
            out.push(ScoreVector {
                sequence_id: "s".into(),
                plane,
                slice_index: idx,
                values: (0..classes).map(|_| rng.next_f64() * 10.0 - 5.0).collect(),
            });
        }
    }
    out
}

fn criterion_fusion() -> Check {
    let mut rng = Rng::new(600);
    for case in 0..1000 {
        let classes = 2 + rng.next_below(5);
        let n_planes = 1 + rng.next_below(3);
        let planes = &PlaneId::ALL[..n_planes];
        let slices = 1 + rng.next_below(5);
        let scores = random_scores(&mut rng, planes, slices, classes);

        // Permutation invariance: plane totals ignore slice order bit-exactly.
        let per_plane: BTreeMap<PlaneId, Vec<f64>> = planes
            .iter()
            .map(|&p| {
                let of_p: Vec<ScoreVector> =
                    scores.iter().filter(|s| s.plane == p).cloned().collect();
                Ok((p, plane_score(&of_p).map_err(|e| e.to_string())?))
            })
            .collect::<Result<_, String>>()?;
        for &p in planes {
            let mut shuffled: Vec<ScoreVector> =
                scores.iter().filter(|s| s.plane == p).cloned().collect();
            for _ in 0..3 {
                let swap = (rng.next_below(shuffled.len()), rng.next_below(shuffled.len()));
                shuffled.swap(swap.0, swap.1);
            }
            if plane_score(&shuffled).map_err(|e| e.to_string())? != per_plane[&p] {
                return fail(format!("case {}: plane total changed under permutation", case));
            }
        }

        let subset = PlaneSubset::new(planes).map_err(|e| e.to_string())?;
        let total = global_score(&per_plane, &subset).map_err(|e| e.to_string())?;

        // A plane contributing all-zero vectors leaves the total unchanged.
        if n_planes < 3 {
            let extra = PlaneId::ALL[n_planes];
            let mut padded = per_plane.clone();
            padded.insert(extra, vec![0.0; classes]);
            let wider = PlaneSubset::new(&PlaneId::ALL[..n_planes + 1])
                .map_err(|e| e.to_string())?;
            let padded_total = global_score(&padded, &wider).map_err(|e| e.to_string())?;
            if padded_total != total {
                return fail(format!("case {}: zero plane changed the total", case));
            }
        }

        // Shifting every class score of every slice by one constant cannot
        // change the winner.
        let shift = rng.next_f64() * 20.0 - 10.0;
        let shifted: Vec<ScoreVector> = scores
            .iter()
            .map(|s| ScoreVector {
                values: s.values.iter().map(|v| v + shift).collect(),
                ..s.clone()
            })
            .collect();
        let baseline = predict_sequence(&scores, &subset, FusionRule::SumRaw)
            .map_err(|e| e.to_string())?;
        let after = predict_sequence(&shifted, &subset, FusionRule::SumRaw)
            .map_err(|e| e.to_string())?;
        if baseline != after {
            return fail(format!("case {}: constant shift moved the argmax", case));
        }
        if predict_label(&total) != baseline {
            return fail(format!("case {}: fused prediction disagrees with argmax", case));
        }
    }

    // Raw sums and softmax-normalized sums can disagree: one overwhelmingly
    // confident slice outvotes two mildly confident ones only on the raw
    // path, because softmax caps each slice's weight at one.
    let subset = PlaneSubset::new(&[PlaneId::Xy]).map_err(|e| e.to_string())?;
    let mk = |idx: usize, values: Vec<f64>| ScoreVector {
        sequence_id: "s".into(),
        plane: PlaneId::Xy,
        slice_index: idx,
        values,
    };
    let slices = vec![
        mk(0, vec![10.0, 0.0]),
        mk(1, vec![0.0, 2.0]),
        mk(2, vec![0.0, 2.0]),
    ];
    let by_raw =
        predict_sequence(&slices, &subset, FusionRule::SumRaw).map_err(|e| e.to_string())?;
    let by_softmax =
        predict_sequence(&slices, &subset, FusionRule::SumSoftmax).map_err(|e| e.to_string())?;
    expect_eq("raw-sum winner", by_raw, 0)?;
    expect_eq("softmax-sum winner", by_softmax, 1)
}

// ---------------------------------------------------------------------------
// criterion 7: the two stock learning-rate schedules

fn criterion_lr_schedule() -> Check {
    let cfg = TrainConfig::preset_dyntex_pp();
    expect_eq("stock schedule steps", cfg.steps.clone(), vec![5000, 20000])?;
    expect_eq("stock batch", cfg.batch_size, 64)?;
    expect_eq("stock iterations", cfg.num_iters, 25000)?;
    for (iter, want) in [
        (0usize, 0.01),
        (4999, 0.01),
        (5000, 1e-4),
        (19999, 1e-4),
        (20000, 1e-6),
        (24999, 1e-6),
    ] {
        let got = cfg.lr_at(iter);
        if (got - want).abs() > want * 1e-9 {
            return fail(format!("stock lr at {}: {} vs {}", iter, got, want));
        }
    }
    if cfg.lr_at(0) != 0.01 || cfg.lr_at(4999) != 0.01 {
        return fail("lr before the first step must equal the base lr exactly".to_string());
    }

    let cfg = TrainConfig::preset_dyntex();
    expect_eq("short schedule steps", cfg.steps.clone(), vec![1500])?;
    for (iter, want) in [(0usize, 1e-4), (1499, 1e-4), (1500, 1e-5), (1999, 1e-5)] {
        let got = cfg.lr_at(iter);
        if (got - want).abs() > want * 1e-9 {
            return fail(format!("short lr at {}: {} vs {}", iter, got, want));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// criteria 9 + 10: the synthetic three-plane experiment, run twice

struct ExperimentRun {
    rows: Vec<AblationRow>,
    /// static-vs-flicker accuracy per single plane.
    pair: BTreeMap<PlaneId, f64>,
    final_loss: BTreeMap<PlaneId, f64>,
    /// Raw bytes of every report artifact, keyed by file name.
    reports: BTreeMap<String, Vec<u8>>,
}

fn experiment_config(root: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.root = root.to_path_buf();
    cfg.out_dir = out.to_path_buf();
    cfg.protocol = Protocol::RandomTrials { trials: 1, train_fraction: 0.5 };
    cfg.arch = ArchKind::Tcnn50Micro;
    cfg.seed = 42;
    cfg.init_std = 0.1;
    cfg.train.lr = 0.05;
    cfg.train.gamma = 0.1;
    cfg.train.batch_size = 32;
    cfg.train.num_iters = 600;
    cfg.train.steps = vec![450];
    cfg
}

fn run_experiment(dir: &Path) -> Result<ExperimentRun, String> {
    let root = dir.join("data");
    let out = dir.join("out");
    generate_dataset(
        &root,
        &[SynthKind::StaticTexture, SynthKind::Flicker, SynthKind::DriftX],
        40,
        48,
        48,
        48,
        42,
    )
    .map_err(|e| e.to_string())?;
    let cfg = experiment_config(&root, &out);
    cfg.validate().map_err(|e| e.to_string())?;

    pipeline::run_slice(&cfg).map_err(|e| e.to_string())?;
    let mut final_loss = BTreeMap::new();
    for plane in PlaneId::ALL {
        let summary = pipeline::run_train(&cfg, plane, 0).map_err(|e| e.to_string())?;
        final_loss.insert(plane, summary.final_loss.unwrap_or(f64::NAN));
    }
    let rows = pipeline::run_ablate(&cfg, 0, false).map_err(|e| e.to_string())?;
    pipeline::run_eval(&cfg, 0, true).map_err(|e| e.to_string())?;

    // Accuracy restricted to the two classes that share identical frame
    // statistics, per plane on its own.
    let manifest = pipeline::load_or_scan_manifest(&cfg).map_err(|e| e.to_string())?;
    let plan = pipeline::load_or_make_splits(&cfg, &manifest).map_err(|e| e.to_string())?;
    let pair_classes: Vec<usize> = ["flicker", "static"]
        .iter()
        .map(|want| {
            manifest
                .classes
                .iter()
                .position(|c| c == want)
                .ok_or_else(|| format!("class {} missing from the dataset", want))
        })
        .collect::<Result<_, String>>()?;
    let pair_truth: BTreeMap<String, usize> = plan.trials[0]
        .test
        .iter()
        .map(|&i| &manifest.sequences[i])
        .filter(|e| pair_classes.contains(&e.class_index))
        .map(|e| (e.id.clone(), e.class_index))
        .collect();
    let mut pair = BTreeMap::new();
    for plane in PlaneId::ALL {
        let scores =
            ensemble::read_scores(&pipeline::scores_path(&cfg, plane)).map_err(|e| e.to_string())?;
        let filtered: Vec<ScoreVector> = scores
            .into_iter()
            .filter(|s| pair_truth.contains_key(&s.sequence_id))
            .collect();
        let subset = PlaneSubset::new(&[plane]).map_err(|e| e.to_string())?;
        let report = evaluate(
            &filtered,
            &pair_truth,
            manifest.n_classes(),
            &subset,
            FusionRule::SumRaw,
        )
        .map_err(|e| e.to_string())?;
        pair.insert(plane, report.accuracy);
    }

    let mut reports = BTreeMap::new();
    for name in [
        "report.txt",
        "report.tsv",
        "ablation.txt",
        "ablation.tsv",
        "scores_xy.tsv",
        "scores_xt.tsv",
        "scores_yt.tsv",
    ] {
        let bytes = std::fs::read(out.join(name)).map_err(|e| format!("{}: {}", name, e))?;
        reports.insert(name.to_string(), bytes);
    }
    Ok(ExperimentRun { rows, pair, final_loss, reports })
}

fn criterion_experiment(run: &ExperimentRun) -> Check {
    let by_subset: BTreeMap<String, f64> = run
        .rows
        .iter()
        .map(|r| (r.subset.to_string(), r.accuracy))
        .collect();
    if run.rows.len() != 7 {
        return fail(format!("expected 7 ablation rows, got {}", run.rows.len()));
    }
    let fused = by_subset["xy+xt+yt"];
    if fused < 0.90 {
        return fail(format!("fused accuracy {:.4} below 0.90", fused));
    }
    for plane in [PlaneId::Xt, PlaneId::Yt] {
        let margin = run.pair[&plane] - run.pair[&PlaneId::Xy];
        if margin < 0.20 {
            return fail(format!(
                "static-vs-flicker margin of {} over xy is {:.4} (xy {:.4}, {} {:.4})",
                plane, margin, run.pair[&PlaneId::Xy], plane, run.pair[&plane]
            ));
        }
    }
    let max_single = ["xy", "xt", "yt"]
        .iter()
        .map(|p| by_subset[*p])
        .fold(f64::MIN, f64::max);
    if fused < max_single - 0.02 {
        return fail(format!(
            "fused {:.4} trails the best single plane {:.4} by more than 0.02",
            fused, max_single
        ));
    }
    // Training converges on the separable planes: final minibatch loss is
    // far below the 3-class uniform loss ln(3) ~ 1.0986.
    let bound = (3.0f64).ln() / 4.0;
    for plane in [PlaneId::Xt, PlaneId::Yt] {
        if !(run.final_loss[&plane] < bound) {
            return fail(format!(
                "plane {} final loss {:.4} not below {:.4}",
                plane, run.final_loss[&plane], bound
            ));
        }
    }
    Ok(())
}

fn criterion_determinism(a: &ExperimentRun, b: &ExperimentRun) -> Check {
    for (name, bytes) in &a.reports {
        match b.reports.get(name) {
            Some(other) if other == bytes => {}
            Some(_) => return fail(format!("{} differs between identical runs", name)),
            None => return fail(format!("{} missing from the second run", name)),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_checklist() {
    fn check(n: u32, label: &str, result: Check, failures: &mut Vec<String>) {
        match result {
            Ok(()) => println!("criterion {:>2}: PASS — {}", n, label),
            Err(why) => {
                println!("criterion {:>2}: FAIL — {} — {}", n, label, why);
                failures.push(format!("criterion {}: {}", n, why));
            }
        }
    }
    let mut failures: Vec<String> = Vec::new();

    check(1, "trainable-parameter counts of both reference nets", criterion_params(), &mut failures);
    check(2, "layer output shapes of both reference nets", criterion_shapes(), &mut failures);
    check(3, "finite-difference gradients, every layer kind", criterion_gradients(), &mut failures);
    check(4, "energy layer equals full-window average pooling", criterion_energy_identity(), &mut failures);
    check(5, "slice extraction vs naive reference; pinned positions", criterion_slicing(), &mut failures);
    check(6, "fusion properties on 1000 randomized instances", criterion_fusion(), &mut failures);
    check(7, "stock learning-rate schedules", criterion_lr_schedule(), &mut failures);
    println!(
        "criterion  8: SKIP — full-benchmark accuracy needs external video \
         datasets and pretrained weights; substituted by criterion 9"
    );

    let budget = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let run_a = run_experiment(dir_a.path());
    let dir_b = tempfile::tempdir().unwrap();
    let run_b = run_experiment(dir_b.path());
    let elapsed = budget.elapsed();

    match (&run_a, &run_b) {
        (Ok(a), Ok(b)) => {
            let mut nine = criterion_experiment(a);
            if nine.is_ok() && elapsed.as_secs() >= 1800 {
                nine = fail(format!("experiment took {:?}, budget is 30 min", elapsed));
            }
            check(9, "synthetic three-plane experiment", nine, &mut failures);
            check(10, "identical reports on an identical rerun", criterion_determinism(a, b), &mut failures);
            println!(
                "experiment: fused {:.4}, planes xy {:.4} / xt {:.4} / yt {:.4}, \
                 pair margins xt {:+.4} yt {:+.4}, two runs in {:.1?}",
                a.rows[6].accuracy,
                a.rows[0].accuracy,
                a.rows[1].accuracy,
                a.rows[2].accuracy,
                a.pair[&PlaneId::Xt] - a.pair[&PlaneId::Xy],
                a.pair[&PlaneId::Yt] - a.pair[&PlaneId::Xy],
                elapsed
            );
        }
        _ => {
            let why = run_a
                .as_ref()
                .err()
                .or(run_b.as_ref().err())
                .cloned()
                .unwrap_or_default();
            check(9, "synthetic three-plane experiment", fail(why.clone()), &mut failures);
            check(10, "identical reports on an identical rerun", fail(why), &mut failures);
        }
    }

    assert!(
        failures.is_empty(),
        "{} criterion(s) failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

// Unused import guard: write_image/read_image are exercised indirectly by
// the experiment, but keep the compiler honest about the re-export.
#[test]
fn frame_io_round_trip_from_the_public_api() {
    let dir = tempfile::tempdir().unwrap();
    let img = dtcnn::data::Image::new(3, 2, 1, vec![0, 255, 7, 8, 9, 10]).unwrap();
    let path = dir.path().join("f.pgm");
    write_image(&path, &img).unwrap();
    assert_eq!(read_image(&path).unwrap(), img);
}
