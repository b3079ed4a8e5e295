//! Network assembly and execution: parameter initialization, the training
//! forward/backward pass, the inference path, and the deterministic
//! minibatch SGD step.

use rayon::prelude::*;

use crate::arch::{layer_names, validate_spec, LayerSpec, NetworkSpec};
use crate::nn::layers::{
    center_crop_plan, conv_backward, conv_forward, crop_forward, dropout_backward,
    dropout_forward, energy_backward, energy_forward, fc_backward, fc_forward, lrn_backward,
    lrn_forward, maxpool_backward, maxpool_forward, random_crop_plan, relu, relu_backward,
    softmax_loss, CropPlan, LrnParams,
};
use crate::nn::sgd::{sgd_update, TrainConfig};
use crate::tensor::{Rng, Scalar, Tensor};
use crate::{Error, Result};

/// Weights, biases and their momentum buffers for one learned layer.
#[derive(Debug, Clone)]
pub struct LayerParams<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub v_weights: Tensor<T>,
    pub v_bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn new(weights: Tensor<T>, bias: Tensor<T>) -> LayerParams<T> {
        let v_weights = Tensor::zeros(weights.shape()).expect("valid shape");
        let v_bias = Tensor::zeros(bias.shape()).expect("valid shape");
        LayerParams { weights, bias, v_weights, v_bias }
    }
}

/// Per-layer (dW, db) pairs aligned with the network's layer list.
#[derive(Debug, Clone)]
pub struct GradSet<T: Scalar> {
    pub per_layer: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> GradSet<T> {
    pub fn add_assign(&mut self, other: &GradSet<T>) {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a.as_mut(), b.as_ref()) {
                for (x, &y) in aw.data_mut().iter_mut().zip(bw.data()) {
                    *x = *x + y;
                }
                for (x, &y) in ab.data_mut().iter_mut().zip(bb.data()) {
                    *x = *x + y;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        let s = T::from_f64(s);
        for entry in self.per_layer.iter_mut().flatten() {
            for v in entry.0.data_mut() {
                *v = *v * s;
            }
            for v in entry.1.data_mut() {
                *v = *v * s;
            }
        }
    }
}

/// Per-layer state saved during the forward pass for the backward pass.
enum Cache<T: Scalar> {
    Crop { plan: CropPlan, in_shape: Vec<usize> },
    Input(Tensor<T>),
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Lrn { x: Tensor<T>, scale: Tensor<T> },
    Shape(Vec<usize>),
    Mask(Vec<T>),
    Dlogits(Tensor<T>),
}

/// An executable network: a spec plus its learned parameters.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    pub params: Vec<Option<LayerParams<T>>>,
    pub dropout_rate: f64,
    pub lrn: LrnParams,
    /// Enables the horizontal-mirror half of training augmentation.
    pub augment_mirror: bool,
}

impl<T: Scalar> Network<T> {
    /// Initialize parameters: weights ~ Gaussian(0, init_std), biases zero.
    /// Weight draws consume the rng in layer order, so a seed pins the full
    /// initialization.
    pub fn init(spec: NetworkSpec, rng: &mut Rng, init_std: f64) -> Result<Network<T>> {
        let shapes = validate_spec(&spec)?;
        let mut params = Vec::with_capacity(spec.layers.len());
        let mut in_c = spec.input_channels;
        let mut in_vec = None::<usize>;
        for (layer, shape) in spec.layers.iter().zip(&shapes) {
            let p = match *layer {
                LayerSpec::Conv { kernel, out_channels, .. } => {
                    let mut w = Tensor::zeros(&[kernel, kernel, in_c, out_channels])?;
                    w.fill_gaussian(rng, T::zero(), T::from_f64(init_std));
                    Some(LayerParams::new(w, Tensor::zeros(&[out_channels])?))
                }
                LayerSpec::FullyConnected { out_features } => {
                    let n_in = in_vec.ok_or_else(|| {
                        Error::Shape("fully connected layer needs a vector input".into())
                    })?;
                    let mut w = Tensor::zeros(&[n_in, out_features])?;
                    w.fill_gaussian(rng, T::zero(), T::from_f64(init_std));
                    Some(LayerParams::new(w, Tensor::zeros(&[out_features])?))
                }
                _ => None,
            };
            params.push(p);
            if shape.len() == 1 {
                in_vec = Some(shape[0]);
            } else {
                in_c = shape[2];
            }
        }
        Ok(Network {
            spec,
            shapes,
            params,
            dropout_rate: 0.5,
            lrn: LrnParams::default(),
            augment_mirror: true,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Learned layers as (name, index) pairs, e.g. ("C1", 1), ("FC3", 18).
    pub fn param_layers(&self) -> Vec<(String, usize)> {
        let names = layer_names(&self.spec);
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|_| (names[i].clone(), i)))
            .collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "network input wants [h, w, {}], got {:?}",
                self.spec.input_channels, s
            )));
        }
        Ok(())
    }

    /// Training-mode forward and backward in one pass. The rng drives the
    /// crop plan and dropout masks; seeding it per (iteration, sample) makes
    /// the whole step reproducible. Returns the sample loss and per-layer
    /// parameter gradients.
    pub fn forward_backward(
        &self,
        x: &Tensor<T>,
        label: usize,
        rng: &mut Rng,
    ) -> Result<(T, GradSet<T>)> {
        self.check_input(x)?;
        let n = self.spec.layers.len();
        let mut caches = Vec::with_capacity(n);
        let mut cur = x.clone();
        let mut loss = T::zero();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Crop { side } => {
                    let (h, w) = (cur.shape()[0], cur.shape()[1]);
                    if side > h || side > w {
                        return Err(Error::Shape(format!(
                            "crop side {} exceeds {}x{} input",
                            side, h, w
                        )));
                    }
                    let plan = random_crop_plan(rng, h, w, side, self.augment_mirror);
                    let out = crop_forward(&cur, side, plan)?;
                    caches.push(Cache::Crop { plan, in_shape: cur.shape().to_vec() });
                    cur = out;
                }
                LayerSpec::Conv { pad, stride, .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let out = conv_forward(&cur, &p.weights, &p.bias, pad, stride)?;
                    caches.push(Cache::Input(cur));
                    cur = out;
                }
                LayerSpec::ReLU => {
                    let out = relu(&cur);
                    caches.push(Cache::Input(cur));
                    cur = out;
                }
                LayerSpec::MaxPool { kernel, pad, stride } => {
                    if pad != 0 {
                        return Err(Error::Constraint("padded pooling is not supported".into()));
                    }
                    let (out, argmax) = maxpool_forward(&cur, kernel, stride)?;
                    caches.push(Cache::Pool { argmax, in_shape: cur.shape().to_vec() });
                    cur = out;
                }
                LayerSpec::Lrn => {
                    let (out, scale) = lrn_forward(&cur, &self.lrn)?;
                    caches.push(Cache::Lrn { x: cur, scale });
                    cur = out;
                }
                LayerSpec::Energy => {
                    let out = energy_forward(&cur)?;
                    caches.push(Cache::Shape(cur.shape().to_vec()));
                    cur = out;
                }
                LayerSpec::FullyConnected { .. } => {
                    let p = self.params[i].as_ref().expect("fc params");
                    let out = fc_forward(&cur, &p.weights, &p.bias)?;
                    caches.push(Cache::Input(cur));
                    cur = out;
                }
                LayerSpec::Dropout => {
                    let (out, mask) = dropout_forward(&cur, self.dropout_rate, rng, true)?;
                    caches.push(Cache::Mask(mask));
                    cur = out;
                }
                LayerSpec::SoftmaxLoss => {
                    let (l, dlogits) = softmax_loss(&cur, label)?;
                    loss = l;
                    caches.push(Cache::Dlogits(dlogits));
                }
            }
        }

        let mut grads = GradSet { per_layer: (0..n).map(|_| None).collect() };
        let mut dy = match caches.pop() {
            Some(Cache::Dlogits(d)) => d,
            _ => return Err(Error::Constraint("network must end with the loss layer".into())),
        };
        for i in (0..n - 1).rev() {
            let cache = caches.pop().expect("cache per layer");
            match (&self.spec.layers[i], cache) {
                (LayerSpec::Crop { side }, Cache::Crop { plan, in_shape }) => {
                    // Scatter the window gradient back (un-mirroring columns).
                    let mut dx = Tensor::zeros(&in_shape)?;
                    let (w, c) = (in_shape[1], in_shape[2]);
                    let dst = dx.data_mut();
                    let side = *side;
                    for y in 0..side {
                        for xo in 0..side {
                            let sx = if plan.mirror {
                                plan.ox + side - 1 - xo
                            } else {
                                plan.ox + xo
                            };
                            let d = ((plan.oy + y) * w + sx) * c;
                            let s = (y * side + xo) * c;
                            for ch in 0..c {
                                dst[d + ch] = dy.data()[s + ch];
                            }
                        }
                    }
                    dy = dx;
                }
                (LayerSpec::Conv { pad, stride, .. }, Cache::Input(x_in)) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let (dx, dw, db) = conv_backward(&x_in, &p.weights, &dy, *pad, *stride)?;
                    grads.per_layer[i] = Some((dw, db));
                    dy = dx;
                }
                (LayerSpec::ReLU, Cache::Input(x_in)) => {
                    dy = relu_backward(&dy, &x_in);
                }
                (LayerSpec::MaxPool { .. }, Cache::Pool { argmax, in_shape }) => {
                    dy = maxpool_backward(&dy, &argmax, &in_shape)?;
                }
                (LayerSpec::Lrn, Cache::Lrn { x: x_in, scale }) => {
                    dy = lrn_backward(&dy, &x_in, &scale, &self.lrn)?;
                }
                (LayerSpec::Energy, Cache::Shape(in_shape)) => {
                    dy = energy_backward(&dy, &in_shape)?;
                }
                (LayerSpec::FullyConnected { .. }, Cache::Input(x_in)) => {
                    let p = self.params[i].as_ref().expect("fc params");
                    let (dx, dw, db) = fc_backward(&x_in, &p.weights, &dy)?;
                    grads.per_layer[i] = Some((dw, db));
                    dy = dx;
                }
                (LayerSpec::Dropout, Cache::Mask(mask)) => {
                    dy = dropout_backward(&dy, &mask)?;
                }
                _ => return Err(Error::Constraint("cache/layer mismatch".into())),
            }
        }
        Ok((loss, grads))
    }

    /// Inference path: center crop, dropout as identity, stopping before the
    /// loss layer. Returns the raw (non-normalized) class scores.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Crop { side } => {
                    let (h, w) = (cur.shape()[0], cur.shape()[1]);
                    if side > h || side > w {
                        return Err(Error::Shape(format!(
                            "crop side {} exceeds {}x{} input",
                            side, h, w
                        )));
                    }
                    cur = crop_forward(&cur, side, center_crop_plan(h, w, side))?;
                }
                LayerSpec::Conv { pad, stride, .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    cur = conv_forward(&cur, &p.weights, &p.bias, pad, stride)?;
                }
                LayerSpec::ReLU => cur = relu(&cur),
                LayerSpec::MaxPool { kernel, pad, stride } => {
                    if pad != 0 {
                        return Err(Error::Constraint("padded pooling is not supported".into()));
                    }
                    cur = maxpool_forward(&cur, kernel, stride)?.0;
                }
                LayerSpec::Lrn => cur = lrn_forward(&cur, &self.lrn)?.0,
                LayerSpec::Energy => cur = energy_forward(&cur)?,
                LayerSpec::FullyConnected { .. } => {
                    let p = self.params[i].as_ref().expect("fc params");
                    cur = fc_forward(&cur, &p.weights, &p.bias)?;
                }
                LayerSpec::Dropout | LayerSpec::SoftmaxLoss => {}
            }
        }
        Ok(cur)
    }

    /// Apply one momentum-SGD update from averaged batch gradients.
    pub fn apply_update(&mut self, grads: &GradSet<T>, lr: f64, cfg: &TrainConfig) {
        for (p, g) in self.params.iter_mut().zip(&grads.per_layer) {
            if let (Some(p), Some((dw, db))) = (p.as_mut(), g.as_ref()) {
                sgd_update(&mut p.weights, &mut p.v_weights, dw, lr, cfg.weight_decay, cfg.momentum);
                sgd_update(&mut p.bias, &mut p.v_bias, db, lr, cfg.weight_decay, cfg.momentum);
            }
        }
    }
}

/// Samples are (input, label, rng seed); the seed drives that sample's crop
/// and dropout draws.
pub type TrainSample<T> = (Tensor<T>, usize, u64);

/// Fixed per-thread work unit; chunks are reduced in index order, so results
/// do not depend on the worker-thread count.
const GRAD_CHUNK: usize = 8;

/// One SGD iteration over a minibatch: parallel per-sample gradients, an
/// ordered deterministic reduction, gradient averaging, then the momentum
/// update at lr(iter). Returns the mean sample loss.
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    batch: &[TrainSample<T>],
    cfg: &TrainConfig,
    iter: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Constraint("empty training batch".into()));
    }
    let chunk_results: Vec<Result<(f64, GradSet<T>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut loss_sum = 0.0;
            let mut acc: Option<GradSet<T>> = None;
            for (x, label, seed) in chunk {
                let mut rng = Rng::new(*seed);
                let (loss, grads) = net.forward_backward(x, *label, &mut rng)?;
                loss_sum += loss.to_f64();
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => a.add_assign(&grads),
                }
            }
            Ok((loss_sum, acc.expect("nonempty chunk")))
        })
        .collect();

    let mut loss_sum = 0.0;
    let mut total: Option<GradSet<T>> = None;
    for r in chunk_results {
        let (l, g) = r?;
        loss_sum += l;
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => t.add_assign(&g),
        }
    }
    let mut grads = total.expect("nonempty batch");
    grads.scale(1.0 / batch.len() as f64);
    net.apply_update(&grads, cfg.lr_at(iter), cfg);
    Ok(loss_sum / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_tcnn50_micro;
    use crate::tensor::mix_seed;

    /// Tiny but complete spec (every layer kind) for gradient checking.
    fn tiny_spec() -> NetworkSpec {
        use LayerSpec::*;
        NetworkSpec {
            layers: vec![
                Crop { side: 8 },
                Conv { kernel: 3, pad: 1, stride: 1, out_channels: 3 },
                ReLU,
                MaxPool { kernel: 2, pad: 0, stride: 2 },
                Lrn,
                Energy,
                FullyConnected { out_features: 5 },
                ReLU,
                Dropout,
                FullyConnected { out_features: 2 },
                SoftmaxLoss,
            ],
            input_channels: 1,
            num_classes: 2,
            input_side: 8,
        }
    }

    fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut t = Tensor::zeros(shape).unwrap();
        t.fill_gaussian(&mut Rng::new(seed), 0.0, 1.0);
        t
    }

    #[test]
    fn init_is_seed_deterministic_and_structured() {
        let spec = build_tcnn50_micro(1, 3).unwrap();
        let a: Network<f32> = Network::init(spec.clone(), &mut Rng::new(7), 0.01).unwrap();
        let b: Network<f32> = Network::init(spec, &mut Rng::new(7), 0.01).unwrap();
        let names: Vec<String> = a.param_layers().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["C1", "C2", "C3", "FC1", "FC2", "FC3"]);
        for ((_, i), (_, j)) in a.param_layers().iter().zip(b.param_layers().iter()) {
            let (pa, pb) = (a.params[*i].as_ref().unwrap(), b.params[*j].as_ref().unwrap());
            assert_eq!(pa.weights.data(), pb.weights.data());
            assert!(pa.bias.data().iter().all(|&v| v == 0.0));
            assert!(pa.v_weights.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn whole_network_gradients_match_finite_differences() {
        // f64 end-to-end check across composed layers. The sample rng seed is
        // fixed, so crop and dropout draws are identical for every loss
        // evaluation and the loss is a smooth function of the parameters.
        let net: Network<f64> = Network::init(tiny_spec(), &mut Rng::new(11), 0.1).unwrap();
        let x = randn(&[8, 8, 1], 21);
        let label = 1;
        let sample_seed = 77;
        let loss_at = |net: &Network<f64>| {
            net.forward_backward(&x, label, &mut Rng::new(sample_seed))
                .unwrap()
                .0
        };
        let (_, grads) = net
            .forward_backward(&x, label, &mut Rng::new(sample_seed))
            .unwrap();

        // eps must stay well below the smallest |pre-activation| so central
        // differences never step across a ReLU kink or flip a pool argmax.
        let eps = 1e-5;
        let mut checked = 0usize;
        for (_, li) in net.param_layers() {
            let analytic = grads.per_layer[li].as_ref().unwrap().clone();
            for (tensor_idx, analytic_t) in [&analytic.0, &analytic.1].into_iter().enumerate() {
                for k in 0..analytic_t.len() {
                    let mut perturbed = net.clone();
                    let p = perturbed.params[li].as_mut().unwrap();
                    let t = if tensor_idx == 0 { &mut p.weights } else { &mut p.bias };
                    let orig = t.data()[k];
                    t.data_mut()[k] = orig + eps;
                    let up = loss_at(&perturbed);
                    let p = perturbed.params[li].as_mut().unwrap();
                    let t = if tensor_idx == 0 { &mut p.weights } else { &mut p.bias };
                    t.data_mut()[k] = orig - eps;
                    let down = loss_at(&perturbed);
                    let numeric = (up - down) / (2.0 * eps);
                    let a = analytic_t.data()[k];
                    let denom = a.abs().max(numeric.abs());
                    if denom > 1e-7 {
                        let rel = (a - numeric).abs() / denom;
                        assert!(
                            rel < 1e-4,
                            "layer {} tensor {} elem {}: {} vs {}",
                            li, tensor_idx, k, a, numeric
                        );
                    }
                    checked += 1;
                }
            }
        }
        assert!(checked > 50, "expected a meaningful number of parameters");
    }

    #[test]
    fn inference_is_deterministic_and_skips_dropout() {
        let net: Network<f32> = Network::init(tiny_spec(), &mut Rng::new(3), 0.1).unwrap();
        let x = randn(&[8, 8, 1], 5).cast::<f32>();
        let a = net.logits(&x).unwrap();
        let b = net.logits(&x).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.shape(), [2]);
    }

    #[test]
    fn inference_accepts_oversized_inputs_via_center_crop() {
        let net: Network<f32> = Network::init(tiny_spec(), &mut Rng::new(3), 0.1).unwrap();
        let x = randn(&[12, 10, 1], 5).cast::<f32>();
        let y = net.logits(&x).unwrap();
        assert_eq!(y.shape(), [2]);
        // Undersized input is rejected by the crop layer.
        let x = randn(&[6, 8, 1], 5).cast::<f32>();
        assert!(net.logits(&x).is_err());
    }

    #[test]
    fn input_channel_mismatch_is_rejected() {
        let net: Network<f32> = Network::init(tiny_spec(), &mut Rng::new(3), 0.1).unwrap();
        let x = randn(&[8, 8, 3], 5).cast::<f32>();
        assert!(net.logits(&x).is_err());
        assert!(net.forward_backward(&x, 0, &mut Rng::new(1)).is_err());
    }

    /// Separable toy problem: class 0 images have mean +0.4, class 1 mean
    /// -0.4, plus mild noise.
    fn toy_batch(n_per_class: usize) -> Vec<TrainSample<f64>> {
        let mut batch = Vec::new();
        let mut rng = Rng::new(1234);
        for label in 0..2usize {
            for s in 0..n_per_class {
                let mut x = Tensor::zeros(&[8, 8, 1]).unwrap();
                let offset = if label == 0 { 0.4 } else { -0.4 };
                for v in x.data_mut() {
                    *v = offset + 0.05 * rng.next_gaussian();
                }
                batch.push((x, label, mix_seed(&[9, label as u64, s as u64])));
            }
        }
        batch
    }

    /// Dropout-free spec so the full-batch loss is a deterministic smooth
    /// function and monotone descent is checkable.
    fn toy_spec() -> NetworkSpec {
        use LayerSpec::*;
        NetworkSpec {
            layers: vec![
                Crop { side: 8 },
                Conv { kernel: 3, pad: 1, stride: 1, out_channels: 2 },
                ReLU,
                Energy,
                FullyConnected { out_features: 2 },
                SoftmaxLoss,
            ],
            input_channels: 1,
            num_classes: 2,
            input_side: 8,
        }
    }

    #[test]
    fn loss_decreases_on_separable_toy_problem() {
        let mut net: Network<f64> = Network::init(toy_spec(), &mut Rng::new(2), 0.05).unwrap();
        net.augment_mirror = false;
        let batch = toy_batch(8);
        let cfg = TrainConfig {
            lr: 0.05,
            gamma: 0.1,
            weight_decay: 0.0005,
            momentum: 0.9,
            batch_size: batch.len(),
            num_iters: 60,
            steps: vec![],
        };
        let mut losses = Vec::new();
        for iter in 0..51 {
            losses.push(train_step(&mut net, &batch, &cfg, iter).unwrap());
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss must strictly decrease: {:?}", losses);
        }
        assert!(losses[50] < losses[0] / 2.0);
    }

    #[test]
    fn train_step_is_deterministic_across_thread_counts() {
        let batch = toy_batch(8);
        let cfg = TrainConfig {
            lr: 0.05,
            gamma: 0.1,
            weight_decay: 0.0005,
            momentum: 0.9,
            batch_size: batch.len(),
            num_iters: 10,
            steps: vec![],
        };
        let run = |threads: usize| -> Vec<f64> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut net: Network<f64> =
                    Network::init(toy_spec(), &mut Rng::new(2), 0.05).unwrap();
                for iter in 0..5 {
                    train_step(&mut net, &batch, &cfg, iter).unwrap();
                }
                let (_, i) = net.param_layers()[0].clone();
                net.params[i].as_ref().unwrap().weights.data().to_vec()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
