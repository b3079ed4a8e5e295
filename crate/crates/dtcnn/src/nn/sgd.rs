//! Minibatch SGD with momentum, weight decay and a stepped learning-rate
//! schedule.

use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Optimizer hyperparameters. `steps` are the iteration indices at which the
/// learning rate is multiplied by `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub num_iters: usize,
    pub steps: Vec<usize>,
}

impl TrainConfig {
    /// Schedule used for the large 36-class benchmark runs.
    pub fn preset_dyntex_pp() -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            gamma: 0.01,
            weight_decay: 0.0005,
            momentum: 0.9,
            batch_size: 64,
            num_iters: 25_000,
            steps: vec![5_000, 20_000],
        }
    }

    /// Schedule used for the 9-class camera-motion benchmark.
    pub fn preset_ucla9() -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            gamma: 0.01,
            weight_decay: 0.0005,
            momentum: 0.9,
            batch_size: 64,
            num_iters: 4_000,
            steps: vec![1_000, 3_000],
        }
    }

    /// Schedule used for the remaining benchmark families (fine-tuning-sized
    /// runs with a small initial rate).
    pub fn preset_dyntex() -> TrainConfig {
        TrainConfig {
            lr: 1e-4,
            gamma: 0.1,
            weight_decay: 0.004,
            momentum: 0.9,
            batch_size: 64,
            num_iters: 2_000,
            steps: vec![1_500],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Config("lr and gamma must be positive".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(
                "weight decay must be >= 0 and momentum in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        for w in self.steps.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config("lr steps must be strictly increasing".into()));
            }
        }
        if let Some(&last) = self.steps.last() {
            if last >= self.num_iters {
                return Err(Error::Config("lr steps must lie before num_iters".into()));
            }
        }
        Ok(())
    }

    /// lr(iter) = lr * gamma^(number of steps <= iter).
    pub fn lr_at(&self, iter: usize) -> f64 {
        let crossed = self.steps.iter().filter(|&&s| s <= iter).count();
        self.lr * self.gamma.powi(crossed as i32)
    }
}

/// One momentum-SGD update on a parameter tensor:
/// v <- momentum*v - lr*(g + weight_decay*w); w <- w + v.
pub fn sgd_update<T: Scalar>(
    w: &mut Tensor<T>,
    v: &mut Tensor<T>,
    g: &Tensor<T>,
    lr: f64,
    weight_decay: f64,
    momentum: f64,
) {
    debug_assert_eq!(w.shape(), g.shape());
    debug_assert_eq!(w.shape(), v.shape());
    let lr = T::from_f64(lr);
    let wd = T::from_f64(weight_decay);
    let mu = T::from_f64(momentum);
    for ((wv, vv), &gv) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
        *vv = mu * *vv - lr * (gv + wd * *wv);
        *wv = *wv + *vv;
    }
}
