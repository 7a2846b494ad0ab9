//! Loss, optimizer and the mini-batch training loop.
//!
//! Everything is deterministic given (seed, data, hyperparameters):
//! the per-epoch shuffle derives from the seed and epoch index alone,
//! so an interrupted run resumed from a checkpoint reproduces the
//! uninterrupted run bit for bit.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{tensor_to_actions, Gradients, Network};
use crate::nn::spec::OUTPUT_HEADS;
use crate::nn::tensor::Tensor;
use crate::nn::weights;

/// Predictions are clamped into [EPS, 1-EPS] inside the loss.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all heads and samples.
/// `pred` and `target` are [n, 5, 1, 1]; targets must be 0 or 1.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::InvalidShape(format!(
            "loss shape mismatch: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    for &t in target.data() {
        if t != 0.0 && t != 1.0 {
            return Err(Error::InvalidInput(format!("targets must be binary, got {t}")));
        }
    }
    let mut acc = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        acc -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(acc / pred.len() as f64)
}

/// Gradient of `bce_loss` with respect to the pre-sigmoid logits
/// (the fused, numerically stable form): (p - t) / count.
pub fn bce_logit_gradient(pred: &Tensor, target: &Tensor) -> Tensor {
    let mut grad = pred.clone();
    let inv = 1.0 / pred.len() as f64;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        *g = (*g - t) * inv;
    }
    grad
}

/// Loss plus gradients for one batch.
pub fn forward_backward(
    net: &Network,
    batch: &Tensor,
    targets: &Tensor,
) -> Result<(f64, Tensor, Gradients)> {
    let (pred, mut tape) = net.forward_taped(batch)?;
    let loss = bce_loss(&pred, targets)?;
    let grad0 = bce_logit_gradient(&pred, targets);
    let grads = net.backward_from(&mut tape, grad0, true)?;
    Ok((loss, pred, grads))
}

/// Gradient of the loss with respect to every parameter.
pub fn backward(net: &Network, batch: &Tensor, targets: &Tensor) -> Result<Gradients> {
    forward_backward(net, batch, targets).map(|(_, _, g)| g)
}

/// SGD with classical momentum. Velocity is aligned with
/// `Network::param_tensors` order.
#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: Vec<Tensor>,
}

impl SgdOptimizer {
    pub fn new(net: &Network, lr: f64, momentum: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {lr}")));
        }
        let velocity = net
            .param_tensors()
            .iter()
            .map(|t| Tensor::zeros(&t.shape()))
            .collect();
        Ok(Self { lr, momentum, velocity })
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        let params = net.param_tensors_mut();
        debug_assert_eq!(params.len(), grads.tensors.len());
        for ((p, v), g) in params.into_iter().zip(&mut self.velocity).zip(&grads.tensors) {
            for ((pv, vv), gv) in
                p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data())
            {
                *vv = self.momentum * *vv + gv;
                *pv -= self.lr * *vv;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, learning_rate: 0.05, momentum: 0.9, seed: 0 }
    }
}

/// In-memory training view: f32 feature planes plus binary targets.
#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub input_size: usize,
    pub features: Vec<Vec<f32>>,
    pub targets: Vec<[f64; 5]>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.targets.len() {
            return Err(Error::InvalidInput("feature/target count mismatch".into()));
        }
        let want = self.input_size * self.input_size;
        if let Some(bad) = self.features.iter().position(|f| f.len() != want) {
            return Err(Error::InvalidInput(format!(
                "feature {bad} has {} values, expected {want}",
                self.features[bad].len()
            )));
        }
        Ok(())
    }

    pub fn batch_tensors(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let s = self.input_size;
        let mut x = Vec::with_capacity(indices.len() * s * s);
        let mut t = Vec::with_capacity(indices.len() * OUTPUT_HEADS);
        for &i in indices {
            x.extend(self.features[i].iter().map(|&v| v as f64));
            t.extend_from_slice(&self.targets[i]);
        }
        (
            Tensor::new(&[indices.len(), 1, s, s], x).expect("batch tensor"),
            Tensor::new(&[indices.len(), OUTPUT_HEADS, 1, 1], t).expect("target tensor"),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub head_accuracy: [f64; 5],
    pub exact_match_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub final_loss: f64,
    pub samples: usize,
    pub param_count: usize,
}

fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run epochs `start_epoch..hyper.epochs`, mutating the network and
/// optimizer in place. When `checkpoint_dir` is set, the full training
/// state is written after every epoch.
pub fn train_epochs(
    net: &mut Network,
    opt: &mut SgdOptimizer,
    data: &TrainSet,
    hyper: &TrainHyper,
    start_epoch: usize,
    checkpoint_dir: Option<&Path>,
    mut progress: Option<&mut dyn FnMut(&EpochStats)>,
) -> Result<TrainReport> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let mut report = TrainReport {
        epochs: Vec::new(),
        final_loss: 0.0,
        samples: data.len(),
        param_count: net.count_params(),
    };
    for epoch in start_epoch..hyper.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_shuffle_seed(hyper.seed, epoch));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut head_hits = [0usize; 5];
        let mut exact_hits = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let (x, t) = data.batch_tensors(chunk);
            let (loss, pred, grads) = forward_backward(net, &x, &t)?;
            opt.step(net, &grads);
            loss_sum += loss;
            batches += 1;
            for (ni, av) in tensor_to_actions(&pred).iter().enumerate() {
                let p = av.as_array();
                let mut all = true;
                for hi in 0..5 {
                    let hit = (p[hi] >= 0.5) == (t.at(ni, hi, 0, 0) >= 0.5);
                    if hit {
                        head_hits[hi] += 1;
                    } else {
                        all = false;
                    }
                }
                if all {
                    exact_hits += 1;
                }
            }
        }
        let n = data.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / batches as f64,
            head_accuracy: head_hits.map(|h| h as f64 / n),
            exact_match_accuracy: exact_hits as f64 / n,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&stats);
        }
        report.final_loss = stats.mean_loss;
        report.epochs.push(stats);
        if let Some(dir) = checkpoint_dir {
            weights::save_checkpoint(net, &opt.velocity, epoch + 1, &dir.join("checkpoint.mavc"))?;
        }
    }
    Ok(report)
}

/// Fresh training run from epoch zero.
pub fn train(
    net: &mut Network,
    data: &TrainSet,
    hyper: &TrainHyper,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainReport> {
    let mut opt = SgdOptimizer::new(net, hyper.learning_rate, hyper.momentum)?;
    train_epochs(net, &mut opt, data, hyper, 0, checkpoint_dir, None)
}
