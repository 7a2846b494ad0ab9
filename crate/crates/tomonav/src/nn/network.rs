//! Instantiated networks: parameter tensors hung on a spec, forward
//! inference and reverse-mode gradients.
//!
//! The backward pass uses a strict tape: every layer pushes its input
//! tensor during the forward walk and pops it in exact reverse order,
//! branches included, so no layer needs to own activation state.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, Activation};
use crate::nn::spec::{LayerSpec, NetworkSpec, OUTPUT_HEADS};
use crate::nn::tensor::Tensor;

/// The five-output command band in [0, 1]:
/// [forward, yaw-left, yaw-right, halt, junction].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub forward: f64,
    pub yaw_left: f64,
    pub yaw_right: f64,
    pub halt: f64,
    pub junction: f64,
}

impl ActionVector {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self { forward: a[0], yaw_left: a[1], yaw_right: a[2], halt: a[3], junction: a[4] }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.forward, self.yaw_left, self.yaw_right, self.halt, self.junction]
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.as_array() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "action vector component {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Conv { w: Tensor, b: Tensor, stride: usize, padding: usize },
    MaxPool { window: usize, stride: usize, padding: usize },
    AvgPool { window: usize, stride: usize, padding: usize },
    GlobalAvgPool,
    Dense { w: Tensor, b: Tensor },
    Relu,
    Sigmoid,
    Softmax,
    Flatten,
    BatchNorm { gamma: Tensor, beta: Tensor, eps: f64 },
    Inception { branches: Vec<Vec<Layer>>, branch_channels: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    pub(crate) layers: Vec<Layer>,
}

/// Gaussian sampler over a seeded stream (Box-Muller); bit-stable
/// across platforms for a fixed seed.
pub(crate) struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn next(&mut self) -> f64 {
        use rand::Rng;
        if let Some(v) = self.spare.take() {
            return v;
        }
        // Box-Muller on (0, 1] uniforms.
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn build_layers(
    specs: &[LayerSpec],
    mut shape: (usize, usize, usize),
    rng: &mut GaussianStream,
) -> Result<(Vec<Layer>, (usize, usize, usize))> {
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let (c_in, _, _) = shape;
        let layer = match spec {
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                let [kh, kw] = *kernel;
                let fan_in = (c_in * kh * kw) as f64;
                let std = (2.0 / fan_in).sqrt();
                let len = out_channels * c_in * kh * kw;
                let data: Vec<f64> = (0..len).map(|_| rng.next() * std).collect();
                Layer::Conv {
                    w: Tensor::new(&[*out_channels, c_in, kh, kw], data)?,
                    b: Tensor::zeros(&[*out_channels]),
                    stride: *stride,
                    padding: *padding,
                }
            }
            LayerSpec::MaxPool { window, stride, padding } => {
                Layer::MaxPool { window: *window, stride: *stride, padding: *padding }
            }
            LayerSpec::AvgPool { window, stride, padding } => {
                Layer::AvgPool { window: *window, stride: *stride, padding: *padding }
            }
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerSpec::Dense { out_features } => {
                let f_in = shape.0 * shape.1 * shape.2;
                let std = (2.0 / f_in as f64).sqrt();
                let data: Vec<f64> = (0..out_features * f_in).map(|_| rng.next() * std).collect();
                Layer::Dense {
                    w: Tensor::new(&[*out_features, f_in], data)?,
                    b: Tensor::zeros(&[*out_features]),
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::BatchNorm => Layer::BatchNorm {
                gamma: Tensor::new(&[c_in], vec![1.0; c_in])?,
                beta: Tensor::zeros(&[c_in]),
                eps: 1e-5,
            },
            LayerSpec::Inception { branches } => {
                let mut built = Vec::with_capacity(branches.len());
                let mut channels = Vec::with_capacity(branches.len());
                for branch in branches {
                    let (bl, bshape) = build_layers(branch, shape, rng)?;
                    channels.push(bshape.0);
                    built.push(bl);
                }
                Layer::Inception { branches: built, branch_channels: channels }
            }
        };
        layers.push(layer);
        shape = next_shape(spec, shape)?;
    }
    Ok((layers, shape))
}

fn next_shape(spec: &LayerSpec, shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
    // Single source of truth lives in spec validation; re-walk one step.
    crate::nn::spec::walk_with(std::slice::from_ref(spec), shape, &mut |_, _| {})
}

/// Deterministically initialize a network from a validated spec:
/// He-style fan-in scaling for weights, zero biases.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = GaussianStream::new(seed);
    let (layers, _) =
        build_layers(&spec.layers, (spec.input_channels, spec.input_size, spec.input_size), &mut rng)?;
    Ok(Network { spec: spec.clone(), layers })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Trainable parameter tensors in schedule order (weights before
    /// biases, branch order within inception blocks). This is the
    /// canonical order for gradients, optimizer state and weight files.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        fn collect<'a>(layers: &'a [Layer], out: &mut Vec<&'a Tensor>) {
            for layer in layers {
                match layer {
                    Layer::Conv { w, b, .. } | Layer::Dense { w, b } => {
                        out.push(w);
                        out.push(b);
                    }
                    Layer::BatchNorm { gamma, beta, .. } => {
                        out.push(gamma);
                        out.push(beta);
                    }
                    Layer::Inception { branches, .. } => {
                        for b in branches {
                            collect(b, out);
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.layers, &mut out);
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        fn collect<'a>(layers: &'a mut [Layer], out: &mut Vec<&'a mut Tensor>) {
            for layer in layers {
                match layer {
                    Layer::Conv { w, b, .. } | Layer::Dense { w, b } => {
                        out.push(w);
                        out.push(b);
                    }
                    Layer::BatchNorm { gamma, beta, .. } => {
                        out.push(gamma);
                        out.push(beta);
                    }
                    Layer::Inception { branches, .. } => {
                        for b in branches {
                            collect(b, out);
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&mut self.layers, &mut out);
        out
    }

    /// Total scalar parameter count.
    pub fn count_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let [_, c, h, w] = batch.shape();
        if c != self.spec.input_channels || h != self.spec.input_size || w != self.spec.input_size {
            return Err(Error::InvalidShape(format!(
                "network expects [n, {}, {}, {}] input, got {:?}",
                self.spec.input_channels, self.spec.input_size, self.spec.input_size,
                batch.shape()
            )));
        }
        batch.assert_finite()
    }

    /// Inference: returns the five sigmoid heads per sample.
    pub fn forward(&self, batch: &Tensor) -> Result<Vec<ActionVector>> {
        let out = self.forward_tensor(batch)?;
        Ok(tensor_to_actions(&out))
    }

    /// Inference keeping the raw [n, 5, 1, 1] output tensor.
    pub fn forward_tensor(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = forward_layer(layer, &x, None)?;
        }
        Ok(x)
    }

    /// Forward pass recording the tape needed for `backward_from`.
    pub(crate) fn forward_taped(&self, batch: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_input(batch)?;
        let mut tape = Vec::new();
        let mut x = batch.clone();
        for layer in &self.layers {
            x = forward_layer(layer, &x, Some(&mut tape))?;
        }
        Ok((x, tape))
    }

    /// Reverse-mode sweep from a gradient at the network output (or at
    /// the pre-sigmoid logits when `skip_final_sigmoid` is set, the
    /// fused cross-entropy path). Returns gradients aligned with
    /// `param_tensors`.
    pub(crate) fn backward_from(
        &self,
        tape: &mut Vec<Tensor>,
        mut grad: Tensor,
        skip_final_sigmoid: bool,
    ) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.count_param_tensors()];
        let mut next_slot = grads.len();
        let mut layers_rev: Vec<&Layer> = self.layers.iter().collect();
        if skip_final_sigmoid {
            match layers_rev.pop() {
                Some(Layer::Sigmoid) => {
                    tape.pop();
                }
                _ => return Err(Error::SpecViolation("fused loss requires a sigmoid head".into())),
            }
        }
        for layer in layers_rev.into_iter().rev() {
            grad = backward_layer(layer, tape, grad, &mut grads, &mut next_slot)?;
        }
        debug_assert_eq!(next_slot, 0);
        debug_assert!(tape.is_empty());
        Ok(Gradients { tensors: grads.into_iter().map(|g| g.expect("gradient filled")).collect() })
    }

    fn count_param_tensors(&self) -> usize {
        self.param_tensors().len()
    }
}

/// Per-parameter-tensor gradients, ordered like `param_tensors`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn tensor_to_actions(out: &Tensor) -> Vec<ActionVector> {
    let n = out.n();
    (0..n)
        .map(|ni| {
            let mut a = [0.0; OUTPUT_HEADS];
            for (hi, slot) in a.iter_mut().enumerate() {
                *slot = out.at(ni, hi, 0, 0);
            }
            ActionVector::from_array(a)
        })
        .collect()
}

fn forward_layer(layer: &Layer, x: &Tensor, mut tape: Option<&mut Vec<Tensor>>) -> Result<Tensor> {
    if let Some(t) = tape.as_deref_mut() {
        t.push(x.clone());
    }
    match layer {
        Layer::Conv { w, b, stride, padding } => ops::conv2d(x, w, b, *stride, *padding),
        Layer::MaxPool { window, stride, padding } => ops::maxpool2d(x, *window, *stride, *padding),
        Layer::AvgPool { window, stride, padding } => ops::avgpool2d(x, *window, *stride, *padding),
        Layer::GlobalAvgPool => Ok(ops::global_avgpool(x)),
        Layer::Dense { w, b } => ops::dense(x, w, b),
        Layer::Relu => Ok(ops::apply_activation(x, Activation::Relu)),
        Layer::Sigmoid => Ok(ops::apply_activation(x, Activation::Sigmoid)),
        Layer::Softmax => Ok(ops::apply_activation(x, Activation::Softmax)),
        Layer::Flatten => {
            let [n, c, h, w] = x.shape();
            Tensor::new(&[n, c * h * w, 1, 1], x.data().to_vec())
        }
        Layer::BatchNorm { gamma, beta, eps } => {
            let (y, _, _) = ops::batchnorm_forward(x, gamma, beta, *eps);
            Ok(y)
        }
        Layer::Inception { branches, .. } => {
            let mut outs = Vec::with_capacity(branches.len());
            for branch in branches {
                let mut bx = x.clone();
                for l in branch {
                    bx = forward_layer(l, &bx, tape.as_deref_mut())?;
                }
                outs.push(bx);
            }
            ops::concat_channels(&outs.iter().collect::<Vec<_>>())
        }
    }
}

/// Pops this layer's tape entries (in reverse push order) and returns
/// the gradient with respect to its input, writing parameter gradients
/// into `grads` right-to-left via `next_slot`.
fn backward_layer(
    layer: &Layer,
    tape: &mut Vec<Tensor>,
    grad_out: Tensor,
    grads: &mut Vec<Option<Tensor>>,
    next_slot: &mut usize,
) -> Result<Tensor> {
    match layer {
        Layer::Inception { branches, branch_channels } => {
            // Branch tapes were pushed in branch order; unwind in
            // reverse. Channel offsets address each branch's gradient
            // slice within the concatenated output.
            let offsets: Vec<usize> = branch_channels
                .iter()
                .scan(0, |acc, &c| {
                    let start = *acc;
                    *acc += c;
                    Some(start)
                })
                .collect();
            let mut grad_x: Option<Tensor> = None;
            for (bi, branch) in branches.iter().enumerate().rev() {
                let mut g = ops::slice_channels(&grad_out, offsets[bi], branch_channels[bi]);
                for l in branch.iter().rev() {
                    g = backward_layer(l, tape, g, grads, next_slot)?;
                }
                grad_x = Some(match grad_x {
                    None => g,
                    Some(mut acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                        acc
                    }
                });
            }
            tape.pop().expect("inception input on tape");
            Ok(grad_x.expect("inception has branches"))
        }
        _ => {
            let input = tape.pop().expect("layer input on tape");
            match layer {
                Layer::Conv { w, stride, padding, .. } => {
                    let (gi, gw, gb) = ops::conv2d_backward(&input, w, &grad_out, *stride, *padding)?;
                    *next_slot -= 2;
                    grads[*next_slot] = Some(gw);
                    grads[*next_slot + 1] = Some(gb);
                    Ok(gi)
                }
                Layer::Dense { w, .. } => {
                    let (gi, gw, gb) = ops::dense_backward(&input, w, &grad_out)?;
                    *next_slot -= 2;
                    grads[*next_slot] = Some(gw);
                    grads[*next_slot + 1] = Some(gb);
                    Ok(gi)
                }
                Layer::BatchNorm { gamma, eps, .. } => {
                    let (gi, gg, gb) = ops::batchnorm_backward(&input, gamma, &grad_out, *eps);
                    *next_slot -= 2;
                    grads[*next_slot] = Some(gg);
                    grads[*next_slot + 1] = Some(gb);
                    Ok(gi)
                }
                Layer::MaxPool { window, stride, padding } => {
                    ops::maxpool2d_backward(&input, &grad_out, *window, *stride, *padding)
                }
                Layer::AvgPool { window, stride, padding } => {
                    ops::avgpool2d_backward(input.shape(), &grad_out, *window, *stride, *padding)
                }
                Layer::GlobalAvgPool => Ok(ops::global_avgpool_backward(input.shape(), &grad_out)),
                Layer::Relu => Ok(ops::activation_backward(&input, &grad_out, Activation::Relu)),
                Layer::Sigmoid => Ok(ops::activation_backward(&input, &grad_out, Activation::Sigmoid)),
                Layer::Softmax => Ok(ops::activation_backward(&input, &grad_out, Activation::Softmax)),
                Layer::Flatten => {
                    let [n, c, h, w] = input.shape();
                    Tensor::new(&[n, c, h, w], grad_out.data().to_vec())
                }
                Layer::Inception { .. } => unreachable!(),
            }
        }
    }
}
