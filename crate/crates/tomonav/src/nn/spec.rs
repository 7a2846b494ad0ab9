//! Declarative layer schedules. A network spec is data: it serializes
//! to JSON (committed copies live in `docs/presets/`) and its SHA-256
//! digest keys weight files to the architecture they were trained for.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest kernel extent the architecture tolerates; anything bigger
/// is rejected outright (the whole point of the 1x1/3x3 design).
pub const MAX_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: [usize; 2], stride: usize, padding: usize },
    MaxPool { window: usize, stride: usize, padding: usize },
    AvgPool { window: usize, stride: usize, padding: usize },
    GlobalAvgPool,
    Dense { out_features: usize },
    Relu,
    Sigmoid,
    Softmax,
    Flatten,
    BatchNorm,
    /// Parallel branches applied to the same input, merged by channel
    /// concatenation in branch order.
    Inception { branches: Vec<Vec<LayerSpec>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub input_size: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

/// Number of output heads every spec must end in.
pub const OUTPUT_HEADS: usize = 5;

impl NetworkSpec {
    /// Walk the layer schedule, checking every constraint and
    /// returning the final (channels, height, width).
    pub fn validate(&self) -> Result<(usize, usize, usize)> {
        if self.input_size == 0 || self.input_channels == 0 {
            return Err(Error::SpecViolation("input size and channels must be nonzero".into()));
        }
        let shape = walk_layers(
            &self.layers,
            (self.input_channels, self.input_size, self.input_size),
        )?;
        let flat = shape.0 * shape.1 * shape.2;
        if flat != OUTPUT_HEADS {
            return Err(Error::SpecViolation(format!(
                "output head must have exactly {OUTPUT_HEADS} units, spec produces {flat}"
            )));
        }
        match self.layers.last() {
            Some(LayerSpec::Sigmoid) => {}
            _ => {
                return Err(Error::SpecViolation(
                    "output heads must be sigmoid (multi-label command band)".into(),
                ))
            }
        }
        Ok(shape)
    }

    /// Layers carrying trainable weights (conv + dense), branches
    /// included.
    pub fn weight_layer_count(&self) -> usize {
        fn count(layers: &[LayerSpec]) -> usize {
            layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Conv { .. } | LayerSpec::Dense { .. } => 1,
                    LayerSpec::Inception { branches } => branches.iter().map(|b| count(b)).sum(),
                    _ => 0,
                })
                .sum()
        }
        count(&self.layers)
    }

    /// Total trainable parameter count implied by the spec.
    pub fn param_count(&self) -> Result<usize> {
        let mut total = 0usize;
        walk_with(
            &self.layers,
            (self.input_channels, self.input_size, self.input_size),
            &mut |layer, (c_in, _, _)| {
                total += match layer {
                    LayerSpec::Conv { out_channels, kernel, .. } => {
                        out_channels * c_in * kernel[0] * kernel[1] + out_channels
                    }
                    LayerSpec::Dense { out_features } => out_features * c_in + out_features,
                    LayerSpec::BatchNorm => 2 * c_in,
                    _ => 0,
                };
            },
        )?;
        Ok(total)
    }

    /// SHA-256 digest of the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_string(self).expect("network spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher.finalize().into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn preset(name: &str) -> Option<NetworkSpec> {
        match name {
            "full" => Some(full_preset()),
            "tiny" => Some(tiny_preset()),
            _ => None,
        }
    }
}

/// Shape evolution for one layer. `Dense` consumes the flattened
/// feature count.
fn layer_output_shape(layer: &LayerSpec, shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
    let (c, h, w) = shape;
    let pooled = |window: usize, stride: usize, padding: usize| -> Result<(usize, usize)> {
        let ph = h + 2 * padding;
        let pw = w + 2 * padding;
        if window == 0 || stride == 0 || window > ph || window > pw {
            return Err(Error::SpecViolation(format!(
                "pool window {window} does not fit {h}x{w} (+{padding} pad)"
            )));
        }
        Ok(((ph - window) / stride + 1, (pw - window) / stride + 1))
    };
    match layer {
        LayerSpec::Conv { out_channels, kernel, stride, padding } => {
            let [kh, kw] = *kernel;
            if kh > MAX_KERNEL || kw > MAX_KERNEL {
                return Err(Error::SpecViolation(format!(
                    "conv kernel {kh}x{kw} exceeds the {MAX_KERNEL}x{MAX_KERNEL} limit"
                )));
            }
            if kh == 0 || kw == 0 || kh == 2 || kw == 2 {
                return Err(Error::SpecViolation(format!(
                    "conv kernel sides must be 1 or 3, got {kh}x{kw}"
                )));
            }
            if *stride == 0 {
                return Err(Error::SpecViolation("conv stride must be >= 1".into()));
            }
            if *out_channels == 0 {
                return Err(Error::SpecViolation("conv needs out_channels >= 1".into()));
            }
            let ph = h + 2 * padding;
            let pw = w + 2 * padding;
            if ph < kh || pw < kw {
                return Err(Error::SpecViolation("conv kernel larger than padded input".into()));
            }
            Ok((*out_channels, (ph - kh) / stride + 1, (pw - kw) / stride + 1))
        }
        LayerSpec::MaxPool { window, stride, padding }
        | LayerSpec::AvgPool { window, stride, padding } => {
            let (oh, ow) = pooled(*window, *stride, *padding)?;
            Ok((c, oh, ow))
        }
        LayerSpec::GlobalAvgPool => Ok((c, 1, 1)),
        LayerSpec::Dense { out_features } => {
            if *out_features == 0 {
                return Err(Error::SpecViolation("dense needs out_features >= 1".into()));
            }
            Ok((*out_features, 1, 1))
        }
        LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Softmax | LayerSpec::BatchNorm => {
            Ok((c, h, w))
        }
        LayerSpec::Flatten => Ok((c * h * w, 1, 1)),
        LayerSpec::Inception { branches } => {
            if branches.is_empty() {
                return Err(Error::SpecViolation("inception block needs branches".into()));
            }
            let mut c_total = 0;
            let mut spatial = None;
            for branch in branches {
                if branch.is_empty() {
                    return Err(Error::SpecViolation("inception branch may not be empty".into()));
                }
                let out = walk_layers(branch, (c, h, w))?;
                match spatial {
                    None => spatial = Some((out.1, out.2)),
                    Some(s) if s == (out.1, out.2) => {}
                    Some(s) => {
                        return Err(Error::SpecViolation(format!(
                            "inception branches disagree on spatial size: {:?} vs {:?}",
                            s,
                            (out.1, out.2)
                        )))
                    }
                }
                c_total += out.0;
            }
            let (oh, ow) = spatial.unwrap();
            Ok((c_total, oh, ow))
        }
    }
}

fn walk_layers(layers: &[LayerSpec], mut shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
    for layer in layers {
        shape = layer_output_shape(layer, shape)?;
    }
    Ok(shape)
}

/// Visit every layer (branches included) with the shape of its input.
pub(crate) fn walk_with(
    layers: &[LayerSpec],
    mut shape: (usize, usize, usize),
    visit: &mut impl FnMut(&LayerSpec, (usize, usize, usize)),
) -> Result<(usize, usize, usize)> {
    for layer in layers {
        visit(layer, shape);
        if let LayerSpec::Inception { branches } = layer {
            for branch in branches {
                walk_with(branch, shape, visit)?;
            }
        }
        shape = layer_output_shape(layer, shape)?;
    }
    Ok(shape)
}

fn conv(out_channels: usize, k: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv { out_channels, kernel: [k, k], stride, padding }
}

fn inception(b1: usize, b2: (usize, usize), b3: (usize, usize, usize), b4: usize) -> LayerSpec {
    LayerSpec::Inception {
        branches: vec![
            vec![conv(b1, 1, 1, 0), LayerSpec::Relu],
            vec![conv(b2.0, 1, 1, 0), LayerSpec::Relu, conv(b2.1, 3, 1, 1), LayerSpec::Relu],
            vec![
                conv(b3.0, 1, 1, 0),
                LayerSpec::Relu,
                conv(b3.1, 3, 1, 1),
                LayerSpec::Relu,
                conv(b3.2, 3, 1, 1),
                LayerSpec::Relu,
            ],
            vec![
                LayerSpec::AvgPool { window: 3, stride: 1, padding: 1 },
                conv(b4, 1, 1, 0),
                LayerSpec::Relu,
            ],
        ],
    }
}

/// The production classifier: a 3x3 stem plus five inception blocks
/// built from 1x1/3x3 branches, global average pooling and a five-unit
/// sigmoid head. 39 weight layers, ~5.4M parameters, 100x100 input.
pub fn full_preset() -> NetworkSpec {
    NetworkSpec {
        name: "full".into(),
        input_size: 100,
        input_channels: 1,
        layers: vec![
            conv(32, 3, 2, 1),
            LayerSpec::Relu,
            conv(48, 3, 1, 1),
            LayerSpec::Relu,
            conv(64, 3, 2, 1),
            LayerSpec::Relu,
            inception(64, (48, 96), (32, 64, 64), 32),
            LayerSpec::MaxPool { window: 2, stride: 2, padding: 0 },
            inception(128, (96, 192), (64, 96, 96), 64),
            inception(192, (128, 256), (96, 128, 128), 96),
            LayerSpec::MaxPool { window: 2, stride: 2, padding: 0 },
            inception(256, (192, 320), (128, 192, 192), 128),
            inception(320, (256, 384), (160, 224, 224), 160),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { out_features: OUTPUT_HEADS },
            LayerSpec::Sigmoid,
        ],
    }
}

/// Small sibling for tests and the desk-scale experiments: 32x32
/// input, 8 weight layers, <50k parameters. The head flattens the
/// pooled feature map instead of averaging it away: the command labels
/// depend on where the road sits in the frame, and global pooling is
/// blind to translation.
pub fn tiny_preset() -> NetworkSpec {
    NetworkSpec {
        name: "tiny".into(),
        input_size: 32,
        input_channels: 1,
        layers: vec![
            conv(8, 3, 2, 1),
            LayerSpec::Relu,
            conv(12, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::Inception {
                branches: vec![
                    vec![conv(8, 1, 1, 0), LayerSpec::Relu],
                    vec![
                        conv(6, 1, 1, 0),
                        LayerSpec::Relu,
                        conv(10, 3, 1, 1),
                        LayerSpec::Relu,
                        conv(10, 3, 1, 1),
                        LayerSpec::Relu,
                    ],
                    vec![
                        LayerSpec::AvgPool { window: 3, stride: 1, padding: 1 },
                        conv(6, 1, 1, 0),
                        LayerSpec::Relu,
                    ],
                ],
            },
            LayerSpec::MaxPool { window: 2, stride: 2, padding: 0 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: OUTPUT_HEADS },
            LayerSpec::Sigmoid,
        ],
    }
}
