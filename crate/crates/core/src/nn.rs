//! Reference architectures, seeded initialization and forward evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvGeometry, Layout, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

/// One weight-bearing layer. `inputs`/`outputs` are features for dense layers
/// and channels for convolutions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub inputs: usize,
    pub outputs: usize,
    pub has_bias: bool,
    pub prunable: bool,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            inputs,
            outputs,
            has_bias: true,
            prunable: true,
        }
    }

    pub fn conv(inputs: usize, outputs: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            },
            inputs,
            outputs,
            has_bias: true,
            prunable: true,
        }
    }

    /// `[outputs, inputs]` for dense, `[out_c, in_c, k, k]` for conv.
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense => vec![self.outputs, self.inputs],
            LayerKind::Conv2d { kernel, .. } => vec![self.outputs, self.inputs, kernel, kernel],
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.inputs,
            LayerKind::Conv2d { kernel, .. } => self.inputs * kernel * kernel,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureName {
    #[serde(rename = "lenet_300_100")]
    Lenet300_100,
    SmallCnn,
    /// Hand-assembled layer lists (tests, toy problems).
    Custom,
}

impl ArchitectureName {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureName::Lenet300_100 => "lenet_300_100",
            ArchitectureName::SmallCnn => "small_cnn",
            ArchitectureName::Custom => "custom",
        }
    }

    pub fn build(self) -> Result<Architecture> {
        match self {
            ArchitectureName::Lenet300_100 => Ok(build_lenet_300_100()),
            ArchitectureName::SmallCnn => Ok(build_small_cnn()),
            ArchitectureName::Custom => Err(Error::InvalidArgument("a custom architecture has no builder".into())),
        }
    }
}

impl fmt::Display for ArchitectureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lenet_300_100" | "lenet" => Ok(Self::Lenet300_100),
            "small_cnn" | "cnn" => Ok(Self::SmallCnn),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidArgument(format!("unknown network {other:?}"))),
        }
    }
}

/// Ordered layers applied to inputs of shape `input_shape` (per example).
/// ReLU follows every layer except the last; a convolution output is
/// flattened (NHWC order) before a following dense layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: ArchitectureName,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Dense 784→300→100→10.
pub fn build_lenet_300_100() -> Architecture {
    Architecture {
        name: ArchitectureName::Lenet300_100,
        input_shape: vec![784],
        classes: 10,
        layers: vec![
            LayerSpec::dense(784, 300),
            LayerSpec::dense(300, 100),
            LayerSpec::dense(100, 10),
        ],
    }
}

/// conv(3→16, 3×3, pad 1) → relu → conv(16→32, 3×3, stride 2, pad 1) → relu
/// → flatten → dense(8192→10), on 3×32×32 inputs.
pub fn build_small_cnn() -> Architecture {
    Architecture {
        name: ArchitectureName::SmallCnn,
        input_shape: vec![3, 32, 32],
        classes: 10,
        layers: vec![
            LayerSpec::conv(3, 16, 3, 1, 1),
            LayerSpec::conv(16, 32, 3, 2, 1),
            LayerSpec::dense(16 * 16 * 32, 10),
        ],
    }
}

#[derive(Clone, Copy, Debug)]
enum Activation {
    Flat(usize),
    Image {
        c: usize,
        h: usize,
        w: usize,
        layout: Layout,
    },
}

impl Activation {
    fn features(&self) -> usize {
        match *self {
            Activation::Flat(n) => n,
            Activation::Image { c, h, w, .. } => c * h * w,
        }
    }
}

impl Architecture {
    fn input_activation(&self) -> Result<Activation> {
        match self.input_shape.as_slice() {
            [n] => Ok(Activation::Flat(*n)),
            [c, h, w] => Ok(Activation::Image {
                c: *c,
                h: *h,
                w: *w,
                layout: Layout::Nchw,
            }),
            other => Err(shape_err("architecture", format!("unsupported input shape {other:?}"))),
        }
    }

    /// Checks that layer dimensions chain and the last layer emits `classes`.
    pub fn validate(&self) -> Result<()> {
        let mut act = self.input_activation()?;
        for (i, layer) in self.layers.iter().enumerate() {
            act = match (layer.kind, act) {
                (LayerKind::Dense, a) => {
                    if a.features() != layer.inputs {
                        return Err(shape_err(
                            "architecture",
                            format!("layer {i} expects {} inputs, gets {}", layer.inputs, a.features()),
                        ));
                    }
                    Activation::Flat(layer.outputs)
                }
                (LayerKind::Conv2d { .. }, Activation::Flat(_)) => {
                    return Err(shape_err("architecture", format!("layer {i}: conv after flatten")));
                }
                (
                    LayerKind::Conv2d {
                        kernel,
                        stride,
                        padding,
                    },
                    Activation::Image { c, h, w, .. },
                ) => {
                    if c != layer.inputs {
                        return Err(shape_err(
                            "architecture",
                            format!("layer {i} expects {} channels, gets {c}", layer.inputs),
                        ));
                    }
                    let g = ConvGeometry {
                        batch: 1,
                        channels: c,
                        height: h,
                        width: w,
                        kernel_h: kernel,
                        kernel_w: kernel,
                        stride,
                        padding,
                        layout: Layout::Nhwc,
                    };
                    g.validate()?;
                    Activation::Image {
                        c: layer.outputs,
                        h: g.out_h(),
                        w: g.out_w(),
                        layout: Layout::Nhwc,
                    }
                }
            };
        }
        if act.features() != self.classes {
            return Err(shape_err(
                "architecture",
                format!("final layer emits {} values, expected {}", act.features(), self.classes),
            ));
        }
        Ok(())
    }

    pub fn prunable_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].prunable).collect()
    }

    pub fn prunable_weight_count(&self) -> usize {
        self.layers.iter().filter(|l| l.prunable).map(LayerSpec::weight_count).sum()
    }
}

/// Weight distribution used by [`Network::initialize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Kaiming normal, fan-in mode: std √(2/fan_in) for layers feeding a
    /// ReLU and √(1/fan_in) for the output layer.
    #[default]
    KaimingNormal,
    /// √(2/fan_in) on every layer, including the output layer.
    KaimingNormalUniformGain,
    /// All weights zero.
    Zeros,
}

impl InitScheme {
    pub fn std(self, arch: &Architecture, layer: usize) -> f64 {
        let spec = &arch.layers[layer];
        let last = layer + 1 == arch.layers.len();
        let gain = match self {
            InitScheme::KaimingNormal if last => 1.0,
            InitScheme::KaimingNormal | InitScheme::KaimingNormalUniformGain => 2.0,
            InitScheme::Zeros => 0.0,
        };
        (gain / spec.fan_in() as f64).sqrt()
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kaiming_normal" => Ok(Self::KaimingNormal),
            "kaiming_normal_uniform_gain" => Ok(Self::KaimingNormalUniformGain),
            "zeros" => Ok(Self::Zeros),
            other => Err(Error::InvalidArgument(format!("unknown init scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor<f32>,
    pub bias: Option<Tensor<f32>>,
}

/// Tape handles for one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub weight: Var,
    pub bias: Option<Var>,
}

/// An architecture with concrete parameters. Parameters are stored in single
/// precision and widened exactly to `f64` for scoring and analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub arch: Architecture,
    pub init: InitSpec,
    pub params: Vec<LayerParams>,
}

impl Network {
    /// Draws every weight tensor from `scheme` using a per-layer stream
    /// derived from `seed`; biases start at zero.
    pub fn initialize(arch: &Architecture, scheme: InitScheme, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = arch
            .layers
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let std = scheme.std(arch, i);
                let mut rng = rng_from_seed(derive_seed(seed, stream::INIT_LAYER + i as u64));
                let data = (0..spec.weight_count())
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        (z * std) as f32
                    })
                    .collect();
                LayerParams {
                    weight: Tensor::new(spec.weight_shape(), data).expect("shape matches count"),
                    bias: spec.has_bias.then(|| Tensor::zeros(&[spec.outputs])),
                }
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            init: InitSpec { scheme, seed },
            params,
        })
    }

    /// Builds a network from explicit parameters, checking shapes.
    pub fn from_params(arch: &Architecture, init: InitSpec, params: Vec<LayerParams>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.layers.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} layers in architecture, {} parameter sets",
                arch.layers.len(),
                params.len()
            )));
        }
        for (i, (spec, p)) in arch.layers.iter().zip(&params).enumerate() {
            if p.weight.shape() != spec.weight_shape().as_slice() {
                return Err(shape_err(
                    "network",
                    format!("layer {i} weight {:?}, expected {:?}", p.weight.shape(), spec.weight_shape()),
                ));
            }
            match (&p.bias, spec.has_bias) {
                (Some(b), true) if b.shape() == [spec.outputs] => {}
                (None, false) => {}
                _ => return Err(shape_err("network", format!("layer {i} bias does not match spec"))),
            }
        }
        Ok(Self {
            arch: arch.clone(),
            init,
            params,
        })
    }

    pub fn prunable_layers(&self) -> Vec<usize> {
        self.arch.prunable_layers()
    }

    /// The weight tensors of prunable layers, in layer order.
    pub fn prunable_weights(&self) -> Vec<&Tensor<f32>> {
        self.prunable_layers().into_iter().map(|i| &self.params[i].weight).collect()
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.arch == other.arch
    }

    /// Registers parameters as tape leaves (biases optional).
    pub fn leaves<T: Scalar>(&self, tape: &mut Tape<T>) -> Vec<ParamVars> {
        self.params
            .iter()
            .map(|p| ParamVars {
                weight: tape.leaf(p.weight.cast()),
                bias: p.bias.as_ref().map(|b| tape.leaf(b.cast())),
            })
            .collect()
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        let mut s = vec![batch];
        s.extend_from_slice(&self.arch.input_shape);
        s
    }

    /// Logits for a batch as plain values, in double precision.
    pub fn logits(&self, batch: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut tape = Tape::new();
        let params = self.leaves(&mut tape);
        let x = tape.constant(batch.clone());
        let out = forward(&self.arch, &mut tape, &params, x, true)?;
        Ok(tape.value(out).clone())
    }
}

/// Records the forward pass of `arch` on `tape`. `input` has shape
/// `[batch, ..input_shape]`; the result is `[batch, classes]`. With
/// `use_bias = false` the bias vectors are skipped.
pub fn forward<T: Scalar>(
    arch: &Architecture,
    tape: &mut Tape<T>,
    params: &[ParamVars],
    input: Var,
    use_bias: bool,
) -> Result<Var> {
    if params.len() != arch.layers.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "{} layers but {} parameter sets",
            arch.layers.len(),
            params.len()
        )));
    }
    let in_shape = tape.value(input).shape().to_vec();
    if in_shape.len() != arch.input_shape.len() + 1 || in_shape[1..] != arch.input_shape[..] {
        return Err(shape_err(
            "forward",
            format!("input {in_shape:?} does not match [batch, {:?}]", arch.input_shape),
        ));
    }
    let batch = in_shape[0];
    let mut act = arch.input_activation()?;
    let mut x = input;
    let last = arch.layers.len() - 1;
    for (i, (spec, p)) in arch.layers.iter().zip(params).enumerate() {
        let bias = if use_bias { p.bias } else { None };
        match spec.kind {
            LayerKind::Dense => {
                x = tape.reshape(x, &[batch, act.features()])?;
                x = tape.matmul(x, p.weight, false, true)?;
                if let Some(b) = bias {
                    x = tape.add_bias(x, b)?;
                }
                act = Activation::Flat(spec.outputs);
            }
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            } => {
                let Activation::Image { c, h, w, layout } = act else {
                    return Err(shape_err("forward", format!("layer {i}: conv after flatten")));
                };
                let geom = ConvGeometry {
                    batch,
                    channels: c,
                    height: h,
                    width: w,
                    kernel_h: kernel,
                    kernel_w: kernel,
                    stride,
                    padding,
                    layout,
                };
                x = tape.conv2d(x, p.weight, bias, geom)?;
                act = Activation::Image {
                    c: spec.outputs,
                    h: geom.out_h(),
                    w: geom.out_w(),
                    layout: Layout::Nhwc,
                };
            }
        }
        if i != last {
            x = tape.relu(x)?;
        }
    }
    tape.reshape(x, &[batch, arch.classes])
}
