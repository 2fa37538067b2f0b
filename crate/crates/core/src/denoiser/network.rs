//! A small stack of same-padded 2-D convolutions with hand-written backprop.
//!
//! Input planes are the image channels plus one constant plane holding `t/T`.
//! Hidden layers use a smooth activation; the output layer is linear and has
//! one plane per image channel.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EpsilonModel;
use crate::error::{Error, Result};
use crate::field::{ImageField, SeededRng, Shape};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// `x · sigmoid(x)`
    Silu,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (T::one() + (-z).exp()),
        }
    }

    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => {
                let a = z.tanh();
                T::one() - a * a
            }
            Activation::Silu => {
                let s = T::one() / (T::one() + (-z).exp());
                s * (T::one() + z * (T::one() - s))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserArch {
    /// Image channels (the network sees `channels + 1` input planes).
    pub channels: usize,
    pub hidden: Vec<usize>,
    /// Odd square kernel size.
    pub kernel: usize,
    pub activation: Activation,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        Self {
            channels: 1,
            hidden: vec![16, 16],
            kernel: 3,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpec {
    cin: usize,
    cout: usize,
    weight: usize,
    bias: usize,
}

impl DenoiserArch {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Parameter(
                "denoiser needs at least one channel".into(),
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden layer of width 0".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("arch serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let mut widths = vec![self.channels + 1];
        widths.extend(&self.hidden);
        widths.push(self.channels);
        let kk = self.kernel * self.kernel;
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let (cin, cout) = (w[0], w[1]);
                let spec = LayerSpec {
                    cin,
                    cout,
                    weight: offset,
                    bias: offset + cout * cin * kk,
                };
                offset = spec.bias + cout;
                spec
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .last()
            .map(|l| l.bias + l.cout)
            .unwrap_or_default()
    }

    /// `(rows, cols)` of each weight and bias tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let kk = self.kernel * self.kernel;
        self.layers()
            .iter()
            .flat_map(|l| [(l.cout, l.cin * kk), (1, l.cout)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyDenoiser<T> {
    arch: DenoiserArch,
    params: Vec<T>,
}

/// Activations kept from a forward pass for backprop.
struct Tape<T> {
    /// Input planes of each layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> TinyDenoiser<T> {
    /// Weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(arch: DenoiserArch, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let mut params = vec![T::zero(); arch.param_count()];
        let kk = arch.kernel * arch.kernel;
        for l in arch.layers() {
            let scale = (1.0 / (l.cin * kk) as f64).sqrt();
            for p in &mut params[l.weight..l.bias] {
                *p = T::lit(scale * rng.standard_normal());
            }
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: DenoiserArch) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(Self {
            arch,
            params: vec![T::zero(); n],
        })
    }

    pub fn from_params(arch: DenoiserArch, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Checkpoint(format!(
                "architecture expects {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &DenoiserArch {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn check_input(&self, x: &ImageField<T>) -> Result<()> {
        if x.shape().channels != self.arch.channels {
            return Err(Error::ShapeMismatch {
                expected: x.shape().with_channels(self.arch.channels),
                found: x.shape(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &ImageField<T>, t_embed: T) -> (ImageField<T>, Tape<T>) {
        let shape = x.shape();
        let plane = shape.plane();
        let mut input = x.data().to_vec();
        input.extend(std::iter::repeat_n(t_embed, plane));

        let layers = self.arch.layers();
        let mut tape = Tape {
            inputs: Vec::with_capacity(layers.len()),
            pre: Vec::with_capacity(layers.len()),
        };
        for (i, l) in layers.iter().enumerate() {
            let z = self.conv(l, &input, shape);
            let last = i + 1 == layers.len();
            let next = if last {
                z.clone()
            } else {
                z.iter().map(|&v| self.arch.activation.apply(v)).collect()
            };
            tape.inputs.push(std::mem::replace(&mut input, next));
            tape.pre.push(z);
        }
        let out = ImageField::from_vec(shape, input).expect("output planes match channels");
        (out, tape)
    }

    fn conv(&self, l: &LayerSpec, input: &[T], shape: Shape) -> Vec<T> {
        let (h, w) = (shape.height as isize, shape.width as isize);
        let plane = shape.plane();
        let k = self.arch.kernel as isize;
        let pad = k / 2;
        let kk = (k * k) as usize;
        let mut out = vec![T::zero(); l.cout * plane];
        for o in 0..l.cout {
            let bias = self.params[l.bias + o];
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = bias);
            for i in 0..l.cin {
                let src = &input[i * plane..(i + 1) * plane];
                let wbase = l.weight + (o * l.cin + i) * kk;
                for dr in 0..k {
                    for dc in 0..k {
                        let wv = self.params[wbase + (dr * k + dc) as usize];
                        for r in 0..h {
                            let rr = r + dr - pad;
                            if rr < 0 || rr >= h {
                                continue;
                            }
                            for c in 0..w {
                                let cc = c + dc - pad;
                                if cc < 0 || cc >= w {
                                    continue;
                                }
                                dst[(r * w + c) as usize] += wv * src[(rr * w + cc) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂output`.
    fn backward(&self, tape: &Tape<T>, d_out: Vec<T>, shape: Shape, grad: &mut [T]) {
        let (h, w) = (shape.height as isize, shape.width as isize);
        let plane = shape.plane();
        let k = self.arch.kernel as isize;
        let pad = k / 2;
        let kk = (k * k) as usize;
        let layers = self.arch.layers();
        let mut dz = d_out;
        for (li, l) in layers.iter().enumerate().rev() {
            let input = &tape.inputs[li];
            let mut d_in = vec![T::zero(); l.cin * plane];
            for o in 0..l.cout {
                let g = &dz[o * plane..(o + 1) * plane];
                grad[l.bias + o] += g.iter().copied().sum::<T>();
                for i in 0..l.cin {
                    let src = &input[i * plane..(i + 1) * plane];
                    let wbase = l.weight + (o * l.cin + i) * kk;
                    for dr in 0..k {
                        for dc in 0..k {
                            let widx = wbase + (dr * k + dc) as usize;
                            let wv = self.params[widx];
                            let mut acc = T::zero();
                            for r in 0..h {
                                let rr = r + dr - pad;
                                if rr < 0 || rr >= h {
                                    continue;
                                }
                                for c in 0..w {
                                    let cc = c + dc - pad;
                                    if cc < 0 || cc >= w {
                                        continue;
                                    }
                                    let gv = g[(r * w + c) as usize];
                                    let s = (rr * w + cc) as usize;
                                    acc += gv * src[s];
                                    d_in[i * plane + s] += gv * wv;
                                }
                            }
                            grad[widx] += acc;
                        }
                    }
                }
            }
            if li > 0 {
                let pre = &tape.pre[li - 1];
                dz = d_in
                    .iter()
                    .zip(pre)
                    .map(|(&d, &z)| d * self.arch.activation.derivative(z))
                    .collect();
            }
        }
    }

    fn time_embedding(t: usize, sched: &NoiseSchedule<T>) -> T {
        T::lit(t as f64 / sched.steps() as f64)
    }

    /// Forward pass on `x^t` with time embedding `t/T`.
    pub fn epsilon_apply(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        sched.check_index(t)?;
        self.check_input(x_t)?;
        Ok(self.forward(x_t, Self::time_embedding(t, sched)).0)
    }

    /// `‖ε̂(x^t, t) − ε‖²`, accumulating its parameter gradient into `grad`.
    pub fn loss_and_gradient(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
        eps: &ImageField<T>,
        grad: &mut [T],
    ) -> Result<T> {
        sched.check_index(t)?;
        self.check_input(x_t)?;
        x_t.shape().ensure_eq(&eps.shape())?;
        if grad.len() != self.params.len() {
            return Err(Error::Parameter(format!(
                "gradient buffer has {} slots for {} parameters",
                grad.len(),
                self.params.len()
            )));
        }
        let (pred, tape) = self.forward(x_t, Self::time_embedding(t, sched));
        let diff = pred.sub(eps)?;
        let loss = diff.norm_sq();
        let two = T::lit(2.0);
        let d_out = diff.data().iter().map(|&d| two * d).collect();
        self.backward(&tape, d_out, x_t.shape(), grad);
        Ok(loss)
    }

    /// Loss only, without touching gradients.
    pub fn loss(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
        eps: &ImageField<T>,
    ) -> Result<T> {
        let pred = self.epsilon_apply(x_t, t, sched)?;
        Ok(pred.sub(eps)?.norm_sq())
    }
}

impl<T: Scalar> EpsilonModel<T> for TinyDenoiser<T> {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        self.epsilon_apply(x_t, t, sched)
    }
}
