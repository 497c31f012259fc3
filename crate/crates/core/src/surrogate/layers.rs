//! Layer primitives with exact forward and backward passes.
//!
//! Activations are `height × width × channels` tensors stored row-major
//! with interleaved channels. Convolution kernels are laid out
//! `[out][ky][kx][in]`, dense weights `[out][in]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub const fn vector(len: usize) -> Self {
        Shape::new(1, 1, len)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: vec![0.0; out_channels * kernel * kernel * in_channels],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn widx(&self, o: usize, ky: usize, kx: usize) -> usize {
        ((o * self.kernel + ky) * self.kernel + kx) * self.in_channels
    }

    /// Input coordinate for output `o` and tap `k`, if inside the input.
    #[inline]
    fn tap(&self, o: usize, k: usize, len: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.padding)
            .filter(|&i| i < len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    /// Non-overlapping `size × size` max pooling.
    MaxPool { size: usize },
    Flatten,
    Dense(Dense),
}

/// Gradients produced by [`Layer::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Tensor,
    /// Same layout as the layer's weights; empty for parameter-free layers.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mismatch = |msg: String| Error::ShapeMismatch {
            expected: msg,
            actual: input.to_string(),
        };
        match self {
            Layer::Conv2d(c) => {
                if input.channels != c.in_channels {
                    return Err(mismatch(format!("{} input channels", c.in_channels)));
                }
                if c.kernel == 0 || c.stride == 0 {
                    return Err(Error::InvalidArgument("conv kernel and stride must be positive".into()));
                }
                let (ph, pw) = (input.height + 2 * c.padding, input.width + 2 * c.padding);
                if ph < c.kernel || pw < c.kernel {
                    return Err(mismatch(format!("spatial size >= kernel {}", c.kernel)));
                }
                Ok(Shape::new(
                    (ph - c.kernel) / c.stride + 1,
                    (pw - c.kernel) / c.stride + 1,
                    c.out_channels,
                ))
            }
            Layer::Relu => Ok(input),
            Layer::MaxPool { size } => {
                if *size == 0 || input.height < *size || input.width < *size {
                    return Err(mismatch(format!("spatial size >= pool {size}")));
                }
                Ok(Shape::new(input.height / size, input.width / size, input.channels))
            }
            Layer::Flatten => Ok(Shape::vector(input.len())),
            Layer::Dense(d) => {
                if input.height != 1 || input.width != 1 || input.channels != d.inputs {
                    return Err(mismatch(format!("1x1x{}", d.inputs)));
                }
                Ok(Shape::vector(d.outputs))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }

    /// `(weights, bias)` for parametrized layers.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    /// Fan-in used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.kernel * c.kernel * c.in_channels,
            Layer::Dense(d) => d.inputs,
            _ => 0,
        }
    }

    /// The input shape must already be valid for this layer.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape)?;
        let x = &input.data;
        let data = match self {
            Layer::Conv2d(c) => {
                let (ih, iw, ic) = (input.shape.height, input.shape.width, input.shape.channels);
                let oc = c.out_channels;
                let mut out = vec![0.0; out_shape.len()];
                for oy in 0..out_shape.height {
                    for ox in 0..out_shape.width {
                        let ob = (oy * out_shape.width + ox) * oc;
                        out[ob..ob + oc].copy_from_slice(&c.bias);
                        for ky in 0..c.kernel {
                            let Some(iy) = c.tap(oy, ky, ih) else { continue };
                            for kx in 0..c.kernel {
                                let Some(ix) = c.tap(ox, kx, iw) else { continue };
                                let xin = &x[(iy * iw + ix) * ic..][..ic];
                                for o in 0..oc {
                                    let w = &c.weights[c.widx(o, ky, kx)..][..ic];
                                    out[ob + o] += dot(w, xin);
                                }
                            }
                        }
                    }
                }
                out
            }
            Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Layer::MaxPool { .. } => {
                let mut out = vec![0.0; out_shape.len()];
                for (slot, src) in self.pool_argmax(input).into_iter().enumerate() {
                    out[slot] = x[src];
                }
                out
            }
            Layer::Flatten => x.clone(),
            Layer::Dense(d) => (0..d.outputs)
                .map(|o| d.bias[o] + dot(&d.weights[o * d.inputs..][..d.inputs], x))
                .collect(),
        };
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }

    /// Source index in `input` of each pooled output (first maximum in scan
    /// order wins ties).
    fn pool_argmax(&self, input: &Tensor) -> Vec<usize> {
        let Layer::MaxPool { size } = *self else {
            return Vec::new();
        };
        let (iw, c) = (input.shape.width, input.shape.channels);
        let (oh, ow) = (input.shape.height / size, input.shape.width / size);
        let mut arg = vec![0; oh * ow * c];
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = ((oy * size + dy) * iw + ox * size + dx) * c + ch;
                            if best == usize::MAX || input.data[idx] > input.data[best] {
                                best = idx;
                            }
                        }
                    }
                    arg[(oy * ow + ox) * c + ch] = best;
                }
            }
        }
        arg
    }

    /// Gradient of a scalar loss with respect to the layer input (and, when
    /// `with_params`, its weights and bias), given `grad_out = dL/d output`.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, with_params: bool) -> LayerGrads {
        let x = &input.data;
        let g = &grad_out.data;
        let mut gin = vec![0.0; x.len()];
        let mut gw = Vec::new();
        let mut gb = Vec::new();
        match self {
            Layer::Conv2d(c) => {
                let (ih, iw, ic) = (input.shape.height, input.shape.width, input.shape.channels);
                let (oh, ow, oc) = (grad_out.shape.height, grad_out.shape.width, c.out_channels);
                if with_params {
                    gw = vec![0.0; c.weights.len()];
                    gb = vec![0.0; c.bias.len()];
                }
                for oy in 0..oh {
                    for ox in 0..ow {
                        let ob = (oy * ow + ox) * oc;
                        if with_params {
                            gb.iter_mut().zip(&g[ob..ob + oc]).for_each(|(b, v)| *b += v);
                        }
                        for ky in 0..c.kernel {
                            let Some(iy) = c.tap(oy, ky, ih) else { continue };
                            for kx in 0..c.kernel {
                                let Some(ix) = c.tap(ox, kx, iw) else { continue };
                                let ib = (iy * iw + ix) * ic;
                                for o in 0..oc {
                                    let go = g[ob + o];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    let wb = c.widx(o, ky, kx);
                                    axpy(go, &c.weights[wb..wb + ic], &mut gin[ib..ib + ic]);
                                    if with_params {
                                        axpy(go, &x[ib..ib + ic], &mut gw[wb..wb + ic]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Layer::Relu => {
                for ((gi, xi), go) in gin.iter_mut().zip(x).zip(g) {
                    if *xi > 0.0 {
                        *gi = *go;
                    }
                }
            }
            Layer::MaxPool { .. } => {
                for (slot, src) in self.pool_argmax(input).into_iter().enumerate() {
                    gin[src] += g[slot];
                }
            }
            Layer::Flatten => gin.copy_from_slice(g),
            Layer::Dense(d) => {
                for (o, &go) in g.iter().enumerate() {
                    axpy(go, &d.weights[o * d.inputs..][..d.inputs], &mut gin);
                }
                if with_params {
                    gw = vec![0.0; d.weights.len()];
                    for o in 0..d.outputs {
                        axpy(g[o], x, &mut gw[o * d.inputs..][..d.inputs]);
                    }
                    gb = g.clone();
                }
            }
        }
        LayerGrads {
            input: Tensor {
                shape: input.shape,
                data: gin,
            },
            weights: gw,
            bias: gb,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Softmax cross-entropy: `(loss, dL/dlogits)` with `dL/dlogits = softmax − onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut grad = probs;
    grad[label] -= 1.0;
    (lse - logits[label], grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
