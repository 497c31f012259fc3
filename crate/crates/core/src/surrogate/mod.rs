//! Small convolutional classifier used only as a source of input gradients.

mod layers;
mod resample;
mod weights;

pub use layers::{softmax, softmax_cross_entropy, Conv2d, Dense, Layer, LayerGrads, Shape, Tensor};
pub use resample::{InputBridge, Resampler};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{frame_rng, stream};

/// Class index in `[0, classes)`.
pub type Label = usize;

pub const DEFAULT_DESCRIPTOR: &str = "\
input 64 64 3
conv 8 3 1 1
relu
maxpool 2
conv 16 3 1 1
relu
maxpool 2
flatten
dense 64
relu
dense 10
head softmax_cross_entropy
";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input: Shape,
    layers: Vec<Layer>,
    classes: usize,
}

/// Loss, input gradient and per-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub input: Tensor,
    /// `(weights, bias)` gradients per layer, empty for parameter-free layers.
    pub params: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Model {
    /// Build from explicit layers; shapes must chain down to a `1×1×C` output.
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::InvalidArgument("empty input shape".into()));
        }
        let mut shape = input;
        for layer in &layers {
            shape = layer.output_shape(shape)?;
            if let Some((w, b)) = layer.params() {
                if w.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("model weight".into()));
                }
            }
        }
        if shape.height != 1 || shape.width != 1 || shape.channels < 2 {
            return Err(Error::ShapeMismatch {
                expected: "1x1xC logits with C >= 2".into(),
                actual: shape.to_string(),
            });
        }
        Ok(Model {
            input,
            layers,
            classes: shape.channels,
        })
    }

    /// Architecture from descriptor text, all weights zero.
    pub fn from_descriptor(text: &str) -> Result<Self> {
        let bad = |n: usize, msg: String| Error::WeightFormat(format!("descriptor line {}: {msg}", n + 1));
        let mut input = None;
        let mut shape = Shape::new(0, 0, 0);
        let mut layers = Vec::new();
        let mut head = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let op = tokens.next().unwrap_or_default();
            let args: Vec<usize> = match op {
                "head" => Vec::new(),
                _ => tokens
                    .by_ref()
                    .map(|t| t.parse::<usize>().map_err(|_| bad(n, format!("bad integer {t:?}"))))
                    .collect::<Result<_>>()?,
            };
            let want = |k: usize| {
                if args.len() == k {
                    Ok(())
                } else {
                    Err(bad(n, format!("{op} takes {k} arguments")))
                }
            };
            if head {
                return Err(bad(n, "content after head".into()));
            }
            if op != "input" && input.is_none() {
                return Err(bad(n, "first line must be input".into()));
            }
            let layer = match op {
                "input" => {
                    want(3)?;
                    if input.is_some() {
                        return Err(bad(n, "duplicate input".into()));
                    }
                    shape = Shape::new(args[0], args[1], args[2]);
                    input = Some(shape);
                    continue;
                }
                "conv" => {
                    want(4)?;
                    Layer::Conv2d(Conv2d::zeros(shape.channels, args[0], args[1], args[2], args[3]))
                }
                "relu" => {
                    want(0)?;
                    Layer::Relu
                }
                "maxpool" => {
                    want(1)?;
                    Layer::MaxPool { size: args[0] }
                }
                "flatten" => {
                    want(0)?;
                    Layer::Flatten
                }
                "dense" => {
                    want(1)?;
                    Layer::Dense(Dense::zeros(shape.len(), args[0]))
                }
                "head" => {
                    if tokens.next() != Some("softmax_cross_entropy") || tokens.next().is_some() {
                        return Err(bad(n, "only softmax_cross_entropy head is supported".into()));
                    }
                    head = true;
                    continue;
                }
                other => return Err(bad(n, format!("unknown layer {other:?}"))),
            };
            shape = layer
                .output_shape(shape)
                .map_err(|e| bad(n, e.to_string()))?;
            layers.push(layer);
        }
        if !head {
            return Err(Error::WeightFormat("descriptor has no head line".into()));
        }
        let input = input.ok_or_else(|| Error::WeightFormat("descriptor has no input line".into()))?;
        Model::new(input, layers).map_err(|e| Error::WeightFormat(e.to_string()))
    }

    pub fn descriptor(&self) -> String {
        let mut out = format!(
            "input {} {} {}\n",
            self.input.height, self.input.width, self.input.channels
        );
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out += &format!("conv {} {} {} {}\n", c.out_channels, c.kernel, c.stride, c.padding)
                }
                Layer::Relu => out += "relu\n",
                Layer::MaxPool { size } => out += &format!("maxpool {size}\n"),
                Layer::Flatten => out += "flatten\n",
                Layer::Dense(d) => out += &format!("dense {}\n", d.outputs),
            }
        }
        out + "head softmax_cross_entropy\n"
    }

    /// He-uniform weights `U(±sqrt(6 / fan_in))` rounded to f32, zero biases.
    pub fn seeded(descriptor: &str, seed: u64) -> Result<Self> {
        let mut model = Model::from_descriptor(descriptor)?;
        let mut rng = frame_rng(seed, stream::WEIGHTS, 0);
        for layer in &mut model.layers {
            let fan_in = layer.fan_in();
            if let Some((w, _)) = layer.params_mut() {
                let limit = (6.0 / fan_in as f64).sqrt();
                for v in w.iter_mut() {
                    *v = f64::from((rng.random_range(-limit..limit)) as f32);
                }
            }
        }
        Ok(model)
    }

    /// The default 64×64×3, 10-class architecture with seeded weights.
    pub fn default_seeded(seed: u64) -> Self {
        Model::seeded(DEFAULT_DESCRIPTOR, seed).expect("default descriptor is valid")
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for tests and tooling; shapes are not re-validated, so
    /// only parameter values should be changed.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape != self.input || input.data.len() != self.input.len() {
            return Err(Error::ShapeMismatch {
                expected: self.input.to_string(),
                actual: input.shape.to_string(),
            });
        }
        Ok(())
    }

    /// Activations: the input followed by every layer output, logits last.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(acts.last().expect("non-empty"))?;
            // checked per layer: ReLU would otherwise turn NaN into 0
            if next.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("output of layer {i}")));
            }
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.pop().expect("non-empty").data)
    }

    fn check_label(&self, label: Label) -> Result<()> {
        if label >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside [0, {})",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn loss(&self, input: &Tensor, label: Label) -> Result<f64> {
        self.check_label(label)?;
        Ok(softmax_cross_entropy(&self.forward(input)?, label).0)
    }

    fn backprop(&self, input: &Tensor, label: Label, with_params: bool) -> Result<Gradients> {
        self.check_label(label)?;
        let acts = self.forward_trace(input)?;
        let (loss, dlogits) = softmax_cross_entropy(&acts[acts.len() - 1].data, label);
        let mut grad = Tensor::new(Shape::vector(self.classes), dlogits)?;
        let mut params = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let g = layer.backward(&acts[i], &grad, with_params);
            params[i] = (g.weights, g.bias);
            grad = g.input;
        }
        if grad.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input gradient".into()));
        }
        Ok(Gradients {
            loss,
            input: grad,
            params,
        })
    }

    /// Cross-entropy gradient with respect to the input pixels.
    pub fn loss_gradient(&self, input: &Tensor, label: Label) -> Result<Tensor> {
        Ok(self.backprop(input, label, false)?.input)
    }

    /// Loss plus gradients for the input and every parameter.
    pub fn gradients(&self, input: &Tensor, label: Label) -> Result<Gradients> {
        self.backprop(input, label, true)
    }

    /// Argmax of the logits; the lowest index wins ties.
    pub fn classify(&self, input: &Tensor) -> Result<Label> {
        Ok(argmax(&self.forward(input)?))
    }
}

pub fn argmax(values: &[f64]) -> Label {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
