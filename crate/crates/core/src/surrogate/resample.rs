//! Resizing between frame resolution and the surrogate input shape.
//!
//! Downsampling uses a triangle filter whose support grows with the scale
//! factor, so every source pixel contributes to some output pixel and
//! therefore receives gradient. Gradients travel back through the exact
//! transpose of the resize.

use super::{Model, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

fn axis_taps(src: usize, dst: usize) -> Vec<Taps> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    (0..dst)
        .map(|o| {
            let centre = (o as f64 + 0.5) * scale - 0.5;
            let lo = (centre - support).ceil().max(0.0) as usize;
            let hi = ((centre + support).floor() as usize).min(src - 1);
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|i| (1.0 - (i as f64 - centre).abs() / support).max(0.0))
                .collect();
            // trim zero-weight ends so identity resizes stay exact
            let first = weights.iter().position(|w| *w > 0.0).unwrap_or(0);
            let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
            weights = weights[first..=last].to_vec();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps {
                start: lo + first,
                weights,
            }
        })
        .collect()
}

/// Separable linear resize `src_w × src_h → dst_w × dst_h` with its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampler {
    src: (usize, usize),
    dst: (usize, usize),
    xs: Vec<Taps>,
    ys: Vec<Taps>,
}

impl Resampler {
    pub fn new(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Result<Self> {
        if src_w == 0 || src_h == 0 || dst_w == 0 || dst_h == 0 {
            return Err(Error::InvalidArgument("resize with an empty side".into()));
        }
        Ok(Resampler {
            src: (src_w, src_h),
            dst: (dst_w, dst_h),
            xs: axis_taps(src_w, dst_w),
            ys: axis_taps(src_h, dst_h),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    /// Resize interleaved `channels`-channel data.
    pub fn apply(&self, src: &[f64], channels: usize) -> Vec<f64> {
        let ((sw, sh), (dw, dh)) = (self.src, self.dst);
        debug_assert_eq!(src.len(), sw * sh * channels);
        // horizontal pass: sh × dw
        let mut mid = vec![0.0; sh * dw * channels];
        for y in 0..sh {
            for (ox, t) in self.xs.iter().enumerate() {
                let out = &mut mid[(y * dw + ox) * channels..][..channels];
                for (k, w) in t.weights.iter().enumerate() {
                    let s = &src[(y * sw + t.start + k) * channels..][..channels];
                    out.iter_mut().zip(s).for_each(|(o, v)| *o += w * v);
                }
            }
        }
        let mut dst = vec![0.0; dh * dw * channels];
        for (oy, t) in self.ys.iter().enumerate() {
            let out = &mut dst[oy * dw * channels..][..dw * channels];
            for (k, w) in t.weights.iter().enumerate() {
                let row = &mid[(t.start + k) * dw * channels..][..dw * channels];
                out.iter_mut().zip(row).for_each(|(o, v)| *o += w * v);
            }
        }
        dst
    }

    /// Transpose of [`Resampler::apply`]: maps a gradient at the destination
    /// resolution to the source resolution.
    pub fn adjoint(&self, grad: &[f64], channels: usize) -> Vec<f64> {
        let ((sw, sh), (dw, dh)) = (self.src, self.dst);
        debug_assert_eq!(grad.len(), dw * dh * channels);
        let mut mid = vec![0.0; sh * dw * channels];
        for (oy, t) in self.ys.iter().enumerate() {
            let g = &grad[oy * dw * channels..][..dw * channels];
            for (k, w) in t.weights.iter().enumerate() {
                let row = &mut mid[(t.start + k) * dw * channels..][..dw * channels];
                row.iter_mut().zip(g).for_each(|(r, v)| *r += w * v);
            }
        }
        let mut src = vec![0.0; sw * sh * channels];
        for y in 0..sh {
            for (ox, t) in self.xs.iter().enumerate() {
                let g = &mid[(y * dw + ox) * channels..][..channels];
                for (k, w) in t.weights.iter().enumerate() {
                    let s = &mut src[(y * sw + t.start + k) * channels..][..channels];
                    s.iter_mut().zip(g).for_each(|(o, v)| *o += w * v);
                }
            }
        }
        src
    }
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Maps frame pixels to a model input and model input gradients back to
/// frame pixels: channel adaptation followed by a resize.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBridge {
    frame_channels: usize,
    model: Shape,
    resampler: Resampler,
}

impl InputBridge {
    pub fn new(model: &Model, width: usize, height: usize, channels: usize) -> Result<Self> {
        let shape = model.input_shape();
        let ok = channels == shape.channels || (channels == 1 && shape.channels == 3) || (channels == 3 && shape.channels == 1);
        if !ok {
            return Err(Error::ShapeMismatch {
                expected: format!("frame with {} channels (or 1/3 convertible)", shape.channels),
                actual: format!("{channels} channels"),
            });
        }
        Ok(InputBridge {
            frame_channels: channels,
            model: shape,
            resampler: Resampler::new(width, height, shape.width, shape.height)?,
        })
    }

    fn adapt_channels(&self, pixels: &[f64]) -> Vec<f64> {
        match (self.frame_channels, self.model.channels) {
            (1, 3) => pixels.iter().flat_map(|v| [*v; 3]).collect(),
            (3, 1) => pixels
                .chunks_exact(3)
                .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
                .collect(),
            _ => pixels.to_vec(),
        }
    }

    pub fn to_model_input(&self, pixels: &[f64]) -> Tensor {
        let adapted = self.adapt_channels(pixels);
        let data = if self.resampler.is_identity() {
            adapted
        } else {
            self.resampler.apply(&adapted, self.model.channels)
        };
        Tensor {
            shape: self.model,
            data,
        }
    }

    /// Gradient with respect to the frame pixels, given the gradient with
    /// respect to the model input.
    pub fn gradient_to_frame(&self, grad: &Tensor) -> Vec<f64> {
        let g = if self.resampler.is_identity() {
            grad.data.clone()
        } else {
            self.resampler.adjoint(&grad.data, self.model.channels)
        };
        match (self.frame_channels, self.model.channels) {
            (1, 3) => g.chunks_exact(3).map(|c| c[0] + c[1] + c[2]).collect(),
            (3, 1) => g.iter().flat_map(|v| LUMA.map(|l| l * v)).collect(),
            _ => g,
        }
    }
}
