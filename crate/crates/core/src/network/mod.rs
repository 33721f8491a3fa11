//! A small convolutional network with a shared trunk and three task
//! heads (detection, pose, action), written directly against ndarray.
//!
//! The trunk is a stack of stride-2 convolutions followed by two shared
//! fully-connected layers whose activations double as SVM features for
//! the rescoring stage. Heads are linear layers on the last shared
//! activation; detection and action outputs go through softmax, pose
//! coordinates are unbounded.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, LossTraceRow, TrainConfig, TrainSet, VecTrainSet};

use ndarray::{Array1, Array2, Array3, Array4, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{softmax, HeadOutputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// (channels, height, width) of a region tensor.
    pub input_shape: (usize, usize, usize),
    pub conv_layers: Vec<ConvSpec>,
    pub fc6_width: usize,
    pub fc7_width: usize,
    pub num_keypoints: usize,
    pub num_actions: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_shape: (3, 16, 16),
            conv_layers: vec![
                ConvSpec {
                    out_channels: 8,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 32,
                    kernel: 3,
                    stride: 2,
                },
            ],
            fc6_width: 64,
            fc7_width: 64,
            num_keypoints: 13,
            num_actions: 10,
        }
    }
}

impl NetworkConfig {
    /// (channels, height, width) after each conv layer.
    pub fn conv_output_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (mut c, mut h, mut w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("input shape must be positive".into()));
        }
        let mut shapes = Vec::new();
        for spec in &self.conv_layers {
            if spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0 {
                return Err(Error::Config("conv spec must be positive".into()));
            }
            if h < spec.kernel || w < spec.kernel {
                return Err(Error::Config(format!(
                    "kernel {} does not fit spatial size {}x{}",
                    spec.kernel, h, w
                )));
            }
            h = (h - spec.kernel) / spec.stride + 1;
            w = (w - spec.kernel) / spec.stride + 1;
            c = spec.out_channels;
            shapes.push((c, h, w));
        }
        Ok(shapes)
    }

    pub fn flat_dim(&self) -> Result<usize> {
        let shapes = self.conv_output_shapes()?;
        let (c, h, w) = *shapes.last().unwrap_or(&self.input_shape);
        Ok(c * h * w)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub conv_w: Vec<Array4<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub fc6_w: Array2<f64>,
    pub fc6_b: Array1<f64>,
    pub fc7_w: Array2<f64>,
    pub fc7_b: Array1<f64>,
    pub det_w: Array2<f64>,
    pub det_b: Array1<f64>,
    pub pose_w: Array2<f64>,
    pub pose_b: Array1<f64>,
    pub action_w: Array2<f64>,
    pub action_b: Array1<f64>,
}

/// Gradient (or momentum) buffers matching [`Network`]'s parameters.
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub conv_w: Vec<Array4<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub fc6_w: Array2<f64>,
    pub fc6_b: Array1<f64>,
    pub fc7_w: Array2<f64>,
    pub fc7_b: Array1<f64>,
    pub det_w: Array2<f64>,
    pub det_b: Array1<f64>,
    pub pose_w: Array2<f64>,
    pub pose_b: Array1<f64>,
    pub action_w: Array2<f64>,
    pub action_b: Array1<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    conv_inputs: Vec<Array3<f64>>,
    conv_cols: Vec<Array2<f64>>,
    conv_preacts: Vec<Array2<f64>>,
    flat: Array1<f64>,
    z6: Array1<f64>,
    a6: Array1<f64>,
    z7: Array1<f64>,
    a7: Array1<f64>,
}

impl ForwardCache {
    /// Activation pattern of every ReLU in the network. Finite-difference
    /// gradient checks are only valid when a perturbation leaves this
    /// pattern unchanged (the loss is smooth on that neighborhood).
    pub fn relu_sign_pattern(&self) -> Vec<bool> {
        let mut signs = Vec::new();
        for pre in &self.conv_preacts {
            signs.extend(pre.iter().map(|&z| z > 0.0));
        }
        signs.extend(self.z6.iter().map(|&z| z > 0.0));
        signs.extend(self.z7.iter().map(|&z| z > 0.0));
        signs
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize) -> impl FnMut() -> f64 + '_ {
    let bound = (6.0 / fan_in as f64).sqrt();
    move || rng.gen_range(-bound..bound)
}

impl Network {
    /// He-style random initialization; biases start at zero.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.conv_output_shapes()?;
        let flat = config.flat_dim()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = config.input_shape.0;
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for spec in &config.conv_layers {
            let fan_in = in_c * spec.kernel * spec.kernel;
            let mut gen = he_uniform(&mut rng, fan_in);
            conv_w.push(Array4::from_shape_simple_fn(
                (spec.out_channels, in_c, spec.kernel, spec.kernel),
                &mut gen,
            ));
            drop(gen);
            conv_b.push(Array1::zeros(spec.out_channels));
            in_c = spec.out_channels;
        }
        let linear = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let mut gen = he_uniform(rng, cols);
            Array2::from_shape_simple_fn((rows, cols), &mut gen)
        };
        let fc6_w = linear(config.fc6_width, flat, &mut rng);
        let fc7_w = linear(config.fc7_width, config.fc6_width, &mut rng);
        let det_w = linear(2, config.fc7_width, &mut rng);
        let pose_w = linear(2 * config.num_keypoints, config.fc7_width, &mut rng);
        let action_w = linear(config.num_actions, config.fc7_width, &mut rng);
        Ok(Self {
            fc6_b: Array1::zeros(config.fc6_width),
            fc7_b: Array1::zeros(config.fc7_width),
            det_b: Array1::zeros(2),
            pose_b: Array1::zeros(2 * config.num_keypoints),
            action_b: Array1::zeros(config.num_actions),
            conv_w,
            conv_b,
            fc6_w,
            fc7_w,
            det_w,
            pose_w,
            action_w,
            config,
        })
    }

    pub fn zero_grads(&self) -> NetworkGrads {
        NetworkGrads {
            conv_w: self.conv_w.iter().map(|w| Array4::zeros(w.raw_dim())).collect(),
            conv_b: self.conv_b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            fc6_w: Array2::zeros(self.fc6_w.raw_dim()),
            fc6_b: Array1::zeros(self.fc6_b.raw_dim()),
            fc7_w: Array2::zeros(self.fc7_w.raw_dim()),
            fc7_b: Array1::zeros(self.fc7_b.raw_dim()),
            det_w: Array2::zeros(self.det_w.raw_dim()),
            det_b: Array1::zeros(self.det_b.raw_dim()),
            pose_w: Array2::zeros(self.pose_w.raw_dim()),
            pose_b: Array1::zeros(self.pose_b.raw_dim()),
            action_w: Array2::zeros(self.action_w.raw_dim()),
            action_b: Array1::zeros(self.action_b.raw_dim()),
        }
    }

    /// All parameter tensors in a fixed order (checkpoint layout order).
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out: Vec<ArrayViewD<'_, f64>> = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w.view().into_dyn());
            out.push(b.view().into_dyn());
        }
        out.push(self.fc6_w.view().into_dyn());
        out.push(self.fc6_b.view().into_dyn());
        out.push(self.fc7_w.view().into_dyn());
        out.push(self.fc7_b.view().into_dyn());
        out.push(self.det_w.view().into_dyn());
        out.push(self.det_b.view().into_dyn());
        out.push(self.pose_w.view().into_dyn());
        out.push(self.pose_b.view().into_dyn());
        out.push(self.action_w.view().into_dyn());
        out.push(self.action_b.view().into_dyn());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out: Vec<ArrayViewMutD<'_, f64>> = Vec::new();
        for (w, b) in self.conv_w.iter_mut().zip(&mut self.conv_b) {
            out.push(w.view_mut().into_dyn());
            out.push(b.view_mut().into_dyn());
        }
        out.push(self.fc6_w.view_mut().into_dyn());
        out.push(self.fc6_b.view_mut().into_dyn());
        out.push(self.fc7_w.view_mut().into_dyn());
        out.push(self.fc7_b.view_mut().into_dyn());
        out.push(self.det_w.view_mut().into_dyn());
        out.push(self.det_b.view_mut().into_dyn());
        out.push(self.pose_w.view_mut().into_dyn());
        out.push(self.pose_b.view_mut().into_dyn());
        out.push(self.action_w.view_mut().into_dyn());
        out.push(self.action_b.view_mut().into_dyn());
        out
    }

    pub fn forward(&self, input: &Array3<f64>) -> Result<HeadOutputs> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Array3<f64>) -> Result<(HeadOutputs, ForwardCache)> {
        let (c, h, w) = self.config.input_shape;
        if input.dim() != (c, h, w) {
            return Err(Error::Incompatible(format!(
                "input shape {:?} does not match configured {:?}",
                input.dim(),
                (c, h, w)
            )));
        }
        let mut x = input.clone();
        let mut conv_inputs = Vec::new();
        let mut conv_cols = Vec::new();
        let mut conv_preacts = Vec::new();
        for (i, spec) in self.config.conv_layers.iter().enumerate() {
            let cols = im2col(&x, spec.kernel, spec.stride);
            let w2d = self
                .conv_w[i]
                .view()
                .into_shape((spec.out_channels, cols.dim().0))
                .expect("conv weight reshape");
            let mut pre = w2d.dot(&cols);
            for (mut row, b) in pre.axis_iter_mut(Axis(0)).zip(self.conv_b[i].iter()) {
                row += *b;
            }
            let (in_h, in_w) = (x.dim().1, x.dim().2);
            let oh = (in_h - spec.kernel) / spec.stride + 1;
            let ow = (in_w - spec.kernel) / spec.stride + 1;
            let act = pre.mapv(|v| v.max(0.0));
            conv_inputs.push(x);
            conv_cols.push(cols);
            x = act
                .into_shape((spec.out_channels, oh, ow))
                .expect("conv output reshape");
            conv_preacts.push(pre);
        }
        let flat = Array1::from_iter(x.iter().cloned());
        let z6 = self.fc6_w.dot(&flat) + &self.fc6_b;
        let a6 = z6.mapv(|v| v.max(0.0));
        let z7 = self.fc7_w.dot(&a6) + &self.fc7_b;
        let a7 = z7.mapv(|v| v.max(0.0));
        let det_logits = self.det_w.dot(&a7) + &self.det_b;
        let pose = self.pose_w.dot(&a7) + &self.pose_b;
        let action_logits = self.action_w.dot(&a7) + &self.action_b;
        let det_probs = softmax(det_logits.as_slice().unwrap());
        let action_probs = softmax(action_logits.as_slice().unwrap());
        let outputs = HeadOutputs {
            det_probs: [det_probs[0], det_probs[1]],
            pose_coords: pose.to_vec(),
            action_probs,
            fc6: a6.to_vec(),
            fc7: a7.to_vec(),
        };
        let cache = ForwardCache {
            conv_inputs,
            conv_cols,
            conv_preacts,
            flat,
            z6,
            a6,
            z7,
            a7,
        };
        Ok((outputs, cache))
    }

    /// Reverse pass. `det_grad` and `action_grad` are gradients with
    /// respect to head logits, `pose_grad` with respect to the raw pose
    /// outputs (the shapes the loss module produces).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        det_grad: &[f64; 2],
        pose_grad: &[f64],
        action_grad: &[f64],
    ) -> NetworkGrads {
        let mut grads = self.zero_grads();
        let det_g = Array1::from_vec(det_grad.to_vec());
        let pose_g = Array1::from_vec(pose_grad.to_vec());
        let action_g = Array1::from_vec(action_grad.to_vec());

        grads.det_w = outer(&det_g, &cache.a7);
        grads.det_b = det_g.clone();
        grads.pose_w = outer(&pose_g, &cache.a7);
        grads.pose_b = pose_g.clone();
        grads.action_w = outer(&action_g, &cache.a7);
        grads.action_b = action_g.clone();

        let d_a7 = self.det_w.t().dot(&det_g)
            + self.pose_w.t().dot(&pose_g)
            + self.action_w.t().dot(&action_g);
        let dz7 = relu_backward(&d_a7, &cache.z7);
        grads.fc7_w = outer(&dz7, &cache.a6);
        grads.fc7_b = dz7.clone();

        let d_a6 = self.fc7_w.t().dot(&dz7);
        let dz6 = relu_backward(&d_a6, &cache.z6);
        grads.fc6_w = outer(&dz6, &cache.flat);
        grads.fc6_b = dz6.clone();

        let mut d_flat = self.fc6_w.t().dot(&dz6);
        let shapes = self.config.conv_output_shapes().expect("validated config");
        let mut d_out3 = d_flat
            .view_mut()
            .into_shape(*shapes.last().unwrap())
            .expect("flat gradient reshape")
            .to_owned();

        for i in (0..self.config.conv_layers.len()).rev() {
            let spec = self.config.conv_layers[i];
            let (oc, oh, ow) = if i < shapes.len() { shapes[i] } else { unreachable!() };
            let d_out2 = d_out3
                .into_shape((oc, oh * ow))
                .expect("conv gradient reshape");
            let d_pre = relu_backward2(&d_out2, &cache.conv_preacts[i]);
            let w2d_dim = self.conv_w[i].len() / spec.out_channels;
            // `dot` can return a column-major result (it does when one
            // operand is a transposed view), and `into_shape` follows
            // memory order; force row-major first so the reshape maps
            // (oc, ic*k*k) onto (oc, ic, kh, kw) logically.
            grads.conv_w[i] = d_pre
                .dot(&cache.conv_cols[i].t())
                .as_standard_layout()
                .into_owned()
                .into_shape(self.conv_w[i].raw_dim())
                .expect("conv weight gradient reshape");
            grads.conv_b[i] = d_pre.sum_axis(Axis(1));
            let w2d = self
                .conv_w[i]
                .view()
                .into_shape((spec.out_channels, w2d_dim))
                .expect("conv weight reshape");
            let d_cols = w2d.t().dot(&d_pre);
            d_out3 = col2im(
                &d_cols,
                cache.conv_inputs[i].dim(),
                spec.kernel,
                spec.stride,
            );
        }
        grads
    }

    /// One SGD-with-momentum step: `v = mu*v + g; p -= lr*v`.
    pub fn sgd_step(&mut self, velocity: &mut NetworkGrads, grads: &NetworkGrads, lr: f64, mu: f64) {
        for ((mut p, mut v), g) in self
            .tensors_mut()
            .into_iter()
            .zip(velocity.tensors_mut())
            .zip(grads.tensors())
        {
            ndarray::Zip::from(&mut v).and(&g).for_each(|v, &g| *v = mu * *v + g);
            ndarray::Zip::from(&mut p).and(&v).for_each(|p, &v| *p -= lr * v);
        }
    }
}

impl NetworkGrads {
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out: Vec<ArrayViewD<'_, f64>> = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w.view().into_dyn());
            out.push(b.view().into_dyn());
        }
        out.push(self.fc6_w.view().into_dyn());
        out.push(self.fc6_b.view().into_dyn());
        out.push(self.fc7_w.view().into_dyn());
        out.push(self.fc7_b.view().into_dyn());
        out.push(self.det_w.view().into_dyn());
        out.push(self.det_b.view().into_dyn());
        out.push(self.pose_w.view().into_dyn());
        out.push(self.pose_b.view().into_dyn());
        out.push(self.action_w.view().into_dyn());
        out.push(self.action_b.view().into_dyn());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out: Vec<ArrayViewMutD<'_, f64>> = Vec::new();
        for (w, b) in self.conv_w.iter_mut().zip(&mut self.conv_b) {
            out.push(w.view_mut().into_dyn());
            out.push(b.view_mut().into_dyn());
        }
        out.push(self.fc6_w.view_mut().into_dyn());
        out.push(self.fc6_b.view_mut().into_dyn());
        out.push(self.fc7_w.view_mut().into_dyn());
        out.push(self.fc7_b.view_mut().into_dyn());
        out.push(self.det_w.view_mut().into_dyn());
        out.push(self.det_b.view_mut().into_dyn());
        out.push(self.pose_w.view_mut().into_dyn());
        out.push(self.pose_b.view_mut().into_dyn());
        out.push(self.action_w.view_mut().into_dyn());
        out.push(self.action_b.view_mut().into_dyn());
        out
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) {
        for (mut a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            ndarray::Zip::from(&mut a).and(&b).for_each(|a, &b| *a += b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for mut a in self.tensors_mut() {
            a.mapv_inplace(|v| v * c);
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[[i, j]] = ai * bj;
        }
    }
    out
}

fn relu_backward(upstream: &Array1<f64>, preact: &Array1<f64>) -> Array1<f64> {
    let mut out = upstream.clone();
    for (o, &z) in out.iter_mut().zip(preact.iter()) {
        if z <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

fn relu_backward2(upstream: &Array2<f64>, preact: &Array2<f64>) -> Array2<f64> {
    let mut out = upstream.clone();
    for (o, &z) in out.iter_mut().zip(preact.iter()) {
        if z <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Unfold (C, H, W) into (C*k*k, oh*ow) patch columns.
fn im2col(input: &Array3<f64>, kernel: usize, stride: usize) -> Array2<f64> {
    let (c, h, w) = input.dim();
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut cols = Array2::zeros((c * kernel * kernel, oh * ow));
    for oy in 0..oh {
        for ox in 0..ow {
            let col = oy * ow + ox;
            let mut row = 0;
            for ch in 0..c {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        cols[[row, col]] = input[[ch, oy * stride + ky, ox * stride + kx]];
                        row += 1;
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the column gradients back onto the input shape.
fn col2im(
    d_cols: &Array2<f64>,
    input_dim: (usize, usize, usize),
    kernel: usize,
    stride: usize,
) -> Array3<f64> {
    let (c, h, w) = input_dim;
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Array3::zeros((c, h, w));
    for oy in 0..oh {
        for ox in 0..ow {
            let col = oy * ow + ox;
            let mut row = 0;
            for ch in 0..c {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        out[[ch, oy * stride + ky, ox * stride + kx]] += d_cols[[row, col]];
                        row += 1;
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionScoreMode {
    /// Score for (person, action a) is `p1 * p_a`.
    ProductWithPerson,
    /// Score is the action probability alone.
    ActionOnly,
}

/// Combine the detection and action heads into one score per action.
pub fn score_action_detection(outputs: &HeadOutputs, mode: ActionScoreMode) -> Vec<f64> {
    match mode {
        ActionScoreMode::ProductWithPerson => outputs
            .action_probs
            .iter()
            .map(|p| outputs.det_probs[1] * p)
            .collect(),
        ActionScoreMode::ActionOnly => outputs.action_probs.clone(),
    }
}
