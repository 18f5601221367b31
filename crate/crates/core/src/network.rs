//! Residual convolutional scoring network, forward and backward by hand.
//!
//! The input image is flattened row-major and feeds two parallel paths: a
//! strided 1-D convolution and a tanh affine chain (fc1..fc3). The raw
//! article-count signal re-enters as a residual in front of fc4, the
//! convolution output re-enters in front of fc5, and two sigmoid layers
//! (fc6, output) squash the final score into (0, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureImage, IMAGE_COLS};

pub const CONV_KERNEL: usize = 10;
pub const CONV_STRIDE: usize = 5;
pub const FC_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkHyper {
    /// Image rows; columns are fixed at 11.
    pub image_rows: usize,
    pub conv_filters: usize,
    /// Output widths of fc1..fc6.
    pub widths: [usize; FC_LAYERS],
    pub seed: u64,
}

impl NetworkHyper {
    pub fn new(image_rows: usize, seed: u64) -> Self {
        Self {
            image_rows,
            conv_filters: 4,
            widths: [64, 32, 16, 16, 16, 8],
            seed,
        }
    }

    pub fn image_len(&self) -> usize {
        self.image_rows * IMAGE_COLS
    }

    /// Valid strided windows over the flattened image.
    pub fn conv_windows(&self) -> usize {
        (self.image_len() - CONV_KERNEL) / CONV_STRIDE + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_rows == 0 || self.image_len() < CONV_KERNEL {
            return Err(Error::InvalidConfig(format!(
                "image of {} rows is too small for kernel {CONV_KERNEL}",
                self.image_rows
            )));
        }
        if self.conv_filters == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(
                "conv filter count and fc widths must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Dense matrix stored row-major as out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.cols + col]
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// out[i] = b[i] + sum_j W[i][j] * x[j]
    fn affine(&self, bias: &[f64], input: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            let mut acc = bias[i];
            for (w, x) in self.row(i).iter().zip(input) {
                acc += w * x;
            }
            out[i] = acc;
        }
    }

    /// Accumulates W^T * delta into `out`.
    fn add_t_mul(&self, delta: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            let d = delta[i];
            for (w, o) in self.row(i).iter().zip(out.iter_mut()) {
                *o += w * d;
            }
        }
    }

    /// Accumulates the outer product delta x input.
    fn add_outer(&mut self, delta: &[f64], input: &[f64]) {
        for i in 0..self.rows {
            let d = delta[i];
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (g, x) in row.iter_mut().zip(input) {
                *g += d * x;
            }
        }
    }
}

/// All weights and biases. Also reused as the gradient container, since
/// gradients share every shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub conv_weight: Mat,
    pub conv_bias: Vec<f64>,
    pub fc_weight: Vec<Mat>,
    pub fc_bias: Vec<Vec<f64>>,
    pub out_weight: Mat,
    pub out_bias: f64,
}

impl NetworkParams {
    pub fn zeros(hyper: &NetworkHyper) -> Result<Self> {
        hyper.validate()?;
        let image_len = hyper.image_len();
        let conv_len = hyper.conv_filters * hyper.conv_windows();
        let w = &hyper.widths;
        let fc_inputs = [
            image_len,
            w[0],
            w[1],
            1 + w[2],        // data1 residual prepended to fc3
            conv_len + w[3], // conv output prepended to fc4
            w[4],
        ];
        let fc_weight = (0..FC_LAYERS)
            .map(|l| Mat::zeros(w[l], fc_inputs[l]))
            .collect();
        let fc_bias = (0..FC_LAYERS).map(|l| vec![0.0; w[l]]).collect();
        Ok(Self {
            conv_weight: Mat::zeros(hyper.conv_filters, CONV_KERNEL),
            conv_bias: vec![0.0; hyper.conv_filters],
            fc_weight,
            fc_bias,
            out_weight: Mat::zeros(1, w[5]),
            out_bias: 0.0,
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.conv_weight.data.len() + self.conv_bias.len();
        for (w, b) in self.fc_weight.iter().zip(&self.fc_bias) {
            n += w.data.len() + b.len();
        }
        n + self.out_weight.data.len() + 1
    }

    /// Flat mutable view over every parameter, in a fixed documented order:
    /// conv weight, conv bias, fc1..fc6 weight then bias, output weight,
    /// output bias. Used by the finite-difference harness and SGD.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for v in &mut self.conv_weight.data {
            f(v);
        }
        for v in &mut self.conv_bias {
            f(v);
        }
        for l in 0..FC_LAYERS {
            for v in &mut self.fc_weight[l].data {
                f(v);
            }
            for v in &mut self.fc_bias[l] {
                f(v);
            }
        }
        for v in &mut self.out_weight.data {
            f(v);
        }
        f(&mut self.out_bias);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        let mut copy = self.clone();
        copy.for_each_mut(|v| out.push(*v));
        out
    }

    /// params -= rate * grads, elementwise.
    pub fn step(&mut self, grads: &Self, rate: f64) {
        let g = grads.flatten();
        let mut i = 0;
        self.for_each_mut(|v| {
            *v -= rate * g[i];
            i += 1;
        });
    }
}

/// Glorot-uniform weights from the seeded generator, zero biases. The fill
/// order is the flat parameter order.
pub fn init_params(hyper: &NetworkHyper) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut fill = |m: &mut Mat| {
        let limit = (6.0 / (m.cols + m.rows) as f64).sqrt();
        for v in &mut m.data {
            *v = rng.random_range(-limit..limit);
        }
    };
    fill(&mut params.conv_weight);
    for l in 0..FC_LAYERS {
        fill(&mut params.fc_weight[l]);
    }
    fill(&mut params.out_weight);
    Ok(params)
}

/// Every intermediate activation of one example, kept for the backward
/// pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub image: Vec<f64>,
    pub data1_norm: f64,
    /// Filter-major tanh conv activations, filters x windows.
    pub conv: Vec<f64>,
    pub fc: [Vec<f64>; FC_LAYERS],
    pub score: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Eqs.-style forward pass; returns the (0, 1) score and the trace.
pub fn forward(
    params: &NetworkParams,
    image: &FeatureImage,
    data1_norm: f64,
) -> Result<ForwardTrace> {
    let x = &image.pixels;
    if params.fc_weight[0].cols != x.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("image of {} pixels", params.fc_weight[0].cols),
            got: format!("{} pixels", x.len()),
        });
    }
    let filters = params.conv_weight.rows;
    let windows = (x.len() - CONV_KERNEL) / CONV_STRIDE + 1;
    let mut conv = vec![0.0; filters * windows];
    for f in 0..filters {
        let kernel = params.conv_weight.row(f);
        for t in 0..windows {
            let mut acc = params.conv_bias[f];
            let base = t * CONV_STRIDE;
            for (j, w) in kernel.iter().enumerate() {
                acc += w * x[base + j];
            }
            conv[f * windows + t] = acc.tanh();
        }
    }

    let mut fc: [Vec<f64>; FC_LAYERS] = Default::default();
    let apply = |l: usize, input: &[f64], squash: fn(f64) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; params.fc_weight[l].rows];
        params.fc_weight[l].affine(&params.fc_bias[l], input, &mut out);
        for v in &mut out {
            *v = squash(*v);
        }
        out
    };
    fc[0] = apply(0, x, f64::tanh);
    fc[1] = apply(1, &fc[0], f64::tanh);
    fc[2] = apply(2, &fc[1], f64::tanh);
    let mut u4 = Vec::with_capacity(1 + fc[2].len());
    u4.push(data1_norm);
    u4.extend_from_slice(&fc[2]);
    fc[3] = apply(3, &u4, f64::tanh);
    let mut u5 = Vec::with_capacity(conv.len() + fc[3].len());
    u5.extend_from_slice(&conv);
    u5.extend_from_slice(&fc[3]);
    fc[4] = apply(4, &u5, f64::tanh);
    fc[5] = apply(5, &fc[4], sigmoid);

    let mut pre = [0.0];
    params.out_weight.affine(&[params.out_bias], &fc[5], &mut pre);
    let score = sigmoid(pre[0]);

    Ok(ForwardTrace {
        image: x.clone(),
        data1_norm,
        conv,
        fc,
        score,
    })
}

/// Squared distance between the score and the target rating.
pub fn loss(score: f64, rating: f64) -> f64 {
    let d = score - rating;
    d * d
}

/// Exact gradient of `loss(trace.score, target)` with respect to every
/// parameter, chained through both residual concatenations. Optionally also
/// returns d loss / d data1_norm for residual-path diagnostics.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    target: f64,
) -> Result<(NetworkParams, f64)> {
    if params.fc_weight[0].cols != trace.image.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("trace over {} pixels", params.fc_weight[0].cols),
            got: format!("{} pixels", trace.image.len()),
        });
    }
    let hyper_rows = params.conv_weight.rows;
    let windows = trace.conv.len() / hyper_rows;
    let mut grads = NetworkParams {
        conv_weight: Mat::zeros(params.conv_weight.rows, params.conv_weight.cols),
        conv_bias: vec![0.0; params.conv_bias.len()],
        fc_weight: params
            .fc_weight
            .iter()
            .map(|m| Mat::zeros(m.rows, m.cols))
            .collect(),
        fc_bias: params.fc_bias.iter().map(|b| vec![0.0; b.len()]).collect(),
        out_weight: Mat::zeros(1, params.out_weight.cols),
        out_bias: 0.0,
    };

    let score = trace.score;
    // loss = (score - target)^2, score = sigmoid(pre)
    let d_pre_out = 2.0 * (score - target) * score * (1.0 - score);
    grads.out_bias = d_pre_out;
    for (g, h) in grads.out_weight.data.iter_mut().zip(&trace.fc[5]) {
        *g = d_pre_out * h;
    }
    let mut d_fc5_out = vec![0.0; trace.fc[5].len()];
    params.out_weight.add_t_mul(&[d_pre_out], &mut d_fc5_out);

    // fc6: sigmoid
    let d6: Vec<f64> = d_fc5_out
        .iter()
        .zip(&trace.fc[5])
        .map(|(d, h)| d * h * (1.0 - h))
        .collect();
    grads.fc_weight[5].add_outer(&d6, &trace.fc[4]);
    grads.fc_bias[5].copy_from_slice(&d6);
    let mut d_h5 = vec![0.0; trace.fc[4].len()];
    params.fc_weight[5].add_t_mul(&d6, &mut d_h5);

    // fc5: tanh over [conv || fc4]
    let d5: Vec<f64> = d_h5
        .iter()
        .zip(&trace.fc[4])
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    let mut u5 = Vec::with_capacity(trace.conv.len() + trace.fc[3].len());
    u5.extend_from_slice(&trace.conv);
    u5.extend_from_slice(&trace.fc[3]);
    grads.fc_weight[4].add_outer(&d5, &u5);
    grads.fc_bias[4].copy_from_slice(&d5);
    let mut d_u5 = vec![0.0; u5.len()];
    params.fc_weight[4].add_t_mul(&d5, &mut d_u5);
    let (d_conv_out, d_h4) = d_u5.split_at(trace.conv.len());

    // fc4: tanh over [data1 || fc3]
    let d4: Vec<f64> = d_h4
        .iter()
        .zip(&trace.fc[3])
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    let mut u4 = Vec::with_capacity(1 + trace.fc[2].len());
    u4.push(trace.data1_norm);
    u4.extend_from_slice(&trace.fc[2]);
    grads.fc_weight[3].add_outer(&d4, &u4);
    grads.fc_bias[3].copy_from_slice(&d4);
    let mut d_u4 = vec![0.0; u4.len()];
    params.fc_weight[3].add_t_mul(&d4, &mut d_u4);
    let d_data1 = d_u4[0];
    let d_h3 = &d_u4[1..];

    // fc3 -> fc1: plain tanh chain
    let d3: Vec<f64> = d_h3
        .iter()
        .zip(&trace.fc[2])
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    grads.fc_weight[2].add_outer(&d3, &trace.fc[1]);
    grads.fc_bias[2].copy_from_slice(&d3);
    let mut d_h2 = vec![0.0; trace.fc[1].len()];
    params.fc_weight[2].add_t_mul(&d3, &mut d_h2);

    let d2: Vec<f64> = d_h2
        .iter()
        .zip(&trace.fc[1])
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    grads.fc_weight[1].add_outer(&d2, &trace.fc[0]);
    grads.fc_bias[1].copy_from_slice(&d2);
    let mut d_h1 = vec![0.0; trace.fc[0].len()];
    params.fc_weight[1].add_t_mul(&d2, &mut d_h1);

    let d1: Vec<f64> = d_h1
        .iter()
        .zip(&trace.fc[0])
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    grads.fc_weight[0].add_outer(&d1, &trace.image);
    grads.fc_bias[0].copy_from_slice(&d1);

    // conv path, gradient through the tanh windows
    for f in 0..hyper_rows {
        for t in 0..windows {
            let h = trace.conv[f * windows + t];
            let d = d_conv_out[f * windows + t] * (1.0 - h * h);
            grads.conv_bias[f] += d;
            let base = t * CONV_STRIDE;
            for j in 0..CONV_KERNEL {
                *grads.conv_weight.at_mut(f, j) += d * trace.image[base + j];
            }
        }
    }

    Ok((grads, d_data1))
}

/// Finite-difference verification of the hand-derived backward pass.
pub mod gradcheck {
    use super::*;
    use crate::features::FeatureImage;

    /// Central finite differences of the loss over every parameter, in
    /// flat parameter order.
    pub fn finite_diff(
        params: &NetworkParams,
        image: &FeatureImage,
        data1_norm: f64,
        target: f64,
        eps: f64,
    ) -> Vec<f64> {
        let n = params.param_count();
        let mut grads = Vec::with_capacity(n);
        for idx in 0..n {
            let probe = |delta: f64| -> f64 {
                let mut p = params.clone();
                let mut i = 0;
                p.for_each_mut(|v| {
                    if i == idx {
                        *v += delta;
                    }
                    i += 1;
                });
                let trace = forward(&p, image, data1_norm).expect("same shapes");
                loss(trace.score, target)
            };
            grads.push((probe(eps) - probe(-eps)) / (2.0 * eps));
        }
        grads
    }

    /// |a - n| / max(|a| + |n|, 1e-5): the floor turns the comparison
    /// absolute once both gradients sink below finite-difference
    /// resolution.
    pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-5))
            .fold(0.0, f64::max)
    }

    #[derive(Debug, Clone, Copy)]
    pub struct GradCheckOutcome {
        pub triples: usize,
        pub parameters_checked: usize,
        pub max_error: f64,
    }

    /// Checks `triples` random (params, image, data1, target) draws, most
    /// on small random architectures plus a handful at the default widths,
    /// against central differences with eps = 1e-5.
    pub fn run(triples: usize, seed: u64) -> GradCheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_error = 0.0f64;
        let mut parameters_checked = 0;
        for round in 0..triples {
            let hyper = if round % 20 == 19 {
                NetworkHyper::new(15, seed ^ round as u64)
            } else {
                NetworkHyper {
                    image_rows: rng.random_range(2..6),
                    conv_filters: rng.random_range(1..4),
                    widths: [
                        rng.random_range(2..8),
                        rng.random_range(2..8),
                        rng.random_range(2..6),
                        rng.random_range(2..6),
                        rng.random_range(2..6),
                        rng.random_range(2..5),
                    ],
                    seed: seed ^ round as u64,
                }
            };
            let mut params = init_params(&hyper).expect("valid hyper");
            params.for_each_mut(|v| *v += rng.random_range(-0.1..0.1));
            let image = FeatureImage {
                rows: hyper.image_rows,
                pixels: (0..hyper.image_len())
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect(),
            };
            let data1 = rng.random_range(0.0..1.0);
            let target = rng.random_range(0.0..1.0);
            let trace = forward(&params, &image, data1).expect("same shapes");
            let (grads, _) = backward(&params, &trace, target).expect("same shapes");
            let numeric = finite_diff(&params, &image, data1, target, 1e-5);
            max_error = max_error.max(max_relative_error(&grads.flatten(), &numeric));
            parameters_checked += params.param_count();
        }
        GradCheckOutcome {
            triples,
            parameters_checked,
            max_error,
        }
    }
}

/// Sums W_fc1 over its output units and reshapes the column sums onto the
/// image layout, one weight-mass cell per pixel.
pub fn sum_first_layer_weights(params: &NetworkParams, image_rows: usize) -> Vec<f64> {
    let w1 = &params.fc_weight[0];
    debug_assert_eq!(w1.cols, image_rows * IMAGE_COLS);
    let mut sums = vec![0.0; w1.cols];
    for i in 0..w1.rows {
        for (s, w) in sums.iter_mut().zip(w1.row(i)) {
            *s += w;
        }
    }
    sums
}
