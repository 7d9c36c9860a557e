//! A small 1-D convolutional multi-label classifier over vertex
//! trajectories.
//!
//! ```text
//! input  L x 1
//! conv1  kernel 2, 8 filters, ReLU      -> (L-1) x 8
//! conv2  kernel 2, 8 filters, ReLU      -> (L-2) x 8
//! global max-pool over positions        -> 8
//! dense                                 -> b_max
//! sigmoid                               -> b_max probabilities
//! ```

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of filters in both convolution layers.
pub const FILTERS: usize = 8;
/// Convolution kernel width.
pub const KERNEL: usize = 2;
/// Shortest input the two valid convolutions accept.
pub const MIN_INPUT_LEN: usize = 3;

/// Network parameters. The same layout holds gradients and Adam moments.
///
/// Flattened layouts: `conv1_w[c * 2 + k]`, `conv2_w[(c * 8 + in) * 2 + k]`,
/// `dense_w[label * 8 + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    b_max: usize,
    input_len: usize,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

/// Gradient of the loss with respect to every parameter.
pub type CnnGradient = CnnModel;

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// conv1 pre-activations, `[(len - 1) * 8]` position-major.
    z1: Vec<f64>,
    /// conv2 pre-activations, `[(len - 2) * 8]` position-major.
    z2: Vec<f64>,
    /// Winning conv2 position per filter.
    argmax: [usize; FILTERS],
    pooled: [f64; FILTERS],
    pub probabilities: Vec<f64>,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl CnnModel {
    /// All-zero parameters.
    pub fn zeros(b_max: usize, input_len: usize) -> Self {
        Self {
            b_max,
            input_len,
            conv1_w: vec![0.0; FILTERS * KERNEL],
            conv1_b: vec![0.0; FILTERS],
            conv2_w: vec![0.0; FILTERS * FILTERS * KERNEL],
            conv2_b: vec![0.0; FILTERS],
            dense_w: vec![0.0; b_max * FILTERS],
            dense_b: vec![0.0; b_max],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization drawn from
    /// a ChaCha stream keyed by `seed`.
    pub fn init(b_max: usize, input_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(b_max, input_len);
        let fan_ins = [KERNEL, KERNEL, FILTERS * KERNEL, FILTERS * KERNEL, FILTERS, FILTERS];
        for (params, fan_in) in model.parameters_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in params.iter_mut() {
                *p = rng.gen_range(-bound..=bound);
            }
        }
        model
    }

    pub fn b_max(&self) -> usize {
        self.b_max
    }

    /// Trajectory length the model was trained for.
    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Parameter arrays in declaration order.
    pub fn parameters(&self) -> [&[f64]; 6] {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.dense_w, &self.dense_b]
    }

    pub fn parameters_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// `self += scale * other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.parameters_mut().into_iter().zip(other.parameters()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Forward pass keeping the activations needed by [`backward`](Self::backward).
    pub fn forward_pass(&self, input: &[f64]) -> Result<ForwardPass> {
        let len = input.len();
        if len < MIN_INPUT_LEN {
            return Err(Error::InvalidArgument(format!(
                "trajectory of length {len} is shorter than {MIN_INPUT_LEN}"
            )));
        }
        let l1 = len - 1;
        let l2 = len - 2;

        let mut z1 = vec![0.0; l1 * FILTERS];
        for p in 0..l1 {
            for c in 0..FILTERS {
                z1[p * FILTERS + c] =
                    self.conv1_b[c] + self.conv1_w[c * KERNEL] * input[p] + self.conv1_w[c * KERNEL + 1] * input[p + 1];
            }
        }

        let mut z2 = vec![0.0; l2 * FILTERS];
        for p in 0..l2 {
            for c in 0..FILTERS {
                let mut acc = self.conv2_b[c];
                for k in 0..KERNEL {
                    let h = &z1[(p + k) * FILTERS..(p + k + 1) * FILTERS];
                    for (i, &z) in h.iter().enumerate() {
                        acc += self.conv2_w[(c * FILTERS + i) * KERNEL + k] * relu(z);
                    }
                }
                z2[p * FILTERS + c] = acc;
            }
        }

        let mut argmax = [0usize; FILTERS];
        let mut pooled = [f64::NEG_INFINITY; FILTERS];
        for p in 0..l2 {
            for c in 0..FILTERS {
                let h = relu(z2[p * FILTERS + c]);
                // strict comparison keeps the first maximum
                if h > pooled[c] {
                    pooled[c] = h;
                    argmax[c] = p;
                }
            }
        }

        let probabilities = (0..self.b_max)
            .map(|k| {
                let w = &self.dense_w[k * FILTERS..(k + 1) * FILTERS];
                sigmoid(self.dense_b[k] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect();
        Ok(ForwardPass { z1, z2, argmax, pooled, probabilities })
    }

    /// Bone-influence probabilities for one trajectory.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_pass(input)?.probabilities)
    }

    /// Exact gradient of `bce_loss(labels, forward(input))`.
    ///
    /// The max-pool passes gradient only to its recorded winner; ReLU has
    /// zero derivative at zero.
    pub fn backward(&self, input: &[f64], labels: &[f64]) -> Result<(CnnGradient, f64)> {
        if labels.len() != self.b_max {
            return Err(Error::ShapeMismatch(format!("{} labels for {} outputs", labels.len(), self.b_max)));
        }
        let pass = self.forward_pass(input)?;
        let loss = bce_loss(labels, &pass.probabilities)?;
        Ok((self.backward_from(input, labels, &pass), loss))
    }

    pub(crate) fn backward_from(&self, input: &[f64], labels: &[f64], pass: &ForwardPass) -> CnnGradient {
        let mut grad = Self::zeros(self.b_max, self.input_len);
        let scale = 1.0 / self.b_max as f64;

        let mut d_pooled = [0.0; FILTERS];
        for k in 0..self.b_max {
            let d_logit = (pass.probabilities[k] - labels[k]) * scale;
            grad.dense_b[k] = d_logit;
            for c in 0..FILTERS {
                grad.dense_w[k * FILTERS + c] = d_logit * pass.pooled[c];
                d_pooled[c] += d_logit * self.dense_w[k * FILTERS + c];
            }
        }

        let l1 = input.len() - 1;
        let mut d_h1 = vec![0.0; l1 * FILTERS];
        for c in 0..FILTERS {
            let p = pass.argmax[c];
            if pass.z2[p * FILTERS + c] <= 0.0 {
                continue;
            }
            let d_z2 = d_pooled[c];
            grad.conv2_b[c] += d_z2;
            for k in 0..KERNEL {
                for i in 0..FILTERS {
                    let idx = (c * FILTERS + i) * KERNEL + k;
                    grad.conv2_w[idx] += d_z2 * relu(pass.z1[(p + k) * FILTERS + i]);
                    d_h1[(p + k) * FILTERS + i] += d_z2 * self.conv2_w[idx];
                }
            }
        }

        for p in 0..l1 {
            for c in 0..FILTERS {
                if pass.z1[p * FILTERS + c] <= 0.0 {
                    continue;
                }
                let d_z1 = d_h1[p * FILTERS + c];
                grad.conv1_b[c] += d_z1;
                grad.conv1_w[c * KERNEL] += d_z1 * input[p];
                grad.conv1_w[c * KERNEL + 1] += d_z1 * input[p + 1];
            }
        }
        grad
    }

    /// Writes the checkpoint: a `CNN <b_max> <input_len>` header, then one
    /// line per parameter array in declaration order.
    pub fn save<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "CNN {} {}", self.b_max, self.input_len)?;
        for params in self.parameters() {
            let line: Vec<String> = params.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        out.flush()
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(s))) => Ok((i + 1, s)),
                Some((i, Err(e))) => Err(Error::Parse { line: i + 1, message: e.to_string() }),
                None => Err(Error::Parse { line: 0, message: format!("missing {what}") }),
            }
        };
        let (line, header) = next("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_err = |message: String| Error::Parse { line, message };
        if fields.len() != 3 || fields[0] != "CNN" {
            return Err(parse_err(format!("bad checkpoint header `{header}`")));
        }
        let b_max: usize = fields[1].parse().map_err(|_| parse_err("bad b_max".into()))?;
        let input_len: usize = fields[2].parse().map_err(|_| parse_err("bad input length".into()))?;
        if b_max == 0 {
            return Err(parse_err("b_max must be positive".into()));
        }
        let mut model = Self::zeros(b_max, input_len);
        for params in model.parameters_mut() {
            let (line, text) = next("parameter array")?;
            let values: Vec<f64> = text
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if values.len() != params.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} values, found {}", params.len(), values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("checkpoint parameters"));
            }
            *params = values;
        }
        Ok(model)
    }
}

/// Prediction clamp used by [`bce_loss`].
pub const PROBABILITY_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy over the label vector.
pub fn bce_loss(labels: &[f64], predicted: &[f64]) -> Result<f64> {
    if labels.len() != predicted.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    let total: f64 = labels
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| {
            let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
            (1.0 - y) * (1.0 - p).ln() + y * p.ln()
        })
        .sum();
    Ok(-total / labels.len() as f64)
}

/// Fraction of outputs whose 0.5-thresholded prediction matches the label.
pub fn binary_accuracy(labels: &[f64], predicted: &[f64]) -> Result<f64> {
    if labels.len() != predicted.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    let hits = labels
        .iter()
        .zip(predicted)
        .filter(|(&y, &p)| (p >= 0.5) == (y == 1.0))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
