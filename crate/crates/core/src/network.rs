//! Feed-forward classifier built from dense and ReLU layers.
//!
//! A [`Network`] maps `x` to logits `Z(x)`; probabilities are `softmax(Z(x))`
//! and the predicted class is the arg-max. Every class arg-max in the crate
//! goes through [`argmax`], which breaks ties toward the lowest index.
//!
//! Gradients are exact reverse-mode derivatives. ReLU uses derivative 0 at
//! the kink.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, gemm, Mat};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    /// Marks the logits as feeding a softmax. Only valid as the last layer;
    /// it has no parameters and does not change the logits.
    SoftmaxOutput,
}

impl LayerSpec {
    /// Dense layers of the given widths with ReLU between them and a softmax
    /// output, e.g. `[784, 128, 128, 10]`.
    pub fn mlp(widths: &[usize]) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            if i > 0 {
                specs.push(LayerSpec::Relu);
            }
            specs.push(LayerSpec::Dense {
                in_dim: pair[0],
                out_dim: pair[1],
            });
        }
        specs.push(LayerSpec::SoftmaxOutput);
        specs
    }
}

/// Weights (`out_dim x in_dim`, row-major) and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseParams {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.in_dim..(j + 1) * self.in_dim]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    dense: Vec<DenseParams>,
    input_dim: usize,
    class_count: usize,
}

/// Activations recorded by [`Network::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[i + 1]` is the output of
    /// layer `i`.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradient with the same shape as the network's dense parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub layers: Vec<DenseParams>,
}

impl ParamGradient {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn validate(specs: &[LayerSpec]) -> Result<(usize, usize)> {
    let arch = |msg: alloc::string::String| Err(Error::Architecture(msg));
    let mut current: Option<usize> = None;
    let mut last_dense_out = None;
    for (i, spec) in specs.iter().enumerate() {
        match *spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return arch(format!("layer {i}: dense dimensions must be positive"));
                }
                if let Some(d) = current {
                    if d != in_dim {
                        return arch(format!(
                            "layer {i}: expects {in_dim} inputs, previous emits {d}"
                        ));
                    }
                }
                current = Some(out_dim);
                last_dense_out = Some(out_dim);
            }
            LayerSpec::Relu => {
                if current.is_none() {
                    return arch(format!("layer {i}: ReLU before any dense layer"));
                }
                last_dense_out = None;
            }
            LayerSpec::SoftmaxOutput => {
                if i + 1 != specs.len() {
                    return arch(format!("layer {i}: softmax output must be last"));
                }
            }
        }
    }
    let input_dim = match specs.first() {
        Some(LayerSpec::Dense { in_dim, .. }) => *in_dim,
        _ => return arch("first layer must be dense".into()),
    };
    match last_dense_out {
        Some(l) => Ok((input_dim, l)),
        None => arch("the last parameterized layer must be dense (it emits the logits)".into()),
    }
}

/// Index of the largest value; the lowest index wins ties. NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// `softmax(logits / temperature)`, computed with the maximum subtracted.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::param(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(softmax_t(logits, temperature))
}

/// Standard softmax; the same arithmetic as temperature 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_t(logits, 1.0)
}

fn softmax_t(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&z| libm::exp((z - max) / temperature))
        .collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// `ln sum exp(z / T)`.
fn log_sum_exp(logits: &[f64], temperature: f64) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = logits
        .iter()
        .map(|&z| libm::exp((z - max) / temperature))
        .sum();
    max / temperature + libm::log(sum)
}

impl Network {
    /// Network with the given parameters, one [`DenseParams`] per dense layer.
    pub fn new(specs: Vec<LayerSpec>, dense: Vec<DenseParams>) -> Result<Self> {
        let (input_dim, class_count) = validate(&specs)?;
        let shapes: Vec<(usize, usize)> = specs
            .iter()
            .filter_map(|s| match *s {
                LayerSpec::Dense { in_dim, out_dim } => Some((in_dim, out_dim)),
                _ => None,
            })
            .collect();
        if shapes.len() != dense.len() {
            return Err(Error::Architecture(format!(
                "{} dense layers but {} parameter blocks",
                shapes.len(),
                dense.len()
            )));
        }
        for (i, ((in_dim, out_dim), p)) in shapes.iter().zip(&dense).enumerate() {
            if p.in_dim != *in_dim
                || p.out_dim != *out_dim
                || p.weights.len() != in_dim * out_dim
                || p.bias.len() != *out_dim
            {
                return Err(Error::Architecture(format!(
                    "parameter block {i} does not match a {in_dim}x{out_dim} dense layer"
                )));
            }
        }
        Ok(Network {
            specs,
            dense,
            input_dim,
            class_count,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(specs: Vec<LayerSpec>) -> Result<Self> {
        let dense = dense_shapes(&specs)
            .map(|(i, o)| DenseParams::zeros(i, o))
            .collect();
        Network::new(specs, dense)
    }

    /// Glorot-uniform weights, `U(-a, a)` with `a = sqrt(6 / (fan_in +
    /// fan_out))`, zero biases. Weights are drawn layer by layer in row-major
    /// order from ChaCha8 seeded with `seed`, as `(2u - 1) a` for `u =
    /// rng.gen::<f64>()`.
    pub fn init(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate(&specs)?;
        let mut rng = rng_from_seed(seed);
        let dense = dense_shapes(&specs)
            .map(|(in_dim, out_dim)| {
                let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
                let weights = (0..in_dim * out_dim)
                    .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * limit)
                    .collect();
                DenseParams {
                    in_dim,
                    out_dim,
                    weights,
                    bias: vec![0.0; out_dim],
                }
            })
            .collect();
        Network::new(specs, dense)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn dense_layers(&self) -> &[DenseParams] {
        &self.dense
    }

    pub fn dense_layers_mut(&mut self) -> &mut [DenseParams] {
        &mut self.dense
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn param_count(&self) -> usize {
        self.dense.iter().map(DenseParams::param_count).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.input_dim, x.len())
    }

    fn check_class(&self, t: usize) -> Result<()> {
        if t < self.class_count {
            Ok(())
        } else {
            Err(Error::LabelRange {
                label: t,
                class_count: self.class_count,
            })
        }
    }

    /// Full forward pass keeping every intermediate activation.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        activations.push(x.to_vec());
        let mut dense = self.dense.iter();
        for spec in &self.specs {
            let input = activations.last().expect("non-empty");
            let out = match spec {
                LayerSpec::Dense { .. } => {
                    let p = dense.next().expect("validated");
                    dense_forward(p, input)
                }
                LayerSpec::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::SoftmaxOutput => input.clone(),
            };
            activations.push(out);
        }
        let logits = activations.last().expect("non-empty").clone();
        let probs = softmax(&logits);
        Ok(ForwardTrace {
            activations,
            logits,
            probs,
        })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut dense = self.dense.iter();
        for spec in &self.specs {
            match spec {
                LayerSpec::Dense { .. } => {
                    current = dense_forward(dense.next().expect("validated"), &current)
                }
                LayerSpec::Relu => current.iter_mut().for_each(|v| *v = v.max(0.0)),
                LayerSpec::SoftmaxOutput => {}
            }
        }
        Ok(current)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Arg-max class. Computed over the logits, which orders classes exactly
    /// as the probabilities do without the rounding of `exp`.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Logits for `count` inputs stored row-major in `xs`; returns
    /// `count x class_count` row-major.
    pub fn logits_batch(&self, xs: &[f64], count: usize) -> Result<Vec<f64>> {
        Error::check_dim(count * self.input_dim, xs.len())?;
        let mut current = xs.to_vec();
        let mut dense = self.dense.iter();
        for spec in &self.specs {
            match spec {
                LayerSpec::Dense { .. } => {
                    current = dense_forward_batch(dense.next().expect("validated"), &current, count)
                }
                LayerSpec::Relu => current.iter_mut().for_each(|v| *v = v.max(0.0)),
                LayerSpec::SoftmaxOutput => {}
            }
        }
        Ok(current)
    }

    pub fn predict_batch(&self, xs: &[f64], count: usize) -> Result<Vec<usize>> {
        let logits = self.logits_batch(xs, count)?;
        Ok(logits.chunks_exact(self.class_count).map(argmax).collect())
    }

    /// Cross-entropy `-ln F_t(x)`.
    pub fn loss(&self, x: &[f64], t: usize) -> Result<f64> {
        self.check_class(t)?;
        let z = self.logits(x)?;
        Ok((log_sum_exp(&z, 1.0) - z[t]).max(0.0))
    }

    /// Gradient of `sum_i coeffs[i] * Z_i(x)` with respect to the input,
    /// reusing a trace of `x`.
    pub fn logit_combination_gradient(&self, trace: &ForwardTrace, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.class_count);
        let mut grad = coeffs.to_vec();
        let mut dense = self.dense.iter().rev();
        for (i, spec) in self.specs.iter().enumerate().rev() {
            match spec {
                LayerSpec::Dense { in_dim, .. } => {
                    let p = dense.next().expect("validated");
                    let mut g_in = vec![0.0; *in_dim];
                    for (j, &g) in grad.iter().enumerate() {
                        if g != 0.0 {
                            axpy(g, p.row(j), &mut g_in);
                        }
                    }
                    grad = g_in;
                }
                LayerSpec::Relu => {
                    for (g, &a) in grad.iter_mut().zip(&trace.activations[i]) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                LayerSpec::SoftmaxOutput => {}
            }
        }
        grad
    }

    /// `d(-ln F_t(x)) / dx`.
    pub fn input_gradient(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_class(t)?;
        let trace = self.forward(x)?;
        let mut coeffs = trace.probs.clone();
        coeffs[t] -= 1.0;
        Ok(self.logit_combination_gradient(&trace, &coeffs))
    }

    /// Loss and its input gradient from one forward pass.
    pub fn loss_and_input_gradient(&self, x: &[f64], t: usize) -> Result<(f64, Vec<f64>)> {
        self.check_class(t)?;
        let trace = self.forward(x)?;
        let loss = (log_sum_exp(&trace.logits, 1.0) - trace.logits[t]).max(0.0);
        let mut coeffs = trace.probs.clone();
        coeffs[t] -= 1.0;
        Ok((loss, self.logit_combination_gradient(&trace, &coeffs)))
    }

    /// `class_count x input_dim` row-major matrix whose row `i` is `dZ_i/dx`.
    pub fn logit_jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward(x)?;
        Ok(self.logit_jacobian_from_trace(&trace))
    }

    pub fn logit_jacobian_from_trace(&self, trace: &ForwardTrace) -> Vec<f64> {
        let l = self.class_count;
        let mut jac = vec![0.0; l * l];
        for i in 0..l {
            jac[i * l + i] = 1.0;
        }
        let mut width = l;
        let mut dense = self.dense.iter().rev();
        for (i, spec) in self.specs.iter().enumerate().rev() {
            match spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    let p = dense.next().expect("validated");
                    let mut next = vec![0.0; l * in_dim];
                    gemm(
                        Mat::new(&jac, l, *out_dim),
                        Mat::new(&p.weights, *out_dim, *in_dim),
                        0.0,
                        &mut next,
                    );
                    jac = next;
                    width = *in_dim;
                }
                LayerSpec::Relu => {
                    let pre = &trace.activations[i];
                    for row in jac.chunks_exact_mut(width) {
                        for (g, &a) in row.iter_mut().zip(pre) {
                            if a <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                }
                LayerSpec::SoftmaxOutput => {}
            }
        }
        jac
    }

    /// Mean cross-entropy over `(x, t)` pairs and its parameter gradient.
    pub fn param_gradient(&self, batch: &[(&[f64], usize)]) -> Result<(f64, ParamGradient)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let count = batch.len();
        let mut xs = Vec::with_capacity(count * self.input_dim);
        for (x, t) in batch {
            self.check_input(x)?;
            self.check_class(*t)?;
            xs.extend_from_slice(x);
        }
        let l = self.class_count;
        let labels: Vec<usize> = batch.iter().map(|(_, t)| *t).collect();
        Ok(self.batch_backward(&xs, count, |row, logits, dlogits| {
            let t = labels[row];
            let probs = softmax_t(logits, 1.0);
            dlogits[..l].copy_from_slice(&probs);
            dlogits[t] -= 1.0;
            (log_sum_exp(logits, 1.0) - logits[t]).max(0.0)
        }))
    }

    /// Mean soft-label cross-entropy `-sum_i q_i ln softmax(Z / T)_i` and its
    /// parameter gradient. `soft_targets` is `count x class_count`.
    pub fn param_gradient_soft(
        &self,
        xs: &[f64],
        soft_targets: &[f64],
        count: usize,
        temperature: f64,
    ) -> Result<(f64, ParamGradient)> {
        if count == 0 {
            return Err(Error::Empty("batch"));
        }
        if !(temperature > 0.0) {
            return Err(Error::param("temperature must be positive"));
        }
        Error::check_dim(count * self.input_dim, xs.len())?;
        let l = self.class_count;
        Error::check_dim(count * l, soft_targets.len())?;
        Ok(self.batch_backward(xs, count, |row, logits, dlogits| {
            let q = &soft_targets[row * l..(row + 1) * l];
            let probs = softmax_t(logits, temperature);
            let lse = log_sum_exp(logits, temperature);
            let mut loss = 0.0;
            for i in 0..l {
                dlogits[i] = (probs[i] - q[i]) / temperature;
                if q[i] > 0.0 {
                    loss -= q[i] * (logits[i] / temperature - lse);
                }
            }
            loss
        }))
    }

    /// Batched forward and backward pass. `seed_grad(row, logits, dlogits)`
    /// writes the gradient of the per-example loss with respect to the logits
    /// and returns the loss. The result is averaged over the batch.
    fn batch_backward<F>(&self, xs: &[f64], count: usize, mut seed_grad: F) -> (f64, ParamGradient)
    where
        F: FnMut(usize, &[f64], &mut [f64]) -> f64,
    {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.specs.len() + 1);
        acts.push(xs.to_vec());
        let mut dense = self.dense.iter();
        for spec in &self.specs {
            let input = acts.last().expect("non-empty");
            let out = match spec {
                LayerSpec::Dense { .. } => {
                    dense_forward_batch(dense.next().expect("validated"), input, count)
                }
                LayerSpec::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::SoftmaxOutput => input.clone(),
            };
            acts.push(out);
        }

        let l = self.class_count;
        let logits = acts.last().expect("non-empty");
        let mut delta = vec![0.0; count * l];
        let mut loss = 0.0;
        for row in 0..count {
            loss += seed_grad(
                row,
                &logits[row * l..(row + 1) * l],
                &mut delta[row * l..(row + 1) * l],
            );
        }

        let scale = 1.0 / count as f64;
        let mut grads: Vec<DenseParams> = Vec::with_capacity(self.dense.len());
        let mut dense = self.dense.iter().rev();
        for (i, spec) in self.specs.iter().enumerate().rev() {
            match spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    let p = dense.next().expect("validated");
                    let input = &acts[i];
                    let mut g = DenseParams::zeros(*in_dim, *out_dim);
                    gemm(
                        Mat::t(&delta, count, *out_dim),
                        Mat::new(input, count, *in_dim),
                        0.0,
                        &mut g.weights,
                    );
                    for row in delta.chunks_exact(*out_dim) {
                        for (b, d) in g.bias.iter_mut().zip(row) {
                            *b += d;
                        }
                    }
                    g.weights.iter_mut().for_each(|w| *w *= scale);
                    g.bias.iter_mut().for_each(|b| *b *= scale);
                    grads.push(g);
                    if i > 0 {
                        let mut next = vec![0.0; count * in_dim];
                        gemm(
                            Mat::new(&delta, count, *out_dim),
                            Mat::new(&p.weights, *out_dim, *in_dim),
                            0.0,
                            &mut next,
                        );
                        delta = next;
                    }
                }
                LayerSpec::Relu => {
                    for (d, &a) in delta.iter_mut().zip(&acts[i]) {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                LayerSpec::SoftmaxOutput => {}
            }
        }
        grads.reverse();
        (loss * scale, ParamGradient { layers: grads })
    }

    /// `theta -= learning_rate * grad`
    pub fn sgd_step(&mut self, grad: &ParamGradient, learning_rate: f64) {
        for (p, g) in self.dense.iter_mut().zip(&grad.layers) {
            axpy(-learning_rate, &g.weights, &mut p.weights);
            axpy(-learning_rate, &g.bias, &mut p.bias);
        }
    }

    /// Parameters as one vector: per dense layer, weights then bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.dense {
            out.extend_from_slice(&p.weights);
            out.extend_from_slice(&p.bias);
        }
        out
    }

    /// Inverse of [`Network::flat_parameters`].
    pub fn from_flat(specs: Vec<LayerSpec>, flat: &[f64]) -> Result<Self> {
        validate(&specs)?;
        let mut offset = 0;
        let mut dense = Vec::new();
        for (in_dim, out_dim) in dense_shapes(&specs) {
            let need = in_dim * out_dim + out_dim;
            if flat.len() < offset + need {
                return Err(Error::Dimension {
                    expected: offset + need,
                    actual: flat.len(),
                });
            }
            let weights = flat[offset..offset + in_dim * out_dim].to_vec();
            let bias = flat[offset + in_dim * out_dim..offset + need].to_vec();
            offset += need;
            dense.push(DenseParams {
                in_dim,
                out_dim,
                weights,
                bias,
            });
        }
        Error::check_dim(offset, flat.len())?;
        Network::new(specs, dense)
    }

    /// Rounds every parameter to the nearest `f32`, matching what a
    /// checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.dense {
            for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
                *v = f64::from(*v as f32);
            }
        }
    }
}

fn dense_shapes(specs: &[LayerSpec]) -> impl Iterator<Item = (usize, usize)> + '_ {
    specs.iter().filter_map(|s| match *s {
        LayerSpec::Dense { in_dim, out_dim } => Some((in_dim, out_dim)),
        _ => None,
    })
}

fn dense_forward(p: &DenseParams, input: &[f64]) -> Vec<f64> {
    (0..p.out_dim)
        .map(|j| p.bias[j] + dot(p.row(j), input))
        .collect()
}

fn dense_forward_batch(p: &DenseParams, input: &[f64], count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count * p.out_dim);
    for _ in 0..count {
        out.extend_from_slice(&p.bias);
    }
    gemm(
        Mat::new(input, count, p.in_dim),
        Mat::t(&p.weights, p.out_dim, p.in_dim),
        1.0,
        &mut out,
    );
    out
}
