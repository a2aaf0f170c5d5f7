//! Dense rectifier network with a softmax output, trained on mean
//! categorical cross-entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor applied before taking the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub outputs: usize,
    pub activation: Activation,
}

/// Layer widths and activations. The last layer feeds the softmax, so its
/// width is the class count and its activation should be `Identity`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub inputs: usize,
    pub layers: Vec<LayerShape>,
}

impl ModelShape {
    /// `inputs → hidden (ReLU) → classes`.
    pub fn one_hidden(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            inputs,
            layers: vec![
                LayerShape {
                    outputs: hidden,
                    activation: Activation::Relu,
                },
                LayerShape {
                    outputs: classes,
                    activation: Activation::Identity,
                },
            ],
        }
    }

    /// `inputs → classes`, a multinomial logistic regression.
    pub fn linear(inputs: usize, classes: usize) -> Self {
        Self {
            inputs,
            layers: vec![LayerShape {
                outputs: classes,
                activation: Activation::Identity,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.layers.is_empty() || self.layers.iter().any(|l| l.outputs == 0) {
            return Err(Error::invalid("model needs positive input width and at least one non-empty layer"));
        }
        if self.num_classes() < 2 {
            return Err(Error::invalid("output layer must have at least two classes"));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        let mut fan_in = self.inputs;
        let mut n = 0;
        for l in &self.layers {
            n += l.outputs * fan_in + l.outputs;
            fan_in = l.outputs;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    frozen: bool,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }
}

/// Per-batch intermediate values kept for backpropagation.
struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean of `−ln max(p[label], PROB_FLOOR)` over the batch.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::invalid(format!("label {y} out of range")))?;
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

impl MlpModel {
    /// He-normal weights, zero biases, everything trainable.
    pub fn new(shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = shape.inputs;
        let mut layers = Vec::with_capacity(shape.layers.len());
        for l in &shape.layers {
            let std = (2.0 / fan_in as f64).sqrt();
            let weights = (0..l.outputs * fan_in)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * std
                })
                .collect();
            layers.push(Dense {
                inputs: fan_in,
                outputs: l.outputs,
                weights,
                bias: vec![0.0; l.outputs],
                activation: l.activation,
                frozen: false,
            });
            fan_in = l.outputs;
        }
        Ok(Self { layers })
    }

    pub fn zeros(shape: &ModelShape) -> Result<Self> {
        let mut m = Self::new(shape, 0)?;
        let n = m.num_params();
        m.set_params(&vec![0.0; n])?;
        Ok(m)
    }

    pub fn from_params(shape: &ModelShape, params: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(shape)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            inputs: self.input_dim(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerShape {
                    outputs: l.outputs,
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn set_frozen(&mut self, layer: usize, frozen: bool) -> Result<()> {
        let l = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::invalid(format!("no layer {layer}")))?;
        l.frozen = frozen;
        Ok(())
    }

    /// Freezes every layer except the output layer.
    pub fn freeze_backbone(&mut self) {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.frozen = i != last;
        }
    }

    pub fn unfreeze_all(&mut self) {
        for l in &mut self.layers {
            l.frozen = false;
        }
    }

    /// One flag per flattened parameter, `true` where the owning layer is trainable.
    pub fn trainable_mask(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::repeat_n(!l.frozen, l.num_params()))
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut activations = vec![x.to_vec()];
        let mut preactivations = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = l.affine(activations.last().expect("input present"));
            activations.push(z.iter().map(|&v| l.activation.apply(v)).collect());
            preactivations.push(z);
        }
        let probs = softmax(activations.last().expect("output present"));
        Trace {
            activations,
            preactivations,
            probs,
        }
    }

    /// Softmax probabilities, one row per input.
    pub fn forward<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<Vec<f64>>> {
        inputs
            .iter()
            .map(|x| {
                let x = x.as_ref();
                self.check_input(x)?;
                Ok(self.trace(x).probs)
            })
            .collect()
    }

    pub fn predict<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<usize>> {
        Ok(self.forward(inputs)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn loss<X: AsRef<[f64]>>(&self, inputs: &[X], labels: &[usize]) -> Result<f64> {
        cross_entropy(&self.forward(inputs)?, labels)
    }

    /// Mean cross-entropy and its gradient with respect to every flattened
    /// parameter. Entries belonging to frozen layers are zero.
    pub fn backward<X: AsRef<[f64]>>(&self, inputs: &[X], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::invalid(format!(
                "{} inputs for {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let classes = self.num_classes();
        let scale = 1.0 / inputs.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let any_trainable = self.layers.iter().any(|l| !l.frozen);
        let lowest_trainable = self.layers.iter().position(|l| !l.frozen).unwrap_or(0);
        let mut loss = 0.0;

        for (x, &y) in inputs.iter().zip(labels) {
            let x = x.as_ref();
            self.check_input(x)?;
            if y >= classes {
                return Err(Error::invalid(format!("label {y} out of range for {classes} classes")));
            }
            let t = self.trace(x);
            let p_true = t.probs[y];
            loss -= p_true.max(PROB_FLOOR).ln();
            if !any_trainable || p_true < PROB_FLOOR {
                // the floored loss is locally constant in the parameters
                continue;
            }
            // dL/dlogits for softmax + cross-entropy
            let mut delta: Vec<f64> = t.probs.iter().map(|p| p * scale).collect();
            delta[y] -= scale;

            for li in (lowest_trainable..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let z = &t.preactivations[li];
                for (d, &zi) in delta.iter_mut().zip(z) {
                    *d *= layer.activation.derivative(zi);
                }
                let a_prev = &t.activations[li];
                if !layer.frozen {
                    let (gw, gb) = &mut grads[li];
                    for o in 0..layer.outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        for (g, a) in row.iter_mut().zip(a_prev) {
                            *g += d * a;
                        }
                    }
                }
                if li > lowest_trainable {
                    let mut prev = vec![0.0; layer.inputs];
                    for (&d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.inputs)) {
                        if d == 0.0 {
                            continue;
                        }
                        for (pv, w) in prev.iter_mut().zip(row) {
                            *pv += d * w;
                        }
                    }
                    delta = prev;
                }
            }
        }

        let flat = grads
            .into_iter()
            .flat_map(|(gw, gb)| gw.into_iter().chain(gb))
            .collect();
        Ok((loss * scale, flat))
    }

    /// Smallest `|z|` over every hidden rectifier pre-activation for `inputs`;
    /// finite-difference checks are only meaningful when this exceeds the step.
    pub fn kink_margin<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for x in inputs {
            let x = x.as_ref();
            self.check_input(x)?;
            let t = self.trace(x);
            for (l, z) in self.layers.iter().zip(&t.preactivations) {
                if l.activation == Activation::Relu {
                    margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                }
            }
        }
        Ok(margin)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient magnitudes below this are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Worst relative error between `analytic` and the central difference
/// `(L(θ+h) − L(θ−h)) / 2h` over the parameters listed in `indices`.
pub fn compare_gradients<X: AsRef<[f64]>>(
    model: &MlpModel,
    inputs: &[X],
    labels: &[usize],
    analytic: &[f64],
    h: f64,
    indices: &[usize],
) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if analytic.len() != model.num_params() {
        return Err(Error::invalid("analytic gradient has the wrong length"));
    }
    let base = model.params();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &i in indices {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let plus = probe.loss(inputs, labels)?;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let minus = probe.loss(inputs, labels)?;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Checks `backward` against central differences on up to `max_checked`
/// trainable parameters, spread evenly over the flattened vector.
pub fn grad_check<X: AsRef<[f64]>>(
    model: &MlpModel,
    inputs: &[X],
    labels: &[usize],
    h: f64,
    max_checked: usize,
) -> Result<f64> {
    let (_, analytic) = model.backward(inputs, labels)?;
    let trainable: Vec<usize> = model
        .trainable_mask()
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| t.then_some(i))
        .collect();
    let indices: Vec<usize> = if trainable.len() <= max_checked {
        trainable
    } else {
        let stride = trainable.len() as f64 / max_checked as f64;
        (0..max_checked)
            .map(|k| trainable[(k as f64 * stride) as usize])
            .collect()
    };
    compare_gradients(model, inputs, labels, &analytic, h, &indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_inputs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(&ModelShape::one_hidden(5, 4, 3)).unwrap();
        for row in m.forward(&random_inputs(4, 5, 1)).unwrap() {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_layer_matches_hand_computation() {
        let shape = ModelShape::linear(2, 2);
        // W = [[1, 2], [-1, 0.5]], b = [0.1, -0.2]
        let m = MlpModel::from_params(&shape, &[1.0, 2.0, -1.0, 0.5, 0.1, -0.2]).unwrap();
        let x = [0.5, 0.25];
        let z0: f64 = 1.0 * 0.5 + 2.0 * 0.25 + 0.1;
        let z1: f64 = -0.5 + 0.5 * 0.25 - 0.2;
        let e0 = z0.exp();
        let e1 = z1.exp();
        let p = m.forward(&[x]).unwrap();
        assert!((p[0][0] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((p[0][1] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn probabilities_are_normalized() {
        for seed in 0..20 {
            let m = MlpModel::new(&ModelShape::one_hidden(7, 9, 5), seed).unwrap();
            for row in m.forward(&random_inputs(6, 7, seed + 100)).unwrap() {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_width_mismatch_is_an_error() {
        let m = MlpModel::new(&ModelShape::linear(3, 2), 0).unwrap();
        assert!(m.forward(&[vec![0.0; 4]]).is_err());
        assert!(m.backward(&[vec![0.0; 3]], &[0, 1]).is_err());
        assert!(m.backward(&[vec![0.0; 3]], &[2]).is_err());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let uniform = vec![vec![0.125; 8]];
        assert!((cross_entropy(&uniform, &[3]).unwrap() - 8f64.ln()).abs() < 1e-15);
        assert_eq!(cross_entropy(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        let two = vec![vec![0.5, 0.5], vec![0.25, 0.75]];
        let expected = (2f64.ln() + 4f64.ln()) / 2.0;
        assert!((cross_entropy(&two, &[0, 0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.0397207708399179).abs() < 1e-15);
        // floor keeps the loss finite
        assert!((cross_entropy(&[vec![1.0, 0.0]], &[1]).unwrap() + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_linear_model_logit_gradient() {
        let m = MlpModel::zeros(&ModelShape::linear(1, 2)).unwrap();
        let (loss, g) = m.backward(&[[1.0]], &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        // params: w00, w10, b0, b1; with x = 1 the weight grads equal the logit grads
        assert_eq!(g, vec![-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn frozen_layers_get_zero_gradients() {
        let mut m = MlpModel::new(&ModelShape::one_hidden(4, 3, 2), 3).unwrap();
        let x = random_inputs(3, 4, 9);
        m.freeze_backbone();
        let (_, g) = m.backward(&x, &[0, 1, 1]).unwrap();
        let mask = m.trainable_mask();
        assert!(g.iter().zip(&mask).all(|(v, &t)| t || *v == 0.0));
        assert!(g.iter().zip(&mask).any(|(v, &t)| t && *v != 0.0));
        m.set_frozen(1, true).unwrap();
        let (_, g) = m.backward(&x, &[0, 1, 1]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let m = MlpModel::new(&ModelShape::one_hidden(3, 4, 2), 5).unwrap();
        let p = m.params();
        assert_eq!(p.len(), m.shape().num_params());
        let n = MlpModel::from_params(&m.shape(), &p).unwrap();
        assert_eq!(n, m);
        assert!(MlpModel::from_params(&m.shape(), &p[1..]).is_err());
    }

    #[test]
    fn linear_model_gradient_check() {
        let m = MlpModel::new(&ModelShape::linear(6, 3), 11).unwrap();
        let x = random_inputs(5, 6, 12);
        let err = grad_check(&m, &x, &[0, 1, 2, 1, 0], 1e-5, usize::MAX).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn rectifier_model_gradient_check() {
        let m = MlpModel::new(&ModelShape::one_hidden(6, 8, 3), 21).unwrap();
        let x = random_inputs(4, 6, 22);
        assert!(m.kink_margin(&x).unwrap() > 1e-3);
        let err = grad_check(&m, &x, &[2, 0, 1, 1], 1e-5, usize::MAX).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn sign_flipped_gradient_is_caught() {
        let m = MlpModel::new(&ModelShape::linear(4, 3), 2).unwrap();
        let x = random_inputs(3, 4, 3);
        let labels = [0, 1, 2];
        let (_, g) = m.backward(&x, &labels).unwrap();
        let flipped: Vec<f64> = g.iter().map(|v| -v).collect();
        let big: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() > 1e-3).collect();
        let err = compare_gradients(&m, &x, &labels, &flipped, 1e-5, &big).unwrap();
        assert!((err - 2.0).abs() < 1e-4, "error {err}");
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
