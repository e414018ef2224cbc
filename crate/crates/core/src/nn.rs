//! A small dense feed-forward network with exact reverse-mode gradients.
//!
//! Each layer computes `a = act(W x + b)` with an activation chosen per output
//! unit. `forward` caches the layer inputs and pre-activations; `backward`
//! consumes that cache and accumulates parameter gradients until `sgd_step`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => softplus(z),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(z),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Inverse of softplus for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Binary cross entropy of a single prediction against a 0/1 target.
pub fn bce_loss(prediction: f64, target: f64) -> f64 {
    let p = prediction.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// `d bce / d prediction`; zero where the clamp is active.
pub fn bce_gradient(prediction: f64, target: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prediction) {
        return 0.0;
    }
    (prediction - target) / (prediction * (1.0 - prediction))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    learning_rate: f64,
}

impl SgdConfig {
    /// Zero is accepted so a schedule can be frozen; negative or non-finite rates are not.
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::InvalidParams(format!(
                "learning rate {learning_rate} must be >= 0"
            )));
        }
        Ok(Self { learning_rate })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activations: Vec<Activation>,
    grad_weights: Vec<f64>,
    grad_biases: Vec<f64>,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidParams("layer dimensions must be nonzero".into()));
        }
        check_len(weights.len(), inputs * outputs)?;
        check_len(biases.len(), outputs)?;
        check_len(activations.len(), outputs)?;
        Ok(Self {
            inputs,
            outputs,
            grad_weights: vec![0.0; weights.len()],
            grad_biases: vec![0.0; outputs],
            weights,
            biases,
            activations,
        })
    }

    /// Weights and biases drawn uniformly from `[-bound, bound)`, one activation for every unit.
    pub fn uniform(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        bound: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let weights = (0..inputs * outputs)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        let biases = (0..outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self::new(inputs, outputs, weights, biases, vec![activation; outputs])
    }

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

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn grad_weights(&self) -> &[f64] {
        &self.grad_weights
    }

    pub fn grad_biases(&self) -> &[f64] {
        &self.grad_biases
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Per-layer intermediates from the most recent forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
struct Cache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    cache: Option<Cache>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParams("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len(pair[1].inputs, pair[0].outputs)?;
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Pure evaluation; leaves the cache untouched.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len(input.len(), self.input_dim())?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer
                .pre_activation(&x)
                .into_iter()
                .zip(&layer.activations)
                .map(|(z, a)| a.apply(z))
                .collect();
        }
        Ok(x)
    }

    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        check_len(input.len(), self.input_dim())?;
        let mut cache = Cache::default();
        let mut x = input.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&x);
            let a = z
                .iter()
                .zip(&layer.activations)
                .map(|(&z, act)| act.apply(z))
                .collect();
            cache.inputs.push(x);
            cache.pre.push(z);
            x = a;
        }
        self.cache = Some(cache);
        Ok(x)
    }

    /// Accumulates parameter gradients for the cached forward pass and returns
    /// the gradient with respect to the network input.
    pub fn backward(&mut self, output_gradient: &[f64]) -> Result<Vec<f64>> {
        self.propagate(output_gradient, true)
    }

    /// Input gradient for the cached forward pass, without touching the accumulators.
    pub fn input_gradient(&mut self, output_gradient: &[f64]) -> Result<Vec<f64>> {
        self.propagate(output_gradient, false)
    }

    fn propagate(&mut self, output_gradient: &[f64], accumulate: bool) -> Result<Vec<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Contract("backward called without a preceding forward".into()))?;
        check_len(output_gradient.len(), self.output_dim())?;

        let mut upstream = output_gradient.to_vec();
        for (idx, layer) in self.layers.iter_mut().enumerate().rev() {
            let x = &cache.inputs[idx];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&cache.pre[idx])
                .zip(&layer.activations)
                .map(|((g, &z), act)| g * act.derivative(z))
                .collect();

            let mut down = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = o * layer.inputs;
                if accumulate {
                    layer.grad_biases[o] += d;
                    for (gw, xi) in layer.grad_weights[row..row + layer.inputs].iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                }
                for (dn, w) in down.iter_mut().zip(&layer.weights[row..row + layer.inputs]) {
                    *dn += d * w;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.grad_weights.fill(0.0);
            layer.grad_biases.fill(0.0);
        }
    }

    /// `param -= lr * grad` for every parameter, then clears the accumulators and cache.
    pub fn sgd_step(&mut self, cfg: &SgdConfig) {
        let lr = cfg.learning_rate;
        for layer in &mut self.layers {
            for (w, g) in layer.weights.iter_mut().zip(&layer.grad_weights) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&layer.grad_biases) {
                *b -= lr * g;
            }
        }
        self.zero_grad();
        self.cache = None;
    }

    /// All weights then biases, layer by layer.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    /// Same ordering as [`Mlp::flat_parameters`].
    pub fn flat_gradients(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.grad_weights.iter().chain(&l.grad_biases).copied())
            .collect()
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len(params.len(), self.parameter_count())?;
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        self.cache = None;
        Ok(())
    }

    pub fn snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    activations: l.activations.clone(),
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: &MlpSnapshot) -> Result<Self> {
        let layers = snapshot
            .layers
            .iter()
            .map(|l| {
                Layer::new(
                    l.inputs,
                    l.outputs,
                    l.weights.clone(),
                    l.biases.clone(),
                    l.activations.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }
}

/// JSON form of a network's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub layers: Vec<LayerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub inputs: usize,
    pub outputs: usize,
    pub activations: Vec<Activation>,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn affine(w: f64, b: f64, act: Activation) -> Mlp {
        Mlp::new(vec![Layer::new(1, 1, vec![w], vec![b], vec![act]).unwrap()]).unwrap()
    }

    #[test]
    fn forward_examples() {
        let mut zero = Mlp::new(vec![
            Layer::new(3, 2, vec![0.0; 6], vec![0.0; 2], vec![Activation::Tanh; 2]).unwrap(),
        ])
        .unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(affine(2.0, 1.0, Activation::Identity).forward(&[3.0]).unwrap(), vec![7.0]);
        assert_eq!(affine(1.0, 0.0, Activation::Sigmoid).forward(&[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn dimension_errors() {
        let l1 = Layer::new(2, 3, vec![0.0; 6], vec![0.0; 3], vec![Activation::Tanh; 3]).unwrap();
        let l2 = Layer::new(2, 1, vec![0.0; 2], vec![0.0; 1], vec![Activation::Tanh]).unwrap();
        assert!(matches!(Mlp::new(vec![l1, l2]), Err(Error::Dimension { .. })));
        assert!(Layer::new(2, 2, vec![0.0; 3], vec![0.0; 2], vec![Activation::Tanh; 2]).is_err());
        let mut net = affine(1.0, 0.0, Activation::Identity);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = affine(1.0, 0.0, Activation::Identity);
        assert!(matches!(net.backward(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = RngStream::new(5);
        let mut net = Mlp::new(vec![
            Layer::uniform(2, 3, Activation::Tanh, 1.0, &mut rng).unwrap(),
            Layer::uniform(3, 1, Activation::Sigmoid, 1.0, &mut rng).unwrap(),
        ])
        .unwrap();
        net.forward(&[0.3, -0.2]).unwrap();
        net.backward(&[0.0]).unwrap();
        assert!(net.flat_gradients().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_examples() {
        let mut net = affine(1.0, 0.0, Activation::Identity);
        let before = net.flat_parameters();
        net.sgd_step(&SgdConfig::new(0.1).unwrap());
        assert_eq!(net.flat_parameters(), before);

        // y = w x with x = 0.5 and upstream gradient 1 gives dw = 0.5
        net.forward(&[0.5]).unwrap();
        net.backward(&[1.0]).unwrap();
        assert_eq!(net.layers()[0].grad_weights(), &[0.5]);
        net.sgd_step(&SgdConfig::new(0.1).unwrap());
        assert_relative_eq!(net.layers()[0].weights()[0], 0.95, epsilon = 1e-15);
        assert!(net.flat_gradients().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identical_nets_step_identically() {
        let mut rng = RngStream::new(11);
        let mut a = Mlp::new(vec![Layer::uniform(2, 2, Activation::Tanh, 0.5, &mut rng).unwrap()]).unwrap();
        let mut b = a.clone();
        for net in [&mut a, &mut b] {
            net.forward(&[0.1, 0.2]).unwrap();
            net.backward(&[1.0, -1.0]).unwrap();
            net.sgd_step(&SgdConfig::new(0.05).unwrap());
        }
        assert_eq!(a.flat_parameters(), b.flat_parameters());
    }

    #[test]
    fn bce_examples() {
        assert_relative_eq!(bce_loss(0.5, 1.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(bce_loss(1.0 - 1e-12, 1.0) < 1e-6);
        assert_relative_eq!(bce_loss(0.9, 0.0), -(0.1f64).ln(), epsilon = 1e-12);
        assert!(bce_loss(0.0, 1.0).is_finite());
        assert!(bce_loss(1.0, 0.0).is_finite());
    }

    #[test]
    fn bce_gradient_matches_difference() {
        for &(p, t) in &[(0.3, 1.0), (0.8, 0.0), (0.5, 1.0)] {
            let h = 1e-7;
            let fd = (bce_loss(p + h, t) - bce_loss(p - h, t)) / (2.0 * h);
            assert_relative_eq!(bce_gradient(p, t), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-6, 0.1, std::f64::consts::LN_2, 1.0, 10.0, 50.0] {
            assert_relative_eq!(softplus(softplus_inverse(y)), y, max_relative = 1e-12);
        }
        assert!(softplus_inverse(std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut rng = RngStream::new(2);
        let net = Mlp::new(vec![
            Layer::uniform(2, 3, Activation::Tanh, 1.0, &mut rng).unwrap(),
            Layer::new(3, 2, vec![0.0; 6], vec![0.1, 0.2], vec![Activation::Tanh, Activation::Softplus])
                .unwrap(),
        ])
        .unwrap();
        let json = serde_json::to_string(&net.snapshot()).unwrap();
        let back: MlpSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(Mlp::from_snapshot(&back).unwrap().flat_parameters(), net.flat_parameters());
        assert!(json.contains("\"softplus\""));
    }
}
