//! Adversarial GPD parameter estimator.
//!
//! The generator reads a batch of GPD noise (compressed into sorted quantile
//! features) and emits a `(shape, scale)` pair. A fake exceedance is then drawn
//! from that pair through the reparameterized inverse transform, so the
//! discriminator's verdict on it can be differentiated all the way back into
//! the generator. The discriminator sees one real and one fake value per step.
//!
//! Both the noise distribution and the generator's initial output come from the
//! method-of-moments fit of the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mom_fit, Diagnostics, FitResult, Method, SHAPE_CLAMP};
use crate::gpd::{reparam_sample, ExceedanceSet, GpdParams, ReparamSample};
use crate::nn::{bce_gradient, bce_loss, softplus_inverse, Activation, Layer, Mlp, SgdConfig};
use crate::rng::{derive_seed, RngStream};

/// Initial weights are drawn from `[-INIT_BOUND, INIT_BOUND)`.
pub const INIT_BOUND: f64 = 0.05;
/// The shape-head bias is `artanh` of the moment shape clamped to this magnitude.
pub const HEAD_SHAPE_CLAMP: f64 = 0.95;

const ESTIMATE_STREAM: u64 = 0xe57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub noise_batch: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub estimate_batches: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            steps_per_epoch: 50,
            noise_batch: 1000,
            lr_generator: 0.01,
            lr_discriminator: 0.01,
            hidden_width: 10,
            hidden_layers: 3,
            feature_dim: 10,
            seed: 0,
            estimate_batches: 100,
        }
    }
}

impl GanConfig {
    /// `epochs` may be zero (returns the initializer); every other count must be positive.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("steps_per_epoch", self.steps_per_epoch),
            ("noise_batch", self.noise_batch),
            ("hidden_width", self.hidden_width),
            ("hidden_layers", self.hidden_layers),
            ("feature_dim", self.feature_dim),
            ("estimate_batches", self.estimate_batches),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 1")));
            }
        }
        if self.noise_batch < self.feature_dim {
            return Err(Error::InvalidParams(format!(
                "noise_batch {} smaller than feature_dim {}",
                self.noise_batch, self.feature_dim
            )));
        }
        SgdConfig::new(self.lr_generator)?;
        SgdConfig::new(self.lr_discriminator)?;
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

/// Losses recorded at one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub generator: f64,
    pub discriminator_fake: f64,
    pub discriminator_real: f64,
}

impl StepLosses {
    fn all_finite(&self) -> bool {
        self.generator.is_finite()
            && self.discriminator_fake.is_finite()
            && self.discriminator_real.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps_per_epoch: usize,
    pub losses: Vec<StepLosses>,
    pub fit: FitResult,
}

impl TrainReport {
    /// Mean generator loss over the last `epochs` epochs.
    pub fn tail_generator_loss(&self, epochs: usize) -> Option<f64> {
        let take = (epochs * self.steps_per_epoch).min(self.losses.len());
        if take == 0 {
            return None;
        }
        let tail = &self.losses[self.losses.len() - take..];
        Some(tail.iter().map(|l| l.generator).sum::<f64>() / take as f64)
    }

    /// Per-epoch average of each loss.
    pub fn epoch_means(&self) -> Vec<StepLosses> {
        self.losses
            .chunks(self.steps_per_epoch.max(1))
            .map(|c| {
                let k = c.len() as f64;
                StepLosses {
                    generator: c.iter().map(|l| l.generator).sum::<f64>() / k,
                    discriminator_fake: c.iter().map(|l| l.discriminator_fake).sum::<f64>() / k,
                    discriminator_real: c.iter().map(|l| l.discriminator_real).sum::<f64>() / k,
                }
            })
            .collect()
    }
}

/// Empirical quantiles at `(i - 0.5)/feature_dim`, linearly interpolated
/// between order statistics. Sorts `noise` in place.
pub fn noise_features(noise: &mut [f64], feature_dim: usize) -> Vec<f64> {
    noise.sort_unstable_by(f64::total_cmp);
    let n = noise.len();
    (1..=feature_dim)
        .map(|i| {
            let p = (i as f64 - 0.5) / feature_dim as f64;
            let h = (p * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            noise[lo] + (h - lo as f64) * (noise[hi] - noise[lo])
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GanEstimator {
    generator: Mlp,
    discriminator: Mlp,
    noise_params: GpdParams,
    /// Generator output at initialization; estimates are reported as
    /// displacements from it applied to `noise_params`.
    initial_output: (f64, f64),
    rng: RngStream,
    steps: usize,
}

impl GanEstimator {
    /// Builds both networks around the moment fit of `data`.
    pub fn new(data: &ExceedanceSet, cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let mom = mom_fit(data)?;
        let noise_params = mom.params;
        let mut rng = RngStream::new(cfg.seed);

        let mut g_layers = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut width_in = cfg.feature_dim;
        for _ in 0..cfg.hidden_layers {
            g_layers.push(Layer::uniform(width_in, cfg.hidden_width, Activation::Tanh, INIT_BOUND, &mut rng)?);
            width_in = cfg.hidden_width;
        }
        let b_shape = noise_params.shape().clamp(-HEAD_SHAPE_CLAMP, HEAD_SHAPE_CLAMP).atanh();
        let b_scale = softplus_inverse(noise_params.scale());
        g_layers.push(Layer::new(
            width_in,
            2,
            vec![0.0; 2 * width_in],
            vec![b_shape, b_scale],
            vec![Activation::Tanh, Activation::Softplus],
        )?);
        let generator = Mlp::new(g_layers)?;

        let mut d_layers = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut width_in = 1;
        for _ in 0..cfg.hidden_layers {
            d_layers.push(Layer::uniform(width_in, cfg.hidden_width, Activation::Tanh, INIT_BOUND, &mut rng)?);
            width_in = cfg.hidden_width;
        }
        d_layers.push(Layer::uniform(width_in, 1, Activation::Sigmoid, INIT_BOUND, &mut rng)?);
        let discriminator = Mlp::new(d_layers)?;

        let zero_features = vec![0.0; cfg.feature_dim];
        let out = generator.predict(&zero_features)?;
        Ok(Self {
            generator,
            discriminator,
            noise_params,
            initial_output: (out[0], out[1]),
            rng,
            steps: 0,
        })
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn discriminator_mut(&mut self) -> &mut Mlp {
        &mut self.discriminator
    }

    pub fn generator_mut(&mut self) -> &mut Mlp {
        &mut self.generator
    }

    pub fn noise_params(&self) -> GpdParams {
        self.noise_params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Maps raw generator outputs to `(shape, scale)` and returns the
    /// derivative of the scale map (the shape map has unit slope).
    fn map_output(&self, shape_out: f64, scale_out: f64) -> (f64, f64, f64) {
        let shape = self.noise_params.shape() + (shape_out - self.initial_output.0);
        let ratio = self.noise_params.scale() / self.initial_output.1;
        (shape, scale_out * ratio, ratio)
    }

    /// Turns raw generator outputs into a fake sample at uniform `u`, together
    /// with the derivatives of that sample with respect to both raw outputs.
    fn fake_from_output(&self, out: &[f64], u: f64, step: usize) -> Result<(ReparamSample, [f64; 2])> {
        let (shape_raw, scale, scale_slope) = self.map_output(out[0], out[1]);
        let shape = shape_raw.clamp(-SHAPE_CLAMP, SHAPE_CLAMP);
        let shape_pass = if shape == shape_raw { 1.0 } else { 0.0 };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Training {
                step,
                reason: format!("generator produced scale {scale}"),
            });
        }
        let fake = reparam_sample(shape, scale, u);
        let chain = [fake.d_shape * shape_pass, fake.d_scale * scale_slope];
        Ok((fake, chain))
    }

    /// Non-saturating generator loss `bce(D(fake), 1)` for fixed features and
    /// uniform draw. Touches neither network's gradients.
    pub fn generator_objective(&self, features: &[f64], u: f64) -> Result<f64> {
        let out = self.generator.predict(features)?;
        let (fake, _) = self.fake_from_output(&out, u, self.steps)?;
        let p = self.discriminator.predict(&[fake.value])?[0];
        Ok(bce_loss(p, 1.0))
    }

    /// Reverse-mode gradient of [`Self::generator_objective`] with respect to the
    /// generator parameters, in `Mlp::flat_parameters` order. Accumulators are
    /// left zeroed.
    pub fn generator_gradient(&mut self, features: &[f64], u: f64) -> Result<Vec<f64>> {
        self.generator.zero_grad();
        let out = self.generator.forward(features)?;
        let (fake, chain) = self.fake_from_output(&out, u, self.steps)?;
        let p = self.discriminator.forward(&[fake.value])?[0];
        let d_fake = self.discriminator.input_gradient(&[bce_gradient(p, 1.0)])?[0];
        self.generator.backward(&[d_fake * chain[0], d_fake * chain[1]])?;
        let grad = self.generator.flat_gradients();
        self.generator.zero_grad();
        Ok(grad)
    }

    /// One adversarial update of both networks.
    pub fn train_step(&mut self, data: &ExceedanceSet, cfg: &GanConfig) -> Result<StepLosses> {
        if data.is_empty() {
            return Err(Error::DegenerateData("no real samples to train on".into()));
        }
        let step = self.steps;
        let features = noise_batch(self.noise_params, cfg, &mut self.rng);
        let out = self.generator.forward(&features)?;
        let u = self.rng.uniform();
        let (fake, chain) = self.fake_from_output(&out, u, step)?;
        let real = data.values()[self.rng.index(data.n())];

        let p_real = self.discriminator.forward(&[real])?[0];
        self.discriminator.backward(&[bce_gradient(p_real, 1.0)])?;
        let p_fake = self.discriminator.forward(&[fake.value])?[0];
        self.discriminator.backward(&[bce_gradient(p_fake, 0.0)])?;

        let d_fake = self.discriminator.input_gradient(&[bce_gradient(p_fake, 1.0)])?[0];
        self.generator.backward(&[d_fake * chain[0], d_fake * chain[1]])?;

        let losses = StepLosses {
            generator: bce_loss(p_fake, 1.0),
            discriminator_fake: bce_loss(p_fake, 0.0),
            discriminator_real: bce_loss(p_real, 1.0),
        };
        if !losses.all_finite() {
            return Err(Error::Training {
                step,
                reason: format!("non-finite loss {losses:?}"),
            });
        }

        self.discriminator.sgd_step(&SgdConfig::new(cfg.lr_discriminator)?);
        self.generator.sgd_step(&SgdConfig::new(cfg.lr_generator)?);
        self.steps += 1;
        Ok(losses)
    }

    /// Per-batch generator outputs over `cfg.estimate_batches` fresh noise batches.
    /// Uses its own stream, so estimating never perturbs training.
    pub fn batch_estimates(&self, cfg: &GanConfig) -> Result<Vec<(f64, f64)>> {
        let mut rng = RngStream::new(derive_seed(cfg.seed, &[ESTIMATE_STREAM]));
        (0..cfg.estimate_batches)
            .map(|_| {
                let features = noise_batch(self.noise_params, cfg, &mut rng);
                let out = self.generator.predict(&features)?;
                let (shape, scale, _) = self.map_output(out[0], out[1]);
                Ok((shape, scale))
            })
            .collect()
    }

    /// Averaged generator estimate with its diagnostics.
    pub fn estimate_with_diagnostics(&self, cfg: &GanConfig) -> Result<(GpdParams, Diagnostics)> {
        let batches = self.batch_estimates(cfg)?;
        let shapes: Vec<f64> = batches.iter().map(|b| b.0).collect();
        let scales: Vec<f64> = batches.iter().map(|b| b.1).collect();
        let raw_shape = anchored_mean(&shapes);
        let scale = anchored_mean(&scales);
        let shape = raw_shape.clamp(-SHAPE_CLAMP, SHAPE_CLAMP);
        let params = GpdParams::new(shape, scale)?;
        let spread = {
            let var = shapes.iter().map(|s| (s - raw_shape).powi(2)).sum::<f64>()
                / (shapes.len().max(2) - 1) as f64;
            var.sqrt()
        };
        Ok((
            params,
            Diagnostics {
                iterations: Some(self.steps),
                shape_clamped: shape != raw_shape,
                raw_shape: (shape != raw_shape).then_some(raw_shape),
                estimate_batches: Some(cfg.estimate_batches),
                shape_batch_std: Some(spread),
                ..Default::default()
            },
        ))
    }

    pub fn estimate(&self, cfg: &GanConfig) -> Result<GpdParams> {
        self.estimate_with_diagnostics(cfg).map(|(p, _)| p)
    }
}

fn noise_batch(params: GpdParams, cfg: &GanConfig, rng: &mut RngStream) -> Vec<f64> {
    let mut noise = params.sample_values(cfg.noise_batch, rng);
    noise_features(&mut noise, cfg.feature_dim)
}

/// Mean computed as `x0 + mean(x - x0)`, exact when all values coincide.
fn anchored_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

pub fn init_estimator(data: &ExceedanceSet, cfg: &GanConfig) -> Result<GanEstimator> {
    GanEstimator::new(data, cfg)
}

/// Full adversarial schedule: `epochs × steps_per_epoch` steps, then an averaged estimate.
pub fn train(data: &ExceedanceSet, cfg: &GanConfig) -> Result<(FitResult, TrainReport)> {
    if data.n() < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 values, got {}", data.n())));
    }
    let mut est = GanEstimator::new(data, cfg)?;
    let mut losses = Vec::with_capacity(cfg.total_steps());
    for _ in 0..cfg.total_steps() {
        losses.push(est.train_step(data, cfg)?);
    }
    let (params, mut diagnostics) = est.estimate_with_diagnostics(cfg)?;
    let ll = params.log_likelihood(data);
    diagnostics.log_likelihood = ll.is_finite().then_some(ll);
    let fit = FitResult {
        params,
        method: Method::Gan,
        n: data.n(),
        diagnostics,
    };
    let report = TrainReport {
        steps_per_epoch: cfg.steps_per_epoch,
        losses,
        fit: fit.clone(),
    };
    Ok((fit, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data(shape: f64, scale: f64, n: usize, seed: u64) -> ExceedanceSet {
        GpdParams::new(shape, scale).unwrap().sample(n, &mut RngStream::new(seed)).unwrap()
    }

    fn short(epochs: usize) -> GanConfig {
        GanConfig {
            epochs,
            steps_per_epoch: 10,
            noise_batch: 200,
            estimate_batches: 10,
            ..Default::default()
        }
    }

    #[test]
    fn features_of_constant_batch() {
        let mut noise = vec![2.5; 100];
        assert_eq!(noise_features(&mut noise, 10), vec![2.5; 10]);
    }

    #[test]
    fn features_of_integer_ramp() {
        let mut noise: Vec<f64> = (0..1000).rev().map(f64::from).collect();
        let f = noise_features(&mut noise, 10);
        let expected: Vec<f64> = (0..10).map(|i| 49.5 + 100.0 * i as f64).collect();
        for (a, b) in f.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn features_nondecreasing() {
        let mut rng = RngStream::new(4);
        let mut noise = GpdParams::new(0.4, 1.0).unwrap().sample_values(1000, &mut rng);
        let f = noise_features(&mut noise, 10);
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn init_reproduces_moments() {
        let d = data(0.3, 1.0, 500, 1);
        let cfg = short(0);
        let est = GanEstimator::new(&d, &cfg).unwrap();
        let mom = mom_fit(&d).unwrap();
        assert_eq!(est.estimate(&cfg).unwrap(), mom.params);
        let heads = est.generator().layers().last().unwrap();
        assert!(heads.weights().iter().all(|&w| w == 0.0));
        assert_relative_eq!(heads.biases()[0], mom.params.shape().atanh(), epsilon = 1e-15);
    }

    #[test]
    fn head_bias_special_values() {
        // [1 - a, 1 + a] with 2a² = 1 gives shape 0, scale 1
        let a = 0.5f64.sqrt();
        let d = ExceedanceSet::new(vec![1.0 - a, 1.0 + a]).unwrap();
        let est = GanEstimator::new(&d, &short(0)).unwrap();
        assert!(est.generator().layers().last().unwrap().biases()[0].abs() < 1e-12);

        assert!(softplus_inverse(std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn epochs_zero_is_mom() {
        let d = data(0.2, 1.5, 300, 8);
        let (fit, report) = train(&d, &short(0)).unwrap();
        assert_eq!(fit.params, mom_fit(&d).unwrap().params);
        assert!(report.losses.is_empty());
        assert_eq!(fit.method, Method::Gan);
    }

    #[test]
    fn zero_learning_rates_freeze_estimate() {
        let d = data(0.3, 1.0, 200, 2);
        let cfg = GanConfig {
            lr_generator: 0.0,
            lr_discriminator: 0.0,
            ..short(5)
        };
        let (fit, report) = train(&d, &cfg).unwrap();
        assert_eq!(fit.params, mom_fit(&d).unwrap().params);
        assert_eq!(report.losses.len(), 50);
    }

    #[test]
    fn zero_final_discriminator_layer_starts_at_ln2() {
        let d = data(0.3, 1.0, 200, 3);
        let cfg = short(1);
        let mut est = GanEstimator::new(&d, &cfg).unwrap();
        let last = est.discriminator_mut().layers_mut().last_mut().unwrap();
        last.weights_mut().fill(0.0);
        last.biases_mut().fill(0.0);
        let l = est.train_step(&d, &cfg).unwrap();
        assert_relative_eq!(l.discriminator_fake, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(l.discriminator_real, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(l.generator, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = data(0.3, 1.0, 100, 5);
        let cfg = GanConfig { seed: 99, ..short(3) };
        let a = train(&d, &cfg).unwrap();
        let b = train(&d, &cfg).unwrap();
        assert_eq!(a.1, b.1);
        let c = train(&d, &GanConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.1.losses, c.1.losses);
    }

    #[test]
    fn rejects_bad_config() {
        let d = data(0.3, 1.0, 100, 5);
        for cfg in [
            GanConfig { noise_batch: 5, ..short(1) },
            GanConfig { hidden_width: 0, ..short(1) },
            GanConfig { lr_generator: -0.1, ..short(1) },
        ] {
            assert!(GanEstimator::new(&d, &cfg).is_err());
        }
        assert!(train(&ExceedanceSet::new(vec![1.0]).unwrap(), &short(1)).is_err());
    }

    #[test]
    fn report_length_and_bounds() {
        let d = data(0.3, 1.0, 100, 6);
        let cfg = short(4);
        let mut est = GanEstimator::new(&d, &cfg).unwrap();
        for _ in 0..cfg.total_steps() {
            let l = est.train_step(&d, &cfg).unwrap();
            assert!(l.generator >= 0.0 && l.discriminator_fake >= 0.0 && l.discriminator_real >= 0.0);
            let p = est.estimate(&GanConfig { estimate_batches: 2, ..cfg.clone() }).unwrap();
            assert!(p.shape().abs() <= SHAPE_CLAMP && p.scale() > 0.0);
        }
        let (_, report) = train(&d, &cfg).unwrap();
        assert_eq!(report.losses.len(), 40);
        assert_eq!(report.epoch_means().len(), 4);
        assert!(report.tail_generator_loss(2).unwrap().is_finite());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: GanConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.noise_batch, 1000);
        assert!(serde_json::from_str::<GanConfig>(r#"{"epoch": 3}"#).is_err());
    }
}
