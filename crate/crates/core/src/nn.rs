//! Fully connected ReLU network ending in a concept head, the masked
//! weighted cross-entropy loss, and a deterministic training loop.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, UNLABELED};
use crate::error::{Error, Result};
use crate::heads::{HeadKind, HeadSpec};
use crate::metrics::{accuracy, macro_f1, ConceptMetrics};
use crate::scalar::Scalar;
use crate::schema::{ConceptSchema, MarginalVector};

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Expected head kind; checked against the artifact when set.
    pub head: Option<HeadKind>,
    /// Per-concept loss weights; defaults to [`default_weights`].
    pub weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            head: None,
            weights: None,
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad("weights must be finite and non-negative");
            }
        }
        match self.optimizer {
            Optimizer::Adam { beta1, beta2, epsilon } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                    return bad("adam needs betas in [0, 1) and a positive epsilon");
                }
            }
            Optimizer::Sgd { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad("momentum must be in [0, 1)");
                }
            }
        }
        Ok(())
    }
}

/// `ω_i = 1 / max(1, #labeled_i)`.
pub fn default_weights<S: Scalar>(data: &Dataset<S>) -> Vec<f64> {
    (0..data.concept_count())
        .map(|i| 1.0 / data.labeled_count(i).max(1) as f64)
        .collect()
}

/// Masked weighted cross-entropy of one sample. Adds the weighted
/// per-concept losses into `concept_losses` and `∂L/∂p̄` into `cotangent`.
pub fn masked_ce<S: Scalar>(
    p: &[S],
    labels: &[i32],
    weights: &[S],
    schema: &ConceptSchema,
    cotangent: &mut [S],
    concept_losses: &mut [S],
) {
    let floor = S::of(PROB_FLOOR);
    for (i, &label) in labels.iter().enumerate() {
        if label == UNLABELED {
            continue;
        }
        let j = schema.flat_index(i, label as usize);
        let pj = p[j];
        let clamped = pj.max(floor);
        concept_losses[i] = concept_losses[i] - weights[i] * clamped.ln();
        if pj > floor {
            cotangent[j] = cotangent[j] - weights[i] / pj;
        }
    }
}

/// Total masked loss `Σ_samples Σ_i ω_i L_i` of a batch of marginals.
pub fn masked_ce_loss<S: Scalar>(
    marginals: &[MarginalVector<S>],
    labels: ArrayView2<'_, i32>,
    weights: &[S],
    schema: &ConceptSchema,
) -> S {
    let mut losses = vec![S::zero(); schema.len()];
    let mut scratch = vec![S::zero(); schema.marginal_width()];
    for (p, y) in marginals.iter().zip(labels.outer_iter()) {
        masked_ce(p.as_slice(), y.as_slice().expect("contiguous labels"), weights, schema, &mut scratch, &mut losses);
    }
    losses.into_iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    /// `inputs × outputs`.
    pub weights: Array2<S>,
    pub bias: Array1<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    pub layers: Vec<Dense<S>>,
}

impl<S: Scalar> Network<S> {
    /// He-uniform initialization, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        S::of(rng.gen_range(-bound..bound))
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Pre-activations of every layer; the last one is the network output.
    fn trace(&self, x: ArrayView2<'_, S>) -> Vec<Array2<S>> {
        let mut zs: Vec<Array2<S>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = if l == 0 {
                x.dot(&layer.weights)
            } else {
                relu(&zs[l - 1]).dot(&layer.weights)
            } + &layer.bias;
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        self.trace(x).pop().unwrap()
    }

    /// Gradients given `∂L/∂output` for every row of the batch.
    fn backward(&self, x: ArrayView2<'_, S>, zs: &[Array2<S>], g_out: Array2<S>) -> Vec<Dense<S>> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = g_out;
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.to_owned() } else { relu(&zs[l - 1]) };
            grads.push(Dense {
                weights: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut prev = g.dot(&self.layers[l].weights.t());
                prev.zip_mut_with(&zs[l - 1], |gp, &z| {
                    if z <= S::zero() {
                        *gp = S::zero();
                    }
                });
                g = prev;
            }
        }
        grads.reverse();
        grads
    }
}

fn relu<S: Scalar>(z: &Array2<S>) -> Array2<S> {
    z.mapv(|v| v.max(S::zero()))
}

/// Network plus head.
#[derive(Debug, Clone)]
pub struct Model<S> {
    pub network: Network<S>,
    pub head: HeadSpec<S>,
}

/// Loss and parameter gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient<S> {
    /// Summed loss over the batch.
    pub loss: S,
    pub concept_losses: Vec<S>,
    /// Gradient of the summed loss.
    pub grads: Vec<Dense<S>>,
}

impl<S: Scalar> Model<S> {
    pub fn new(head: HeadSpec<S>, input_width: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = std::iter::once(input_width)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(head.input_width()))
            .collect();
        Self {
            network: Network::new(&sizes, &mut rng),
            head,
        }
    }

    pub fn schema(&self) -> &ConceptSchema {
        self.head.schema()
    }

    pub fn predict(&self, x: ArrayView2<'_, S>) -> Vec<MarginalVector<S>> {
        let logits = self.network.forward(x);
        logits
            .outer_iter()
            .map(|z| self.head.forward(z.as_slice().expect("contiguous logits")))
            .collect()
    }

    pub fn batch_gradient(&self, x: ArrayView2<'_, S>, labels: ArrayView2<'_, i32>, weights: &[S]) -> BatchGradient<S> {
        let schema = self.head.schema();
        let zs = self.network.trace(x);
        let logits = zs.last().unwrap();
        let mut g_logits = Array2::zeros(logits.raw_dim());
        let mut concept_losses = vec![S::zero(); schema.len()];
        let mut cot = vec![S::zero(); schema.marginal_width()];
        for ((z, y), mut g_row) in logits.outer_iter().zip(labels.outer_iter()).zip(g_logits.outer_iter_mut()) {
            let z = z.as_slice().expect("contiguous logits");
            let y = y.as_slice().expect("contiguous labels");
            if y.iter().all(|&l| l == UNLABELED) {
                continue;
            }
            let p = self.head.forward(z);
            cot.iter_mut().for_each(|c| *c = S::zero());
            masked_ce(p.as_slice(), y, weights, schema, &mut cot, &mut concept_losses);
            for (dst, src) in g_row.iter_mut().zip(self.head.vjp(z, &cot)) {
                *dst = src;
            }
        }
        let grads = self.network.backward(x, &zs, g_logits);
        BatchGradient {
            loss: concept_losses.iter().copied().sum(),
            concept_losses,
            grads,
        }
    }

    pub fn evaluate(&self, data: &Dataset<S>) -> Vec<ConceptMetrics> {
        let schema = self.schema();
        let preds: Vec<Vec<usize>> = self
            .predict(data.features.view())
            .iter()
            .map(|p| p.argmax_outcomes(schema))
            .collect();
        (0..schema.len())
            .filter_map(|i| {
                let truth: Vec<i32> = data.labels.column(i).to_vec();
                let pred: Vec<usize> = preds.iter().map(|p| p[i]).collect();
                Some(ConceptMetrics {
                    concept: i,
                    name: schema.concept(i).name.clone(),
                    support: data.labeled_count(i),
                    accuracy: accuracy(&truth, &pred)?,
                    f1: macro_f1(&truth, &pred)?,
                })
            })
            .collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            head: self.head.kind(),
            layers: self
                .network
                .layers
                .iter()
                .map(|l| LayerFile {
                    inputs: l.weights.nrows(),
                    outputs: l.weights.ncols(),
                    weights: l.weights.iter().map(|w| w.to_f64_lossy()).collect(),
                    bias: l.bias.iter().map(|b| b.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    /// Restores a model from a checkpoint and the head it was trained with.
    pub fn from_checkpoint(checkpoint: &Checkpoint, head: HeadSpec<S>) -> Result<Self> {
        if checkpoint.head != head.kind() {
            return Err(Error::Artifact(format!(
                "checkpoint was trained with the {} head, artifact has {}",
                checkpoint.head,
                head.kind()
            )));
        }
        let mut layers = Vec::new();
        for (k, l) in checkpoint.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Artifact(format!("layer {k} has inconsistent shapes")));
            }
            if k > 0 && checkpoint.layers[k - 1].outputs != l.inputs {
                return Err(Error::Artifact(format!("layer {k} input width does not chain")));
            }
            layers.push(Dense {
                weights: Array2::from_shape_vec((l.inputs, l.outputs), l.weights.iter().map(|&w| S::of(w)).collect())
                    .expect("checked shape"),
                bias: l.bias.iter().map(|&b| S::of(b)).collect(),
            });
        }
        let network = Network { layers };
        if network.layers.is_empty() || network.output_width() != head.input_width() {
            return Err(Error::Dimension(format!(
                "network output width does not match head input width {}",
                head.input_width()
            )));
        }
        Ok(Self { network, head })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub head: HeadKind,
    pub layers: Vec<LayerFile>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// `Σ_samples Σ_i ω_i L_i`, accumulated over the epoch's batches.
    pub loss: f64,
    pub concept_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: Model<S>,
    pub log: Vec<EpochStats>,
}

pub fn write_training_log(path: impl AsRef<Path>, schema: &ConceptSchema, log: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    header.extend(schema.concepts().iter().map(|c| format!("loss_{}", c.name)));
    w.write_record(&header)?;
    for e in log {
        let mut row = vec![e.epoch.to_string(), e.loss.to_string()];
        row.extend(e.concept_losses.iter().map(|l| l.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct OptimizerState<S> {
    first: Vec<Dense<S>>,
    second: Vec<Dense<S>>,
    steps: i32,
}

impl<S: Scalar> OptimizerState<S> {
    fn new(net: &Network<S>) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect()
        };
        Self {
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    fn step(&mut self, net: &mut Network<S>, grads: &[Dense<S>], config: &TrainConfig) {
        self.steps += 1;
        let lr = S::of(config.learning_rate);
        match config.optimizer {
            Optimizer::Sgd { momentum } => {
                let mu = S::of(momentum);
                for ((layer, g), v) in net.layers.iter_mut().zip(grads).zip(&mut self.first) {
                    update_sgd(&mut layer.weights, &g.weights, &mut v.weights, mu, lr);
                    update_sgd(&mut layer.bias, &g.bias, &mut v.bias, mu, lr);
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                let adam = Adam {
                    b1: S::of(beta1),
                    b2: S::of(beta2),
                    eps: S::of(epsilon),
                    step: S::of(config.learning_rate / c1),
                    c2: S::of(c2),
                };
                for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    adam.update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
                    adam.update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
                }
            }
        }
    }
}

fn update_sgd<S: Scalar, D: ndarray::Dimension>(
    w: &mut ndarray::Array<S, D>,
    g: &ndarray::Array<S, D>,
    v: &mut ndarray::Array<S, D>,
    mu: S,
    lr: S,
) {
    ndarray::Zip::from(w).and(g).and(v).for_each(|w, &g, v| {
        *v = mu * *v + g;
        *w = *w - lr * *v;
    });
}

struct Adam<S> {
    b1: S,
    b2: S,
    eps: S,
    step: S,
    c2: S,
}

impl<S: Scalar> Adam<S> {
    fn update<D: ndarray::Dimension>(
        &self,
        w: &mut ndarray::Array<S, D>,
        g: &ndarray::Array<S, D>,
        m: &mut ndarray::Array<S, D>,
        v: &mut ndarray::Array<S, D>,
    ) {
        let one = S::one();
        ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = self.b1 * *m + (one - self.b1) * g;
            *v = self.b2 * *v + (one - self.b2) * g * g;
            *w = *w - self.step * *m / ((*v / self.c2).sqrt() + self.eps);
        });
    }
}

pub fn train<S: Scalar>(config: &TrainConfig, data: &Dataset<S>, head: HeadSpec<S>) -> Result<TrainOutcome<S>> {
    train_with(config, data, head, |_, _| {})
}

/// Trains from scratch; `observer` sees every epoch's statistics and model.
/// Bitwise deterministic for a given config.
pub fn train_with<S: Scalar>(
    config: &TrainConfig,
    data: &Dataset<S>,
    head: HeadSpec<S>,
    mut observer: impl FnMut(&EpochStats, &Model<S>),
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    if let Some(kind) = config.head {
        if kind != head.kind() {
            return Err(Error::Config(format!("config expects the {kind} head, artifact has {}", head.kind())));
        }
    }
    let schema = head.schema().clone();
    data.validate(&schema)?;
    let weights: Vec<S> = match &config.weights {
        Some(w) if w.len() != schema.len() => {
            return Err(Error::Config(format!("{} weights for {} concepts", w.len(), schema.len())))
        }
        Some(w) => w.iter().map(|&x| S::of(x)).collect(),
        None => default_weights(data).into_iter().map(S::of).collect(),
    };

    let mut model = Model::new(head, data.feature_dim(), &config.hidden, config.seed);
    let mut state = OptimizerState::new(&model.network);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut concept_losses = vec![0.0; schema.len()];
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let x = data.features.select(Axis(0), rows);
            let y = data.labels.select(Axis(0), rows);
            let mut g = model.batch_gradient(x.view(), y.view(), &weights);
            let batch_loss = g.loss.to_f64_lossy();
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: format!("batch loss {batch_loss}"),
                });
            }
            let scale = S::one() / S::of(rows.len() as f64);
            for d in &mut g.grads {
                d.weights.mapv_inplace(|v| v * scale);
                d.bias.mapv_inplace(|v| v * scale);
            }
            if g.grads.iter().any(|d| d.weights.iter().chain(d.bias.iter()).any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: "non-finite gradient".into(),
                });
            }
            state.step(&mut model.network, &g.grads, config);
            loss += batch_loss;
            for (acc, l) in concept_losses.iter_mut().zip(&g.concept_losses) {
                *acc += l.to_f64_lossy();
            }
        }
        let stats = EpochStats {
            epoch,
            loss,
            concept_losses,
        };
        log::debug!("epoch {epoch}: loss {loss:.6}");
        observer(&stats, &model);
        log.push(stats);
    }
    Ok(TrainOutcome { model, log })
}

/// Per-concept metrics as an aligned text table.
pub fn print_metrics(out: &mut impl Write, metrics: &[ConceptMetrics]) -> std::io::Result<()> {
    writeln!(out, "{:<16} {:>8} {:>9} {:>9}", "concept", "support", "accuracy", "f1")?;
    for m in metrics {
        writeln!(out, "{:<16} {:>8} {:>9.4} {:>9.4}", m.name, m.support, m.accuracy, m.f1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::woodpecker;
    use ndarray::array;

    #[test]
    fn default_weight_rule() {
        let d = Dataset::new(Array2::<f64>::zeros((10, 1)), {
            let mut l = Array2::from_elem((10, 3), -1);
            for r in 0..3 {
                l[[r, 1]] = 1;
            }
            for r in 0..10 {
                l[[r, 2]] = 2;
            }
            l
        })
        .unwrap();
        assert_eq!(default_weights(&d), vec![1.0, 1.0 / 3.0, 0.1]);
    }

    #[test]
    fn loss_examples() {
        let w = woodpecker();
        let p = MarginalVector::from_vec(vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.0]);
        let ones = [1.0; 3];
        assert_eq!(masked_ce_loss(std::slice::from_ref(&p), array![[1, -1, 2]].view(), &ones, &w), 0.0);
        assert_eq!(masked_ce_loss(std::slice::from_ref(&p), array![[-1, -1, -1]].view(), &ones, &w), 0.0);
        let l = masked_ce_loss(std::slice::from_ref(&p), array![[-1, 2, -1]].view(), &ones, &w);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        // clamped: p = 0 gives -ln 1e-12
        let l = masked_ce_loss(&[p], array![[2, -1, -1]].view(), &ones, &w);
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            hidden: vec![0],
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "optimizer": {"kind": "sgd", "momentum": 0.9}}"#).unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.hidden, vec![64, 64]);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let head = HeadSpec::<f64>::independent(&woodpecker());
        let m = Model::new(head.clone(), 3, &[5], 1);
        let back = Model::from_checkpoint(&m.checkpoint(), head).unwrap();
        assert_eq!(back.network, m.network);
        let other = HeadSpec::<f64>::independent(&crate::schema::fixtures::toy());
        assert!(Model::from_checkpoint(&m.checkpoint(), other).is_err());
    }
}
