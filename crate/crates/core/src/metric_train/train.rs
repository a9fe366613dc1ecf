use ndarray::{Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampler::LabeledPair;
use super::schedule::cosine_lr;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::siamese::{DenseLayer, Provenance, SiameseModel};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Evaluate the full-set loss after every epoch.
    pub record_history: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            lr_max: 1e-3,
            lr_min: 0.0,
            batch_size: 64,
            seed: 0,
            record_history: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(self.lr_max > self.lr_min && self.lr_min >= 0.0) {
            return Err(Error::config("lr_max", "need lr_max > lr_min >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: SiameseModel<T>,
    /// Mean cross-entropy over the whole training set after the last step.
    pub final_loss: T,
    /// Fraction of training pairs whose argmax class matches the label.
    pub final_accuracy: f64,
    /// Full-set loss after each epoch, when requested.
    pub loss_history: Vec<T>,
    pub steps: usize,
    pub final_lr: f64,
}

struct Adam<T> {
    m: Vec<DenseLayer<T>>,
    v: Vec<DenseLayer<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &SiameseModel<T>) -> Self {
        let zeros = || {
            model
                .layers()
                .iter()
                .map(|l| DenseLayer::zeros(l.input_dim(), l.output_dim()))
                .collect::<Vec<_>>()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut SiameseModel<T>, grads: &[DenseLayer<T>], lr: f64) {
        self.t += 1;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let lr = T::lit(lr);
        let eps = T::lit(ADAM_EPS);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: &T| {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (((layer, g), m), v) in model.layers_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, g| update(p, m, v, g));
        }
    }
}

/// Mean loss and accuracy over the full set, evaluated in fixed-size chunks.
fn evaluate<T: Scalar>(model: &SiameseModel<T>, x: &Array2<T>, labels: &[u8]) -> Result<(T, f64)> {
    const CHUNK: usize = 1024;
    let mut loss = T::zero();
    let mut correct = 0usize;
    for start in (0..labels.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(labels.len());
        let xs = x.slice(ndarray::s![start..end, ..]);
        let (l, _) = model.loss_and_grad(xs, &labels[start..end])?;
        loss += l * T::lit((end - start) as f64);
        let z = model.logits_batch(xs)?;
        for (row, &y) in z.outer_iter().zip(&labels[start..end]) {
            let pred = u8::from(row[1] > row[0]);
            correct += usize::from(pred == y);
        }
    }
    let n = labels.len() as f64;
    Ok((loss / T::lit(n), correct as f64 / n))
}

/// Mini-batch training with per-step cosine-annealed Adam and seeded shuffles.
///
/// Deterministic for a given `(pairs, cfg, init_seed)`.
pub fn train_metric<T: Scalar>(
    pairs: &[LabeledPair<T>],
    cfg: &TrainConfig,
    init_seed: u64,
    provenance: Provenance,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let first = pairs.first().ok_or(Error::EmptyTrainingSet)?;
    let dim = first.diff.len();
    let mut flat = Vec::with_capacity(pairs.len() * dim);
    for p in pairs {
        if p.diff.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.diff.len(),
            });
        }
        flat.extend_from_slice(&p.diff);
    }
    let x = Array2::from_shape_vec((pairs.len(), dim), flat).expect("pair table");
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();

    let mut model = SiameseModel::<T>::he_init(dim, init_seed);
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    let batches_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let steps = cfg.epochs * batches_per_epoch;
    let horizon = steps.saturating_sub(1).max(1);
    let mut step = 0usize;
    let mut lr = cfg.lr_max;
    let mut history = Vec::new();
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let (_, grads) = model.loss_and_grad(xb.view(), &batch_labels)?;
            lr = cosine_lr(step.min(horizon), horizon, cfg.lr_max, cfg.lr_min)?;
            adam.step(&mut model, &grads.layers, lr);
            step += 1;
        }
        if cfg.record_history {
            history.push(evaluate(&model, &x, &labels)?.0);
        }
    }

    let (final_loss, final_accuracy) = evaluate(&model, &x, &labels)?;
    Ok(TrainOutcome {
        model: model.with_provenance(provenance),
        final_loss,
        final_accuracy,
        loss_history: history,
        steps,
        final_lr: lr,
    })
}
