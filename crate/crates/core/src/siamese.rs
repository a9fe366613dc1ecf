//! Siamese metric head: a small ReLU MLP over `|f_i - f_j|` with two output logits.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const HIDDEN_WIDTHS: [usize; 3] = [128, 64, 32];
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// How the training pairs of a metric were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Same camera, `|Δframe| <= tau`.
    Intra { tau: i64 },
    /// Cross-camera positives, any-camera negatives, `|Δframe| <= tau`.
    Inter { tau: i64 },
    /// No camera or temporal constraint.
    Global,
    Untrained,
}

impl Provenance {
    pub fn scheme_name(&self) -> &'static str {
        match self {
            Provenance::Intra { .. } => "intra",
            Provenance::Inter { .. } => "inter",
            Provenance::Global => "global",
            Provenance::Untrained => "untrained",
        }
    }

    pub fn tau(&self) -> Option<i64> {
        match *self {
            Provenance::Intra { tau } | Provenance::Inter { tau } => Some(tau),
            _ => None,
        }
    }
}

/// Fully connected layer, `out = in · weights + bias` with `weights` shaped `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Two-class probability output: `(p_neg, p_pos)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbPair<T> {
    pub p_neg: T,
    pub p_pos: T,
}

impl<T: Scalar> ProbPair<T> {
    /// Numerically stable `softmax(scale * [z_neg, z_pos])`.
    pub fn from_logits(z_neg: T, z_pos: T, scale: T) -> Self {
        let a = z_neg * scale;
        let b = z_pos * scale;
        let m = a.max(b);
        let ea = (a - m).exp();
        let eb = (b - m).exp();
        let s = ea + eb;
        ProbPair {
            p_neg: ea / s,
            p_pos: eb / s,
        }
    }

    pub fn affinity(&self) -> T {
        self.p_pos - self.p_neg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel<T> {
    layers: Vec<DenseLayer<T>>,
    temperature: T,
    provenance: Provenance,
}

/// Parameter gradients, laid out like [`SiameseModel::layers`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> SiameseModel<T> {
    /// He-initialized model `[dim, 128, 64, 32, 2]`; biases start at zero.
    pub fn he_init(dim: usize, seed: u64) -> Self {
        let mut dims = vec![dim];
        dims.extend_from_slice(&HIDDEN_WIDTHS);
        dims.push(2);
        Self::he_init_with_dims(&dims, seed)
    }

    pub fn he_init_with_dims(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                let weights = Array2::from_shape_fn((w[0], w[1]), |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(z * std)
                });
                DenseLayer {
                    weights,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        SiameseModel {
            layers,
            temperature: T::lit(DEFAULT_TEMPERATURE),
            provenance: Provenance::Untrained,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        SiameseModel {
            layers: dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
            temperature: T::lit(DEFAULT_TEMPERATURE),
            provenance: Provenance::Untrained,
        }
    }

    /// Validates layer chaining, the two-logit head and a positive temperature.
    pub fn from_layers(layers: Vec<DenseLayer<T>>, temperature: T, provenance: Provenance) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("layers", "model has no layers"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::config(
                    "layers",
                    format!("layer {} outputs {} but layer {} expects {}", k, pair[0].output_dim(), k + 1, pair[1].input_dim()),
                ));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::config("layers", format!("layer {k} bias length mismatch")));
            }
        }
        if layers.last().map(|l| l.output_dim()) != Some(2) {
            return Err(Error::config("layers", "final layer must have exactly 2 outputs"));
        }
        if !(temperature > T::zero()) {
            return Err(Error::config("temperature", "must be positive"));
        }
        Ok(SiameseModel {
            layers,
            temperature,
            provenance,
        })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.output_dim()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }

    pub fn set_temperature(&mut self, t: T) {
        assert!(t > T::zero(), "temperature must be positive");
        self.temperature = t;
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Raw logits `(z_neg, z_pos)` for each row of `x`.
    pub fn logits_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].apply(x);
        if last > 0 {
            h.mapv_inplace(relu);
        }
        for (k, layer) in self.layers.iter().enumerate().skip(1) {
            h = layer.apply(h.view());
            if k < last {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    pub fn logits(&self, diff: &[T]) -> Result<(T, T)> {
        let x = ArrayView2::from_shape((1, diff.len()), diff).expect("row view");
        let z = self.logits_batch(x)?;
        Ok((z[[0, 0]], z[[0, 1]]))
    }

    /// Temperature-scaled class probabilities for one difference vector.
    pub fn forward(&self, diff: &[T]) -> Result<ProbPair<T>> {
        let (zn, zp) = self.logits(diff)?;
        Ok(ProbPair::from_logits(zn, zp, self.temperature))
    }

    /// `p_pos - p_neg` for every row of `x`.
    pub fn affinities_batch(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        let z = self.logits_batch(x)?;
        Ok(z
            .outer_iter()
            .map(|row| ProbPair::from_logits(row[0], row[1], self.temperature).affinity())
            .collect())
    }

    /// Mean softmax cross-entropy over the batch (no temperature) and its
    /// gradient with respect to every weight and bias.
    pub fn loss_and_grad(&self, x: ArrayView2<T>, labels: &[u8]) -> Result<(T, Gradients<T>)> {
        self.check_input(x.ncols())?;
        assert_eq!(x.nrows(), labels.len(), "one label per row");
        let batch = T::lit(labels.len() as f64);
        let last = self.layers.len() - 1;

        // activations[k] is the input of layer k; pre[k] its pre-activation output.
        let mut activations: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        activations.push(x.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(activations[k].view());
            if k < last {
                activations.push(z.mapv(relu));
            }
            pre.push(z);
        }

        let logits = &pre[last];
        let mut delta = Array2::<T>::zeros(logits.raw_dim());
        let mut loss = T::zero();
        for (r, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
            let p = ProbPair::from_logits(row[0], row[1], T::one());
            let (pn, pp) = (p.p_neg, p.p_pos);
            let target = if label == 1 { pp } else { pn };
            loss -= target.max(T::min_positive_value()).ln();
            delta[[r, 0]] = (pn - if label == 0 { T::one() } else { T::zero() }) / batch;
            delta[[r, 1]] = (pp - if label == 1 { T::one() } else { T::zero() }) / batch;
        }
        loss /= batch;

        let mut grads: Vec<DenseLayer<T>> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = activations[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights.t());
                back.zip_mut_with(&pre[k - 1], |d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = back;
            }
            grads.push(DenseLayer { weights: gw, bias: gb });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    #[test]
    fn zero_model_is_undecided() {
        let m = SiameseModel::<f64>::zeros(&[4, 128, 64, 32, 2]);
        let p = m.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!((p.p_neg, p.p_pos), (0.5, 0.5));
        assert_eq!(p.affinity(), 0.0);
    }

    #[test]
    fn softmax_closed_form() {
        for z in [-3.0, 0.0, 17.5] {
            let p = ProbPair::from_logits(z, z, 0.1f64);
            assert_eq!((p.p_neg, p.p_pos), (0.5, 0.5));
        }
        let p = ProbPair::from_logits(0.0, 10.0, 0.1f64);
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(p.p_pos, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_pos, 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(p.affinity(), 2.0 * expected - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.affinity(), 0.4621, epsilon = 1e-4);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = SiameseModel::<f64>::he_init(16, 3);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let p = m.forward(&x).unwrap();
        assert!((p.p_neg + p.p_pos - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_checked() {
        let m = SiameseModel::<f64>::he_init(8, 0);
        assert!(matches!(
            m.forward(&[0.0; 7]),
            Err(Error::DimensionMismatch { expected: 8, found: 7 })
        ));
    }

    #[test]
    fn he_shape_and_size() {
        let m = SiameseModel::<f32>::he_init(64, 1);
        assert_eq!(m.layer_dims(), vec![64, 128, 64, 32, 2]);
        assert!(m.param_count() < 20_000);
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let m = SiameseModel::<f64>::he_init(64, 9);
        let x = Array2::from_shape_fn((37, 64), |(r, c)| ((r * 64 + c) as f64 * 0.013).cos().abs());
        let batch = m.logits_batch(x.view()).unwrap();
        for r in 0..x.nrows() {
            let (zn, zp) = m.logits(x.row(r).as_slice().unwrap()).unwrap();
            assert_eq!(zn.to_bits(), batch[[r, 0]].to_bits());
            assert_eq!(zp.to_bits(), batch[[r, 1]].to_bits());
        }
    }

    #[test]
    fn from_layers_validates() {
        let good = vec![DenseLayer::<f64>::zeros(3, 4), DenseLayer::zeros(4, 2)];
        assert!(SiameseModel::from_layers(good.clone(), 0.1, Provenance::Global).is_ok());
        let bad_chain = vec![DenseLayer::<f64>::zeros(3, 4), DenseLayer::zeros(5, 2)];
        assert!(SiameseModel::from_layers(bad_chain, 0.1, Provenance::Global).is_err());
        let bad_head = vec![DenseLayer::<f64>::zeros(3, 3)];
        assert!(SiameseModel::from_layers(bad_head, 0.1, Provenance::Global).is_err());
        assert!(SiameseModel::from_layers(good, 0.0, Provenance::Global).is_err());
    }
}
