use ndarray::ArrayView2;

use super::sampler::LabeledPair;
use crate::scalar::Scalar;
use crate::siamese::{Gradients, ProbPair, SiameseModel};

const DENOMINATOR_FLOOR: f64 = 1e-8;
/// Each step shrink divides the probe step by this factor.
const STEP_SHRINK: f64 = 10.0;
const MAX_SHRINKS: usize = 3;

/// Cross-entropy of one pair, as in training, together with the signs of every
/// hidden pre-activation (the linear region the input lies in). Forward only.
fn probe_loss<T: Scalar>(model: &SiameseModel<T>, pair: &LabeledPair<T>) -> (T, Vec<bool>) {
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut h = ArrayView2::from_shape((1, pair.diff.len()), &pair.diff).expect("row view").to_owned();
    let mut signs = Vec::new();
    for layer in &layers[..last] {
        let mut z = h.dot(&layer.weights);
        z += &layer.bias;
        signs.extend(z.iter().map(|&v| v > T::zero()));
        z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
        h = z;
    }
    let mut z = h.dot(&layers[last].weights);
    z += &layers[last].bias;
    let p = ProbPair::from_logits(z[[0, 0]], z[[0, 1]], T::one());
    let target = if pair.label == 1 { p.p_pos } else { p.p_neg };
    (-target.max(T::min_positive_value()).ln(), signs)
}

enum Param {
    Weight(usize, usize, usize),
    Bias(usize, usize),
}

fn slot<'a, T>(model: &'a mut SiameseModel<T>, p: &Param) -> &'a mut T
where
    T: Scalar,
{
    match *p {
        Param::Weight(k, r, c) => &mut model.layers_mut()[k].weights[[r, c]],
        Param::Bias(k, c) => &mut model.layers_mut()[k].bias[c],
    }
}

/// Five-point central difference `(-f(2h) + 8 f(h) - 8 f(-h) + f(-2h)) / 12h`.
///
/// Inside one ReLU region the loss is smooth in any single parameter, so the
/// step starts at `epsilon` and shrinks until no probe changes the activation
/// pattern; a probe across a kink would measure a one-sided slope.
fn numeric<T: Scalar>(probe: &mut SiameseModel<T>, pair: &LabeledPair<T>, p: &Param, epsilon: T, base: &[bool]) -> T {
    let orig = *slot(probe, p);
    let mut h = epsilon;
    for attempt in 0..=MAX_SHRINKS {
        let mut values = [T::zero(); 4];
        let mut crossed = false;
        for (v, m) in values.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
            *slot(probe, p) = orig + h * T::lit(m);
            let (l, signs) = probe_loss(probe, pair);
            crossed |= signs != base;
            *v = l;
        }
        *slot(probe, p) = orig;
        if !crossed || attempt == MAX_SHRINKS {
            let [m2, m1, p1, p2] = values;
            // differences first: equal losses must give exactly zero
            return (T::lit(8.0) * (p1 - m1) - (p2 - m2)) / (T::lit(12.0) * h);
        }
        h /= T::lit(STEP_SHRINK);
    }
    unreachable!("the last attempt always returns")
}

/// Maximum relative error between `analytic` and central finite differences of
/// the cross-entropy loss, over every weight and bias. `epsilon` is the largest
/// probe step; it is reduced where a probe would cross a ReLU kink.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn compare_gradients<T: Scalar>(model: &SiameseModel<T>, pair: &LabeledPair<T>, epsilon: T, analytic: &Gradients<T>) -> T {
    let mut probe = model.clone();
    let base = probe_loss(model, pair).1;
    let floor = T::lit(DENOMINATOR_FLOOR);
    let mut worst = T::zero();
    let mut check = |a: T, numeric: T| {
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / denom);
    };
    for k in 0..model.layers().len() {
        let (rows, cols) = model.layers()[k].weights.dim();
        for r in 0..rows {
            for c in 0..cols {
                let n = numeric(&mut probe, pair, &Param::Weight(k, r, c), epsilon, &base);
                check(analytic.layers[k].weights[[r, c]], n);
            }
        }
        for c in 0..model.layers()[k].bias.len() {
            let n = numeric(&mut probe, pair, &Param::Bias(k, c), epsilon, &base);
            check(analytic.layers[k].bias[c], n);
        }
    }
    worst
}

/// [`compare_gradients`] against the model's own backpropagated gradient.
pub fn gradient_check<T: Scalar>(model: &SiameseModel<T>, pair: &LabeledPair<T>, epsilon: T) -> T {
    let x = ArrayView2::from_shape((1, pair.diff.len()), &pair.diff).expect("row view");
    let (_, grads) = model
        .loss_and_grad(x, &[pair.label])
        .expect("pair dimension must match the model");
    compare_gradients(model, pair, epsilon, &grads)
}
