//! Pairwise affinity: the calibrated distance rule and the learned Siamese score.
//!
//! Both scores are signed and centred at zero: positive predicts "same identity".

use ndarray::Array2;

use crate::error::{Error, PairClass, Result};
use crate::model::{AffinityMatrix, Feature, Scorable};
use crate::scalar::Scalar;
use crate::siamese::{ProbPair, SiameseModel};

/// Decision threshold halfway between the mean positive and mean negative distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCalibration<T> {
    pub mu_p: T,
    pub mu_n: T,
    pub thres: T,
}

impl<T: Scalar> ThresholdCalibration<T> {
    pub fn from_threshold(thres: T) -> Result<Self> {
        if !(thres > T::zero()) {
            return Err(Error::config("thres", "threshold must be positive"));
        }
        Ok(ThresholdCalibration {
            mu_p: thres,
            mu_n: thres,
            thres,
        })
    }

    /// Set when negatives are on average closer than positives.
    pub fn inverted(&self) -> bool {
        self.mu_n < self.mu_p
    }
}

/// Calibrates from `(distance, is_positive)` samples.
pub fn calibrate_threshold<T: Scalar>(
    labeled_pair_distances: impl IntoIterator<Item = (T, bool)>,
) -> Result<ThresholdCalibration<T>> {
    let (mut sp, mut np, mut sn, mut nn) = (T::zero(), 0usize, T::zero(), 0usize);
    for (d, positive) in labeled_pair_distances {
        if positive {
            sp += d;
            np += 1;
        } else {
            sn += d;
            nn += 1;
        }
    }
    if np == 0 {
        return Err(Error::MissingClass(PairClass::Positive));
    }
    if nn == 0 {
        return Err(Error::MissingClass(PairClass::Negative));
    }
    let mu_p = sp / T::lit(np as f64);
    let mu_n = sn / T::lit(nn as f64);
    let thres = (mu_p + mu_n) / T::lit(2.0);
    if !(thres > T::zero()) {
        return Err(Error::config("thres", "calibrated threshold is not positive"));
    }
    Ok(ThresholdCalibration { mu_p, mu_n, thres })
}

/// `(thres - ||f_i - f_j||) / thres`; `-1` against a flagged zero feature.
pub fn reid_affinity<T: Scalar>(f_i: &Feature<T>, f_j: &Feature<T>, cal: &ThresholdCalibration<T>) -> Result<T> {
    if f_i.is_flagged_zero() || f_j.is_flagged_zero() {
        if f_i.dim() != f_j.dim() {
            return Err(Error::DimensionMismatch {
                expected: f_i.dim(),
                found: f_j.dim(),
            });
        }
        return Ok(-T::one());
    }
    let d = f_i.distance(f_j)?;
    Ok((cal.thres - d) / cal.thres)
}

pub fn siamese_forward<T: Scalar>(model: &SiameseModel<T>, diff: &[T]) -> Result<ProbPair<T>> {
    model.forward(diff)
}

/// `p_pos - p_neg` on `|f_i - f_j|`; `-1` against a flagged zero feature.
pub fn siamese_affinity<T: Scalar>(model: &SiameseModel<T>, f_i: &Feature<T>, f_j: &Feature<T>) -> Result<T> {
    let diff = f_i.abs_diff(f_j)?;
    if f_i.is_flagged_zero() || f_j.is_flagged_zero() {
        return Ok(-T::one());
    }
    Ok(model.forward(&diff)?.affinity())
}

/// Scores every unordered pair `i < j`. Scorer failures carry the pair indices.
pub fn build_affinity_matrix<T, I, F>(items: &[I], mut scorer: F) -> Result<AffinityMatrix<T>>
where
    T: Scalar,
    F: FnMut(&I, &I) -> Result<T>,
{
    let n = items.len();
    let mut m = AffinityMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = scorer(&items[i], &items[j]).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })?;
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// The affinity rules the tracker can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub enum Affinity<T> {
    /// Calibrated Euclidean distance rule.
    ReidDistance(ThresholdCalibration<T>),
    /// Learned metric on absolute feature differences.
    Siamese(SiameseModel<T>),
    /// Ground truth: `+1` for equal labels, `-1` otherwise (and for unlabeled items).
    Oracle,
    Constant(T),
}

impl<T: Scalar> Affinity<T> {
    pub fn name(&self) -> String {
        match self {
            Affinity::ReidDistance(_) => "eq1".to_string(),
            Affinity::Siamese(m) => m.provenance().scheme_name().to_string(),
            Affinity::Oracle => "oracle".to_string(),
            Affinity::Constant(c) => format!("const{c}"),
        }
    }

    pub fn score<I: Scorable<T> + ?Sized>(&self, a: &I, b: &I) -> Result<T> {
        match self {
            Affinity::ReidDistance(cal) => reid_affinity(a.feature(), b.feature(), cal),
            Affinity::Siamese(model) => siamese_affinity(model, a.feature(), b.feature()),
            Affinity::Oracle => Ok(match (a.label(), b.label()) {
                (Some(x), Some(y)) if x == y => T::one(),
                _ => -T::one(),
            }),
            Affinity::Constant(c) => Ok(*c),
        }
    }

    /// Affinity matrix over `items`. The Siamese rule is evaluated in one batch,
    /// which yields the same values as scoring pair by pair.
    pub fn matrix<I: Scorable<T>>(&self, items: &[I]) -> Result<AffinityMatrix<T>> {
        match self {
            Affinity::Siamese(model) => siamese_matrix(model, items),
            _ => build_affinity_matrix(items, |a, b| self.score(a, b)),
        }
    }
}

fn siamese_matrix<T: Scalar, I: Scorable<T>>(model: &SiameseModel<T>, items: &[I]) -> Result<AffinityMatrix<T>> {
    let n = items.len();
    let dim = model.input_dim();
    let mut pairs = Vec::new();
    let mut rows: Vec<T> = Vec::new();
    let mut m = AffinityMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let (fi, fj) = (items[i].feature(), items[j].feature());
            let diff = fi.abs_diff(fj).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })?;
            if diff.len() != dim {
                return Err(Error::Pair {
                    i,
                    j,
                    source: Box::new(Error::DimensionMismatch {
                        expected: dim,
                        found: diff.len(),
                    }),
                });
            }
            if fi.is_flagged_zero() || fj.is_flagged_zero() {
                m.set(i, j, -T::one());
            } else {
                pairs.push((i, j));
                rows.extend_from_slice(&diff);
            }
        }
    }
    if pairs.is_empty() {
        return Ok(m);
    }
    let x = Array2::from_shape_vec((pairs.len(), dim), rows).expect("row-major pair table");
    let scores = model.affinities_batch(x.view())?;
    for (&(i, j), &s) in pairs.iter().zip(scores.iter()) {
        m.set(i, j, s);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn f(v: &[f64]) -> Feature<f64> {
        Feature::normalized(v.to_vec())
    }

    #[test]
    fn calibration_examples() {
        let c = calibrate_threshold([(0.2, true), (0.6, true), (1.0, false), (1.4, false)]).unwrap();
        assert_abs_diff_eq!(c.mu_p, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mu_n, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.thres, 0.8, epsilon = 1e-12);
        assert!(!c.inverted());

        let c = calibrate_threshold([(0.7, true), (0.7, false)]).unwrap();
        assert_eq!(c.thres, 0.7);

        assert_eq!(
            calibrate_threshold::<f64>([(1.0, false)]),
            Err(Error::MissingClass(PairClass::Positive))
        );
        assert_eq!(
            calibrate_threshold::<f64>([(1.0, true)]),
            Err(Error::MissingClass(PairClass::Negative))
        );
    }

    #[test]
    fn inverted_calibration_is_reported() {
        let c = calibrate_threshold([(1.0, true), (0.5, false)]).unwrap();
        assert!(c.inverted());
    }

    #[test]
    fn reid_affinity_examples() {
        let cal = ThresholdCalibration::from_threshold(0.8).unwrap();
        let a = f(&[1.0, 0.0, 0.0]);
        assert_eq!(reid_affinity(&a, &a, &cal).unwrap(), 1.0);

        // distance exactly 0.8: points on the unit circle at angle theta with 2 sin(theta/2) = 0.8
        let theta = 2.0 * (0.4f64).asin();
        let b = Feature::from_unit(vec![theta.cos(), theta.sin(), 0.0]);
        assert_abs_diff_eq!(reid_affinity(&a, &b, &cal).unwrap(), 0.0, epsilon = 1e-12);

        let theta = 2.0 * (0.6f64).asin();
        let c = Feature::from_unit(vec![theta.cos(), theta.sin(), 0.0]);
        assert_abs_diff_eq!(a.distance(&c).unwrap(), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(reid_affinity(&a, &c, &cal).unwrap(), -0.5, epsilon = 1e-12);

        let z = Feature::zeros(3);
        assert_eq!(reid_affinity(&a, &z, &cal).unwrap(), -1.0);
        assert!(reid_affinity(&a, &Feature::zeros(2), &cal).is_err());
    }

    #[test]
    fn siamese_symmetric_and_tied_on_zero_model() {
        let m = SiameseModel::<f64>::zeros(&[3, 128, 64, 32, 2]);
        let (a, b) = (f(&[1.0, 2.0, 3.0]), f(&[3.0, 1.0, 0.5]));
        assert_eq!(siamese_affinity(&m, &a, &b).unwrap(), 0.0);
        let m = SiameseModel::<f64>::he_init(3, 4);
        assert_eq!(
            siamese_affinity(&m, &a, &b).unwrap().to_bits(),
            siamese_affinity(&m, &b, &a).unwrap().to_bits()
        );
        let s1 = siamese_affinity(&m, &a, &a).unwrap();
        let s2 = siamese_affinity(&m, &b, &b).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(siamese_affinity(&m, &a, &Feature::zeros(3)).unwrap(), -1.0);
    }

    #[test]
    fn matrix_examples() {
        let one = vec![f(&[1.0, 0.0])];
        let mut calls = 0;
        let m = build_affinity_matrix(&one, |_, _| {
            calls += 1;
            Ok(0.3)
        })
        .unwrap();
        assert_eq!((m.n(), calls), (1, 0));

        let three = vec![f(&[1.0, 0.0]), f(&[0.0, 1.0]), f(&[1.0, 1.0])];
        let m = build_affinity_matrix(&three, |_, _| Ok(0.25)).unwrap();
        for i in 0..3 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.get(i, j), 0.25);
                }
            }
        }

        // hand-evaluated: d(e1,e2) = sqrt(2), d(e1,(e1+e2)/sqrt2) = d(e2,.) = sqrt(2 - sqrt2)
        let cal = ThresholdCalibration::from_threshold(0.8).unwrap();
        let m = Affinity::ReidDistance(cal).matrix(&three).unwrap();
        let far = (0.8 - 2f64.sqrt()) / 0.8;
        let near = (0.8 - (2.0 - 2f64.sqrt()).sqrt()) / 0.8;
        assert_abs_diff_eq!(m.get(0, 1), far, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(0, 2), near, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(1, 2), near, epsilon = 1e-12);
    }

    #[test]
    fn matrix_error_carries_indices() {
        let items = vec![f(&[1.0, 0.0]), f(&[0.0, 1.0]), Feature::normalized(vec![1.0, 0.0, 0.0])];
        let cal = ThresholdCalibration::from_threshold(0.8).unwrap();
        let err = Affinity::ReidDistance(cal).matrix(&items).unwrap_err();
        assert!(matches!(err, Error::Pair { i: 0, j: 2, .. }));
    }

    #[test]
    fn batched_siamese_matrix_matches_pairwise() {
        let m = SiameseModel::<f64>::he_init(5, 11);
        let items: Vec<_> = (0..7)
            .map(|k| f(&[(k as f64).sin(), (k as f64 * 2.0).cos(), 0.3, k as f64 * 0.1, 1.0]))
            .collect();
        let batched = Affinity::Siamese(m.clone()).matrix(&items).unwrap();
        let pairwise = build_affinity_matrix(&items, |a, b| siamese_affinity(&m, a, b)).unwrap();
        assert_eq!(batched, pairwise);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eq1_decreasing_in_distance(d1 in 0.0f64..2.0, d2 in 0.0f64..2.0, thres in 0.1f64..2.0) {
                let cal = ThresholdCalibration::from_threshold(thres).unwrap();
                let at = |d: f64| {
                    let theta = 2.0 * (d / 2.0).asin();
                    let a = Feature::from_unit(vec![1.0, 0.0]);
                    let b = Feature::from_unit(vec![theta.cos(), theta.sin()]);
                    reid_affinity(&a, &b, &cal).unwrap()
                };
                let (a1, a2) = (at(d1), at(d2));
                prop_assert!(a1 <= 1.0 && a2 <= 1.0);
                if d1 + 1e-9 < d2 { prop_assert!(a1 > a2); }
            }

            #[test]
            fn siamese_bounded_sign_and_temperature(seed in 0u64..1000, x in prop::collection::vec(0.0f64..1.0, 6), t in 0.01f64..10.0) {
                let mut m = SiameseModel::<f64>::he_init(6, seed);
                let (zn, zp) = m.logits(&x).unwrap();
                let a = m.forward(&x).unwrap().affinity();
                prop_assert!((-1.0..=1.0).contains(&a));
                if zp > zn { prop_assert!(a >= 0.0); }
                if zp < zn { prop_assert!(a <= 0.0); }
                m.set_temperature(t);
                let b = m.forward(&x).unwrap().affinity();
                prop_assert!(a.signum() == b.signum() || a == 0.0 || b == 0.0);
            }

            #[test]
            fn matrix_symmetric(seed in 0u64..1000, n in 1usize..8) {
                let m = SiameseModel::<f64>::he_init(4, seed);
                let items: Vec<_> = (0..n).map(|k| f(&[1.0, k as f64, (seed % 7) as f64, 0.5])).collect();
                let a = Affinity::Siamese(m).matrix(&items).unwrap();
                for i in 0..n { for j in 0..n {
                    prop_assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
                    prop_assert!(a.get(i, j).is_finite());
                }}
            }
        }
    }
}
