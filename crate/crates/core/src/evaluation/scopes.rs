//! Pairwise error analysis of affinity rules per matching scope.

use ndarray::Array2;

use crate::affinity::Affinity;
use crate::error::{Error, Result};
use crate::model::{Detection, ScopeSpec};
use crate::scalar::Scalar;
use crate::synthgen::{scope_pair_iter, ScopePair};

/// Pairs per batched metric evaluation.
const BATCH: usize = 4096;

/// Pair tallies; a pair is predicted positive iff its affinity is `> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScopeErrorReport {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ScopeErrorReport {
    pub fn tally<T: Scalar>(scored: impl IntoIterator<Item = (T, bool)>) -> Self {
        let mut r = ScopeErrorReport::default();
        for (a, same) in scored {
            match (a > T::zero(), same) {
                (true, true) => r.true_pos += 1,
                (false, false) => r.true_neg += 1,
                (true, false) => r.false_pos += 1,
                (false, true) => r.false_neg += 1,
            }
        }
        r
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn positives(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    pub fn negatives(&self) -> u64 {
        self.true_neg + self.false_pos
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// `count` as a percentage of all pairs; 0 for an empty report.
    pub fn pct(&self, count: u64) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            100.0 * count as f64 / self.total() as f64
        }
    }

    pub fn fp_pct(&self) -> f64 {
        self.pct(self.false_pos)
    }

    pub fn fn_pct(&self) -> f64 {
        self.pct(self.false_neg)
    }

    pub fn tp_pct(&self) -> f64 {
        self.pct(self.true_pos)
    }

    pub fn tn_pct(&self) -> f64 {
        self.pct(self.true_neg)
    }

    pub fn p_pct(&self) -> f64 {
        self.pct(self.positives())
    }

    pub fn n_pct(&self) -> f64 {
        self.pct(self.negatives())
    }

    pub fn merge(&self, other: &ScopeErrorReport) -> ScopeErrorReport {
        ScopeErrorReport {
            true_pos: self.true_pos + other.true_pos,
            true_neg: self.true_neg + other.true_neg,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
        }
    }
}

/// Affinity of every pair, in order. Metric rules are evaluated in batches.
pub fn score_pairs<T: Scalar>(dets: &[Detection<T>], pairs: &[ScopePair], affinity: &Affinity<T>) -> Result<Vec<T>> {
    let Affinity::Siamese(model) = affinity else {
        return pairs
            .iter()
            .map(|p| affinity.score(&dets[p.i], &dets[p.j]))
            .collect();
    };
    let dim = model.input_dim();
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(BATCH) {
        let mut rows = Vec::with_capacity(chunk.len() * dim);
        let mut flagged = Vec::with_capacity(chunk.len());
        for p in chunk {
            let (a, b) = (&dets[p.i].feature, &dets[p.j].feature);
            let diff = a.abs_diff(b)?;
            if diff.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: diff.len(),
                });
            }
            flagged.push(a.is_flagged_zero() || b.is_flagged_zero());
            rows.extend(diff);
        }
        let x = Array2::from_shape_vec((chunk.len(), dim), rows).expect("row-major pair table");
        let scores = model.affinities_batch(x.view())?;
        out.extend(scores.iter().zip(&flagged).map(|(&s, &f)| if f { -T::one() } else { s }));
    }
    Ok(out)
}

pub fn scope_error_analysis<T: Scalar>(
    dets: &[Detection<T>],
    pairs: &[ScopePair],
    affinity: &Affinity<T>,
) -> Result<ScopeErrorReport> {
    let scores = score_pairs(dets, pairs, affinity)?;
    Ok(ScopeErrorReport::tally(scores.into_iter().zip(pairs.iter().map(|p| p.same_identity))))
}

/// Per-class normalized histograms over `[lo, hi]`; values outside are clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityHistogram {
    pub edges: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    /// False when the class had no samples and its densities are all zero.
    pub positive_normalized: bool,
    pub negative_normalized: bool,
}

impl AffinityHistogram {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Mass-weighted mean of bin centres.
    pub fn mean(masses: &[f64], edges: &[f64]) -> f64 {
        masses
            .iter()
            .enumerate()
            .map(|(b, m)| m * 0.5 * (edges[b] + edges[b + 1]))
            .sum()
    }
}

/// Display range: `[-3, 1]` for the distance rule, whose scores are unbounded
/// below, and `[-1, 1]` otherwise.
pub fn histogram_range<T>(affinity: &Affinity<T>) -> (f64, f64) {
    match affinity {
        Affinity::ReidDistance(_) => (-3.0, 1.0),
        _ => (-1.0, 1.0),
    }
}

/// Bins are `[lo_b, hi_b)` except the last, which is closed.
pub fn affinity_histograms<T: Scalar>(
    scored: impl IntoIterator<Item = (T, bool)>,
    n_bins: usize,
    range: (f64, f64),
) -> Result<AffinityHistogram> {
    if n_bins < 2 {
        return Err(Error::config("n_bins", "must be at least 2"));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::config("range", "must satisfy lo < hi"));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|b| if b == n_bins { hi } else { lo + width * b as f64 }).collect();
    let mut pos = vec![0u64; n_bins];
    let mut neg = vec![0u64; n_bins];
    for (a, same) in scored {
        let v = a.as_f64().clamp(lo, hi);
        let b = (((v - lo) / width).floor() as usize).min(n_bins - 1);
        // floating rounding can land one bin high at an interior edge
        let b = if b > 0 && v < edges[b] { b - 1 } else { b };
        if same {
            pos[b] += 1;
        } else {
            neg[b] += 1;
        }
    }
    let normalize = |counts: &[u64]| -> (Vec<f64>, bool) {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            (vec![0.0; counts.len()], false)
        } else {
            (counts.iter().map(|&c| c as f64 / total as f64).collect(), true)
        }
    };
    let (positive, positive_normalized) = normalize(&pos);
    let (negative, negative_normalized) = normalize(&neg);
    Ok(AffinityHistogram {
        edges,
        positive,
        negative,
        positive_normalized,
        negative_normalized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scope: String,
    pub scorer: String,
    pub report: ScopeErrorReport,
    /// Percentage-point differences from the first scorer on the same scope.
    pub delta_fp: f64,
    pub delta_fn: f64,
}

/// Scores one shared pair sample per scope with every scorer. Requires at
/// least two scorers; deltas are relative to the first.
pub fn compare_affinity_errors<T: Scalar>(
    dets: &[Detection<T>],
    scopes: &[ScopeSpec],
    scorers: &[(String, Affinity<T>)],
    seed: u64,
    max_pairs: Option<usize>,
) -> Result<Vec<ComparisonRow>> {
    if scorers.len() < 2 {
        return Err(Error::config("scorers", "at least two are required"));
    }
    let mut rows = Vec::new();
    for scope in scopes {
        let pairs = scope_pair_iter(dets, scope, seed, max_pairs);
        let mut base: Option<ScopeErrorReport> = None;
        for (name, aff) in scorers {
            let report = scope_error_analysis(dets, &pairs, aff)?;
            let b = *base.get_or_insert(report);
            rows.push(ComparisonRow {
                scope: scope.name().to_string(),
                scorer: name.clone(),
                report,
                delta_fp: report.fp_pct() - b.fp_pct(),
                delta_fn: report.fn_pct() - b.fn_pct(),
            });
        }
    }
    Ok(rows)
}
