//! Domain types shared by the affinity, association, synthesis and evaluation layers.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type CameraId = u32;
pub type Frame = i64;

/// Norm below which a pooled mean is treated as degenerate.
const ZERO_NORM: f64 = 1e-9;

/// Unit-norm appearance embedding.
///
/// The all-zero vector is a legal value: it marks a degenerate pooled feature
/// and scores as maximally dissimilar against anything.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature<T> {
    values: Vec<T>,
}

impl<T: Scalar> Feature<T> {
    /// Normalizes `values` to unit length, or returns the flagged zero vector
    /// when the input has (near) zero norm.
    pub fn normalized(mut values: Vec<T>) -> Self {
        let norm = l2(&values);
        if norm.as_f64() < ZERO_NORM {
            values.iter_mut().for_each(|v| *v = T::zero());
        } else {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Feature { values }
    }

    /// Wraps values that are already unit-norm (e.g. read back from disk).
    pub fn from_unit(values: Vec<T>) -> Self {
        Feature { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Feature {
            values: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        l2(&self.values)
    }

    pub fn is_flagged_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn distance(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        let sq: T = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(sq.sqrt())
    }

    /// Componentwise `|self - other|`, the input of the Siamese metric.
    pub fn abs_diff(&self, other: &Self) -> Result<Vec<T>> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .collect())
    }
}

fn l2<T: Scalar>(values: &[T]) -> T {
    values.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Mean of `members` re-normalized to unit length.
pub fn pool_feature<'a, T, I>(members: I) -> Result<Feature<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Feature<T>>,
{
    let mut iter = members.into_iter();
    let first = iter.next().ok_or(Error::EmptyPool)?;
    let mut acc = first.values.clone();
    let mut count = 1usize;
    for f in iter {
        if f.dim() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                found: f.dim(),
            });
        }
        acc.iter_mut().zip(&f.values).for_each(|(a, &v)| *a += v);
        count += 1;
    }
    let n = T::lit(count as f64);
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(Feature::normalized(acc))
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.w * self.h + other.w * other.h - inter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub camera: CameraId,
    pub frame: Frame,
    pub bbox: BBox,
    pub feature: Feature<T>,
    pub gt_identity: Option<i64>,
}

/// Anything that carries a feature and, optionally, a ground-truth label.
///
/// The label is only consulted by the oracle scorer.
pub trait Scorable<T> {
    fn feature(&self) -> &Feature<T>;
    fn label(&self) -> Option<i64> {
        None
    }
}

impl<T, S: Scorable<T> + ?Sized> Scorable<T> for &S {
    fn feature(&self) -> &Feature<T> {
        (**self).feature()
    }
    fn label(&self) -> Option<i64> {
        (**self).label()
    }
}

impl<T> Scorable<T> for Detection<T> {
    fn feature(&self) -> &Feature<T> {
        &self.feature
    }
    fn label(&self) -> Option<i64> {
        self.gt_identity
    }
}

impl<T> Scorable<T> for Feature<T> {
    fn feature(&self) -> &Feature<T> {
        self
    }
}

/// Short single-camera fragment. `members` index into the detection list the
/// tracklet was built from and are ordered by strictly increasing frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet<T> {
    pub camera: CameraId,
    pub members: Vec<usize>,
    pub span: (Frame, Frame),
    pub feature: Feature<T>,
    pub label: Option<i64>,
}

impl<T> Tracklet<T> {
    pub fn overlaps(&self, other: &Tracklet<T>) -> bool {
        self.camera == other.camera && spans_overlap(self.span, other.span)
    }
}

impl<T> Scorable<T> for Tracklet<T> {
    fn feature(&self) -> &Feature<T> {
        &self.feature
    }
    fn label(&self) -> Option<i64> {
        self.label
    }
}

pub fn spans_overlap(a: (Frame, Frame), b: (Frame, Frame)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Chain of tracklets believed to be one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub tracklets: Vec<Tracklet<T>>,
    pub feature: Feature<T>,
    pub identity: u32,
    pub camera_set: BTreeSet<CameraId>,
    pub label: Option<i64>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn from_tracklets(mut tracklets: Vec<Tracklet<T>>, identity: u32) -> Result<Self> {
        tracklets.sort_by_key(|t| (t.span.0, t.camera, t.span.1));
        let feature = pool_feature(tracklets.iter().map(|t| &t.feature))?;
        let camera_set = tracklets.iter().map(|t| t.camera).collect();
        let label = majority_label(
            tracklets
                .iter()
                .filter_map(|t| t.label.map(|l| (l, t.members.len()))),
        );
        Ok(Trajectory {
            tracklets,
            feature,
            identity,
            camera_set,
            label,
        })
    }

    pub fn first_frame(&self) -> Frame {
        self.tracklets.iter().map(|t| t.span.0).min().unwrap_or(0)
    }

    pub fn last_frame(&self) -> Frame {
        self.tracklets.iter().map(|t| t.span.1).max().unwrap_or(0)
    }

    /// True if any pair of same-camera tracklets across the two trajectories overlap in time.
    pub fn conflicts_with(&self, other: &Trajectory<T>) -> bool {
        self.tracklets
            .iter()
            .any(|a| other.tracklets.iter().any(|b| a.overlaps(b)))
    }

    pub fn detection_count(&self) -> usize {
        self.tracklets.iter().map(|t| t.members.len()).sum()
    }
}

impl<T> Scorable<T> for Trajectory<T> {
    fn feature(&self) -> &Feature<T> {
        &self.feature
    }
    fn label(&self) -> Option<i64> {
        self.label
    }
}

/// Weighted majority vote; ties resolve to the smallest label.
pub fn majority_label(votes: impl IntoIterator<Item = (i64, usize)>) -> Option<i64> {
    let mut tally: BTreeMap<i64, usize> = BTreeMap::new();
    for (label, weight) in votes {
        *tally.entry(label).or_default() += weight;
    }
    let mut best: Option<(i64, usize)> = None;
    for (label, w) in tally {
        if best.map_or(true, |(_, bw)| w > bw) {
            best = Some((label, w));
        }
    }
    best.map(|(l, _)| l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalWindow {
    pub start: Frame,
    pub length: Frame,
    pub stride: Frame,
}

impl TemporalWindow {
    pub fn end(&self) -> Frame {
        self.start + self.length
    }

    /// Half-open membership test: `start <= frame < start + length`.
    pub fn contains(&self, frame: Frame) -> bool {
        frame >= self.start && frame < self.end()
    }
}

/// Sliding windows starting at `range.0`, advancing by `stride` while the start
/// does not exceed `range.1`. The last window may overhang the range.
pub fn windows_over(range: (Frame, Frame), length: Frame, stride: Frame) -> Result<Vec<TemporalWindow>> {
    if length <= 0 || stride <= 0 || stride > length {
        return Err(Error::InvalidWindow { length, stride });
    }
    let (first, last) = range;
    if last < first {
        return Err(Error::InvalidWindow { length, stride });
    }
    let mut out = Vec::new();
    let mut start = first;
    while start <= last {
        out.push(TemporalWindow {
            start,
            length,
            stride,
        });
        start += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScopeKind {
    Reid,
    Mct,
    Sct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraRule {
    SameCamera,
    CrossCamera,
    Any,
}

/// A matching scope: which pairs an association (or a sampler) may consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScopeSpec {
    kind: ScopeKind,
    window_len: Option<Frame>,
    camera_rule: CameraRule,
}

impl ScopeSpec {
    pub fn reid() -> Self {
        ScopeSpec {
            kind: ScopeKind::Reid,
            window_len: None,
            camera_rule: CameraRule::Any,
        }
    }

    pub fn mct(window_len: Frame) -> Self {
        ScopeSpec {
            kind: ScopeKind::Mct,
            window_len: Some(window_len),
            camera_rule: CameraRule::CrossCamera,
        }
    }

    pub fn sct(window_len: Frame) -> Self {
        ScopeSpec {
            kind: ScopeKind::Sct,
            window_len: Some(window_len),
            camera_rule: CameraRule::SameCamera,
        }
    }

    pub fn kind(&self) -> ScopeKind {
        self.kind
    }

    /// `None` means unbounded.
    pub fn window_len(&self) -> Option<Frame> {
        self.window_len
    }

    pub fn camera_rule(&self) -> CameraRule {
        self.camera_rule
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScopeKind::Reid => "reid",
            ScopeKind::Mct => "mct",
            ScopeKind::Sct => "sct",
        }
    }

    pub fn admits(&self, cam_i: CameraId, frame_i: Frame, cam_j: CameraId, frame_j: Frame) -> bool {
        let camera_ok = match self.camera_rule {
            CameraRule::SameCamera => cam_i == cam_j,
            CameraRule::CrossCamera => cam_i != cam_j,
            CameraRule::Any => true,
        };
        camera_ok && self.window_len.map_or(true, |w| (frame_i - frame_j).abs() <= w)
    }
}

/// Dense symmetric affinity table. The diagonal is stored as zero and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Scalar> AffinityMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        AffinityMatrix {
            n,
            a: vec![T::zero(); n * n],
        }
    }

    /// Builds a matrix from a full row-major table, symmetrizing from the upper triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`. Writes to the diagonal are ignored.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        if i == j {
            return;
        }
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.n..(i + 1) * self.n]
    }
}
