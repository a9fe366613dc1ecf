//! Seeded, with-replacement pair samplers. Each scheme draws uniformly over its
//! eligible ordered pairs: an anchor is picked with probability proportional to
//! its number of eligible partners, then a partner uniformly among those.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, PairClass, Result};
use crate::model::{pool_feature, CameraId, Detection, Feature, Frame};
use crate::scalar::Scalar;
use crate::siamese::Provenance;

/// A labeled feature at a camera and frame: one detection or one pooled tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub camera: CameraId,
    pub frame: Frame,
    pub identity: i64,
    pub feature: Feature<T>,
}

/// Detections that carry a ground-truth identity.
pub fn observations<T: Scalar>(detections: &[Detection<T>]) -> Vec<Observation<T>> {
    detections
        .iter()
        .filter_map(|d| {
            d.gt_identity.map(|identity| Observation {
                camera: d.camera,
                frame: d.frame,
                identity,
                feature: d.feature.clone(),
            })
        })
        .collect()
}

/// Ground-truth tracklets: each identity's detections in one camera, cut into
/// consecutive chunks spanning fewer than `tracklet_len` frames and mean-pooled.
/// The observation frame is the chunk midpoint.
pub fn gt_tracklet_observations<T: Scalar>(detections: &[Detection<T>], tracklet_len: Frame) -> Result<Vec<Observation<T>>> {
    let mut groups: BTreeMap<(i64, CameraId), Vec<&Detection<T>>> = BTreeMap::new();
    for d in detections {
        if let Some(id) = d.gt_identity {
            groups.entry((id, d.camera)).or_default().push(d);
        }
    }
    let mut out = Vec::new();
    for ((identity, camera), mut dets) in groups {
        dets.sort_by_key(|d| d.frame);
        let mut start = 0;
        while start < dets.len() {
            let first = dets[start].frame;
            let mut end = start;
            while end < dets.len() && dets[end].frame < first + tracklet_len {
                end += 1;
            }
            let chunk = &dets[start..end];
            let feature = pool_feature(chunk.iter().map(|d| &d.feature))?;
            let last = chunk[chunk.len() - 1].frame;
            out.push(Observation {
                camera,
                frame: first + (last - first) / 2,
                identity,
                feature,
            });
            start = end;
        }
    }
    out.sort_by_key(|o| (o.frame, o.camera, o.identity));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Intra,
    Inter,
    Global,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "intra" => Some(Scheme::Intra),
            "inter" => Some(Scheme::Inter),
            "global" => Some(Scheme::Global),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Intra => "intra",
            Scheme::Inter => "inter",
            Scheme::Global => "global",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    /// Temporal sampling window in frames; ignored for [`Scheme::Global`].
    pub tau: Frame,
    pub pair_count: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pair_count == 0 || self.pair_count % 2 != 0 {
            return Err(Error::config("pair_count", "must be a positive even number"));
        }
        if self.scheme != Scheme::Global && self.tau <= 0 {
            return Err(Error::config("tau", "must be positive for intra and inter sampling"));
        }
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        match self.scheme {
            Scheme::Intra => Provenance::Intra { tau: self.tau },
            Scheme::Inter => Provenance::Inter { tau: self.tau },
            Scheme::Global => Provenance::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairMeta {
    pub camera_i: CameraId,
    pub camera_j: CameraId,
    pub frame_i: Frame,
    pub frame_j: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair<T> {
    /// `|f_i - f_j|`, componentwise.
    pub diff: Vec<T>,
    /// 1 for the same identity, 0 otherwise.
    pub label: u8,
    pub meta: PairMeta,
}

/// Indices sorted by frame, grouped by an arbitrary key.
struct FrameIndex {
    lists: BTreeMap<(i64, i64), Vec<usize>>,
}

impl FrameIndex {
    fn build<T>(obs: &[Observation<T>], key: impl Fn(&Observation<T>) -> (i64, i64)) -> Self {
        let mut lists: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, o) in obs.iter().enumerate() {
            lists.entry(key(o)).or_default().push(i);
        }
        for list in lists.values_mut() {
            list.sort_by_key(|&i| (obs[i].frame, i));
        }
        FrameIndex { lists }
    }

    fn list(&self, key: (i64, i64)) -> &[usize] {
        self.lists.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The sub-slice of `list` with frames in `[lo, hi]`.
    fn range<'a, T>(obs: &[Observation<T>], list: &'a [usize], lo: Frame, hi: Frame) -> &'a [usize] {
        let a = list.partition_point(|&i| obs[i].frame < lo);
        let b = list.partition_point(|&i| obs[i].frame <= hi);
        &list[a..b]
    }
}

/// For anchor `i`: the candidate slice to scan and a predicate selecting eligible partners.
type Candidates<'a> = (&'a [usize], Box<dyn Fn(usize) -> bool + 'a>);

fn draw<'a, T: Scalar>(
    obs: &[Observation<T>],
    count: &dyn Fn(usize) -> u64,
    candidates: &dyn Fn(usize) -> Candidates<'a>,
    n: usize,
    class: PairClass,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let mut prefix = Vec::with_capacity(obs.len());
    let mut total = 0u64;
    for i in 0..obs.len() {
        total += count(i);
        prefix.push(total);
    }
    if total == 0 {
        return Err(Error::SamplerExhausted(class));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.gen_range(0..total);
        let anchor = prefix.partition_point(|&p| p <= k);
        let before = if anchor == 0 { 0 } else { prefix[anchor - 1] };
        let mut rank = k - before;
        let (slice, eligible) = candidates(anchor);
        let partner = slice
            .iter()
            .copied()
            .find(|&j| {
                if j != anchor && eligible(j) {
                    if rank == 0 {
                        return true;
                    }
                    rank -= 1;
                }
                false
            })
            .expect("partner count agrees with candidate scan");
        out.push((anchor, partner));
    }
    Ok(out)
}

fn assemble<T: Scalar>(obs: &[Observation<T>], pos: Vec<(usize, usize)>, neg: Vec<(usize, usize)>) -> Result<Vec<LabeledPair<T>>> {
    let mut out = Vec::with_capacity(pos.len() + neg.len());
    for (label, list) in [(1u8, pos), (0u8, neg)] {
        for (i, j) in list {
            let (a, b) = (&obs[i], &obs[j]);
            out.push(LabeledPair {
                diff: a.feature.abs_diff(&b.feature)?,
                label,
                meta: PairMeta {
                    camera_i: a.camera,
                    camera_j: b.camera,
                    frame_i: a.frame,
                    frame_j: b.frame,
                },
            });
        }
    }
    Ok(out)
}

fn check_scheme(cfg: &SamplerConfig, want: Scheme) -> Result<()> {
    cfg.validate()?;
    if cfg.scheme != want {
        return Err(Error::config("scheme", format!("expected {}, got {}", want.name(), cfg.scheme.name())));
    }
    Ok(())
}

/// Same-camera pairs with `|Δframe| <= tau`.
pub fn sample_intra_pairs<T: Scalar>(obs: &[Observation<T>], cfg: &SamplerConfig) -> Result<Vec<LabeledPair<T>>> {
    check_scheme(cfg, Scheme::Intra)?;
    let by_cam = FrameIndex::build(obs, |o| (o.camera as i64, 0));
    let by_cam_id = FrameIndex::build(obs, |o| (o.camera as i64, o.identity));
    let tau = cfg.tau;
    let window = |i: usize, idx: &'_ FrameIndex, key: (i64, i64)| -> usize {
        FrameIndex::range(obs, idx.list(key), obs[i].frame - tau, obs[i].frame + tau).len()
    };
    let pos_count = |i: usize| (window(i, &by_cam_id, (obs[i].camera as i64, obs[i].identity)) - 1) as u64;
    let neg_count = |i: usize| {
        (window(i, &by_cam, (obs[i].camera as i64, 0)) - window(i, &by_cam_id, (obs[i].camera as i64, obs[i].identity))) as u64
    };
    let pos_cand = |i: usize| -> Candidates<'_> {
        let o = &obs[i];
        let s = FrameIndex::range(obs, by_cam_id.list((o.camera as i64, o.identity)), o.frame - tau, o.frame + tau);
        (s, Box::new(|_| true))
    };
    let neg_cand = |i: usize| -> Candidates<'_> {
        let o = &obs[i];
        let id = o.identity;
        let s = FrameIndex::range(obs, by_cam.list((o.camera as i64, 0)), o.frame - tau, o.frame + tau);
        (s, Box::new(move |j| obs[j].identity != id))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.pair_count / 2;
    let pos = draw(obs, &pos_count, &pos_cand, half, PairClass::Positive, &mut rng)?;
    let neg = draw(obs, &neg_count, &neg_cand, half, PairClass::Negative, &mut rng)?;
    assemble(obs, pos, neg)
}

/// Positives: same identity in different cameras; negatives: different
/// identities in any cameras; both with `|Δframe| <= tau`.
pub fn sample_inter_pairs<T: Scalar>(obs: &[Observation<T>], cfg: &SamplerConfig) -> Result<Vec<LabeledPair<T>>> {
    check_scheme(cfg, Scheme::Inter)?;
    let all = FrameIndex::build(obs, |_| (0, 0));
    let by_id = FrameIndex::build(obs, |o| (o.identity, 0));
    let by_cam_id = FrameIndex::build(obs, |o| (o.camera as i64, o.identity));
    let tau = cfg.tau;
    let window = |i: usize, idx: &'_ FrameIndex, key: (i64, i64)| -> usize {
        FrameIndex::range(obs, idx.list(key), obs[i].frame - tau, obs[i].frame + tau).len()
    };
    let pos_count = |i: usize| {
        let o = &obs[i];
        (window(i, &by_id, (o.identity, 0)) - window(i, &by_cam_id, (o.camera as i64, o.identity))) as u64
    };
    let neg_count = |i: usize| (window(i, &all, (0, 0)) - window(i, &by_id, (obs[i].identity, 0))) as u64;
    let pos_cand = |i: usize| -> Candidates<'_> {
        let o = &obs[i];
        let cam = o.camera;
        let s = FrameIndex::range(obs, by_id.list((o.identity, 0)), o.frame - tau, o.frame + tau);
        (s, Box::new(move |j| obs[j].camera != cam))
    };
    let neg_cand = |i: usize| -> Candidates<'_> {
        let o = &obs[i];
        let id = o.identity;
        let s = FrameIndex::range(obs, all.list((0, 0)), o.frame - tau, o.frame + tau);
        (s, Box::new(move |j| obs[j].identity != id))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.pair_count / 2;
    let pos = draw(obs, &pos_count, &pos_cand, half, PairClass::Positive, &mut rng)?;
    let neg = draw(obs, &neg_count, &neg_cand, half, PairClass::Negative, &mut rng)?;
    assemble(obs, pos, neg)
}

/// All cameras, all frames.
pub fn sample_global_pairs<T: Scalar>(obs: &[Observation<T>], cfg: &SamplerConfig) -> Result<Vec<LabeledPair<T>>> {
    check_scheme(cfg, Scheme::Global)?;
    let by_id = FrameIndex::build(obs, |o| (o.identity, 0));
    let everyone: Vec<usize> = (0..obs.len()).collect();
    let pos_count = |i: usize| (by_id.list((obs[i].identity, 0)).len() - 1) as u64;
    let neg_count = |i: usize| (obs.len() - by_id.list((obs[i].identity, 0)).len()) as u64;
    let pos_cand = |i: usize| -> Candidates<'_> { (by_id.list((obs[i].identity, 0)), Box::new(|_| true)) };
    let neg_cand = |i: usize| -> Candidates<'_> {
        let id = obs[i].identity;
        (&everyone, Box::new(move |j| obs[j].identity != id))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.pair_count / 2;
    let pos = draw(obs, &pos_count, &pos_cand, half, PairClass::Positive, &mut rng)?;
    let neg = draw(obs, &neg_count, &neg_cand, half, PairClass::Negative, &mut rng)?;
    assemble(obs, pos, neg)
}

pub fn sample_pairs<T: Scalar>(obs: &[Observation<T>], cfg: &SamplerConfig) -> Result<Vec<LabeledPair<T>>> {
    match cfg.scheme {
        Scheme::Intra => sample_intra_pairs(obs, cfg),
        Scheme::Inter => sample_inter_pairs(obs, cfg),
        Scheme::Global => sample_global_pairs(obs, cfg),
    }
}
