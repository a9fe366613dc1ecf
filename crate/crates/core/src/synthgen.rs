//! Seeded synthetic camera networks with ground-truth identities.
//!
//! A feature is `normalize(g + alpha*c + beta*d(t)*u + gamma*w(t) + sigma*e/sqrt(D))`:
//! identity anchor `g`, camera bias `c`, per-identity drift direction `u`
//! scaled by `d(t) = clamp((t - spawn) / drift_scale, 0, 1)`, a network-wide
//! illumination direction `w(t)` interpolated between random knots every
//! `illumination_period` frames, and isotropic noise `e`.
//!
//! Camera biases and illumination knots derive from `seed` alone, so worlds
//! that differ only in `split` share an environment but not their targets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{BBox, CameraId, Detection, Feature, Frame, ScopeKind, ScopeSpec};
use crate::scalar::Scalar;

/// Undirected camera link with an inclusive travel-time range in frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraEdge {
    pub a: CameraId,
    pub b: CameraId,
    pub travel: (Frame, Frame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub cameras: u32,
    pub edges: Vec<CameraEdge>,
    pub n_targets: usize,
    /// Inclusive range of frames spent per camera visit.
    pub dwell_range: (Frame, Frame),
    pub visits_range: (u32, u32),
    /// Targets spawn uniformly in `[0, spawn_horizon)`.
    pub spawn_horizon: Frame,
    pub feature_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub illumination_period: Frame,
    pub drift_scale: Frame,
    pub dropout: f64,
    pub seed: u64,
    /// Selects an independent target population over the same environment.
    pub split: u64,
}

/// `n` cameras in a ring, every link with the same travel range.
pub fn ring(n: u32, travel: (Frame, Frame)) -> Vec<CameraEdge> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![CameraEdge { a: 0, b: 1, travel }],
        _ => (0..n)
            .map(|a| CameraEdge {
                a,
                b: (a + 1) % n,
                travel,
            })
            .collect(),
    }
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            cameras: 4,
            edges: ring(4, (50, 150)),
            n_targets: 20,
            dwell_range: (100, 250),
            visits_range: (2, 4),
            spawn_horizon: 4500,
            feature_dim: 64,
            alpha: 0.9,
            beta: 0.5,
            sigma: 0.25,
            gamma: 1.6,
            illumination_period: 1000,
            drift_scale: 500,
            dropout: 0.0,
            seed: 0,
            split: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(field, reason));
        if self.cameras == 0 {
            return bad("cameras", "must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be positive");
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("sigma", self.sigma), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be finite and non-negative");
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if self.dwell_range.0 <= 0 || self.dwell_range.1 < self.dwell_range.0 {
            return bad("dwell_range", "must be a positive range");
        }
        if self.visits_range.0 == 0 || self.visits_range.1 < self.visits_range.0 {
            return bad("visits_range", "must be a positive range");
        }
        if self.spawn_horizon <= 0 {
            return bad("spawn_horizon", "must be positive");
        }
        if self.illumination_period <= 0 {
            return bad("illumination_period", "must be positive");
        }
        if self.drift_scale <= 0 {
            return bad("drift_scale", "must be positive");
        }
        for e in &self.edges {
            if e.a >= self.cameras || e.b >= self.cameras || e.a == e.b {
                return bad("edges", "endpoints must be distinct existing cameras");
            }
            if e.travel.0 < 0 || e.travel.1 < e.travel.0 {
                return bad("edges", "travel range must be non-negative and ordered");
            }
        }
        if !self.connected() {
            return bad("edges", "camera graph must be connected");
        }
        Ok(())
    }

    fn connected(&self) -> bool {
        let mut seen = BTreeSet::from([0u32]);
        let mut queue = VecDeque::from([0u32]);
        while let Some(c) = queue.pop_front() {
            for e in &self.edges {
                let next = if e.a == c {
                    e.b
                } else if e.b == c {
                    e.a
                } else {
                    continue;
                };
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen.len() == self.cameras as usize
    }

    fn neighbours(&self, c: CameraId) -> Vec<(CameraId, (Frame, Frame))> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.a == c {
                    Some((e.b, e.travel))
                } else if e.b == c {
                    Some((e.a, e.travel))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Last frame any target can be visible.
    fn max_frame(&self) -> Frame {
        let longest_travel = self.edges.iter().map(|e| e.travel.1).max().unwrap_or(0);
        self.spawn_horizon + self.visits_range.1 as Frame * (self.dwell_range.1 + longest_travel)
    }
}

/// A target's continuous presence in one camera, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GtSpan {
    pub camera: CameraId,
    pub start: Frame,
    pub end: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset<T> {
    /// Sorted by `(camera, frame, identity)`.
    pub detections: Vec<Detection<T>>,
    pub gt_tracks: BTreeMap<i64, Vec<GtSpan>>,
    pub config: WorldConfig,
}

/// Identity-specific appearance terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAppearance<T> {
    pub anchor: Feature<T>,
    pub drift: Feature<T>,
}

/// Camera biases and illumination knots shared by all targets of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<T> {
    pub camera_biases: Vec<Feature<T>>,
    pub knots: Vec<Feature<T>>,
    pub period: Frame,
}

impl<T: Scalar> Environment<T> {
    pub fn new(cfg: &WorldConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let camera_biases = (0..cfg.cameras).map(|_| random_unit(cfg.feature_dim, &mut rng)).collect();
        let n_knots = (cfg.max_frame() / cfg.illumination_period) as usize + 2;
        let knots = (0..n_knots).map(|_| random_unit(cfg.feature_dim, &mut rng)).collect();
        Environment {
            camera_biases,
            knots,
            period: cfg.illumination_period,
        }
    }

    /// Unit illumination direction at frame `t >= 0`.
    pub fn illumination(&self, t: Frame) -> Feature<T> {
        let i = (t.max(0) / self.period) as usize;
        let s = T::lit((t.max(0) % self.period) as f64 / self.period as f64);
        let (a, b) = (&self.knots[i.min(self.knots.len() - 1)], &self.knots[(i + 1).min(self.knots.len() - 1)]);
        Feature::normalized(
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(&x, &y)| (T::one() - s) * x + s * y)
                .collect(),
        )
    }
}

pub fn random_unit<T: Scalar>(dim: usize, rng: &mut ChaCha8Rng) -> Feature<T> {
    loop {
        let v: Vec<T> = (0..dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let f = Feature::normalized(v);
        if !f.is_flagged_zero() {
            return f;
        }
    }
}

/// One appearance sample. `illumination` is the unit direction at `t`.
pub fn embed<T: Scalar>(
    target: &TargetAppearance<T>,
    camera_bias: &Feature<T>,
    illumination: &Feature<T>,
    t: Frame,
    spawn_t: Frame,
    cfg: &WorldConfig,
    rng: &mut ChaCha8Rng,
) -> Feature<T> {
    let d = ((t - spawn_t) as f64 / cfg.drift_scale as f64).clamp(0.0, 1.0);
    let (alpha, drift, gamma) = (T::lit(cfg.alpha), T::lit(cfg.beta * d), T::lit(cfg.gamma));
    let noise = T::lit(cfg.sigma / (cfg.feature_dim as f64).sqrt());
    let v = (0..cfg.feature_dim)
        .map(|k| {
            let e = T::lit(rng.sample::<f64, _>(StandardNormal));
            target.anchor.as_slice()[k]
                + alpha * camera_bias.as_slice()[k]
                + drift * target.drift.as_slice()[k]
                + gamma * illumination.as_slice()[k]
                + noise * e
        })
        .collect();
    Feature::normalized(v)
}

/// Deterministic per-target box drifting across the view; unique per `(identity, frame)`.
fn synth_box(identity: i64, frame: Frame, visit_start: Frame) -> BBox {
    BBox {
        x: 20.0 + 2.0 * (frame - visit_start) as f64,
        y: 40.0 + 90.0 * identity as f64,
        w: 48.0,
        h: 96.0,
    }
}

pub fn generate_world<T: Scalar>(cfg: &WorldConfig) -> Result<SynthDataset<T>> {
    cfg.validate()?;
    let env = Environment::<T>::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.split + 1);
    let mut detections = Vec::new();
    let mut gt_tracks = BTreeMap::new();
    for identity in 0..cfg.n_targets as i64 {
        let target = TargetAppearance {
            anchor: random_unit(cfg.feature_dim, &mut rng),
            drift: random_unit(cfg.feature_dim, &mut rng),
        };
        let mut camera = rng.gen_range(0..cfg.cameras);
        let spawn = rng.gen_range(0..cfg.spawn_horizon);
        let visits = rng.gen_range(cfg.visits_range.0..=cfg.visits_range.1);
        let mut t = spawn;
        let mut spans = Vec::new();
        for v in 0..visits {
            let dwell = rng.gen_range(cfg.dwell_range.0..=cfg.dwell_range.1);
            for f in t..t + dwell {
                let dropped = rng.gen::<f64>() < cfg.dropout;
                if dropped {
                    continue;
                }
                let feature = embed(
                    &target,
                    &env.camera_biases[camera as usize],
                    &env.illumination(f),
                    f,
                    spawn,
                    cfg,
                    &mut rng,
                );
                detections.push(Detection {
                    camera,
                    frame: f,
                    bbox: synth_box(identity, f, t),
                    feature,
                    gt_identity: Some(identity),
                });
            }
            spans.push(GtSpan {
                camera,
                start: t,
                end: t + dwell - 1,
            });
            t += dwell;
            if v + 1 < visits {
                let next = cfg.neighbours(camera);
                if next.is_empty() {
                    break;
                }
                let (c, travel) = next[rng.gen_range(0..next.len())];
                camera = c;
                t += rng.gen_range(travel.0..=travel.1);
            }
        }
        gt_tracks.insert(identity, spans);
    }
    detections.sort_by_key(|d| (d.camera, d.frame, d.gt_identity));
    Ok(SynthDataset {
        detections,
        gt_tracks,
        config: cfg.clone(),
    })
}

/// Unordered pair of detection indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScopePair {
    pub i: usize,
    pub j: usize,
    pub same_identity: bool,
}

/// Number of unordered detection pairs admitted by `scope`.
pub fn scope_pair_count<T>(dets: &[Detection<T>], scope: &ScopeSpec) -> u64 {
    let n = dets.len() as u64;
    if scope.kind() == ScopeKind::Reid {
        return n * n.saturating_sub(1) / 2;
    }
    let w = scope.window_len().unwrap_or(Frame::MAX / 4);
    let mut by_cam: BTreeMap<CameraId, Vec<Frame>> = BTreeMap::new();
    for d in dets {
        by_cam.entry(d.camera).or_default().push(d.frame);
    }
    by_cam.values_mut().for_each(|v| v.sort_unstable());
    let within = |list: &[Frame], f: Frame| (list.partition_point(|&x| x <= f + w) - list.partition_point(|&x| x < f - w)) as u64;
    let mut ordered = 0u64;
    for d in dets {
        for (&c, list) in &by_cam {
            let same = c == d.camera;
            match scope.kind() {
                ScopeKind::Sct if same => ordered += within(list, d.frame) - 1,
                ScopeKind::Mct if !same => ordered += within(list, d.frame),
                _ => {}
            }
        }
    }
    ordered / 2
}

/// Ground-truth pairs admitted by `scope`. When at most `max_pairs` exist,
/// all of them in index order; otherwise `max_pairs` seeded uniform draws
/// with replacement. No eligible pair yields an empty list.
pub fn scope_pair_iter<T>(dets: &[Detection<T>], scope: &ScopeSpec, seed: u64, max_pairs: Option<usize>) -> Vec<ScopePair> {
    let pair = |i: usize, j: usize| ScopePair {
        i,
        j,
        same_identity: dets[i].gt_identity.is_some() && dets[i].gt_identity == dets[j].gt_identity,
    };
    let admits = |i: usize, j: usize| scope.admits(dets[i].camera, dets[i].frame, dets[j].camera, dets[j].frame);
    let total = scope_pair_count(dets, scope);
    let cap = max_pairs.map_or(u64::MAX, |m| m as u64);
    if total == 0 || cap == 0 {
        return Vec::new();
    }
    let n = dets.len();
    if total <= cap {
        let mut out = Vec::with_capacity(total as usize);
        for i in 0..n {
            for j in i + 1..n {
                if admits(i, j) {
                    out.push(pair(i, j));
                }
            }
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cap as usize);
    while (out.len() as u64) < cap {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && admits(i, j) {
            out.push(pair(i.min(j), i.max(j)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n_targets: usize) -> WorldConfig {
        WorldConfig {
            n_targets,
            dwell_range: (20, 40),
            spawn_horizon: 200,
            feature_dim: 16,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = WorldConfig::default();
        c.sigma = -1.0;
        assert_eq!(c.validate(), Err(Error::config("sigma", "must be finite and non-negative")));
        let mut c = WorldConfig::default();
        c.edges.clear();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "edges"));
        let mut c = WorldConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(WorldConfig::default().validate().is_ok());
    }

    #[test]
    fn degenerate_noise_returns_the_anchor() {
        let cfg = WorldConfig {
            alpha: 0.0,
            beta: 0.0,
            sigma: 0.0,
            gamma: 0.0,
            feature_dim: 8,
            ..WorldConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = TargetAppearance {
            anchor: random_unit::<f64>(8, &mut rng),
            drift: random_unit(8, &mut rng),
        };
        let bias = random_unit(8, &mut rng);
        let light = random_unit(8, &mut rng);
        let a = embed(&target, &bias, &light, 300, 0, &cfg, &mut rng);
        let b = embed(&target, &bias, &light, 900, 0, &cfg, &mut rng);
        for (x, y) in a.as_slice().iter().zip(target.anchor.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn camera_bias_pulls_same_camera_negatives_together() {
        let cfg = WorldConfig {
            alpha: 1.0,
            beta: 0.0,
            sigma: 0.1,
            gamma: 0.0,
            feature_dim: 32,
            ..WorldConfig::default()
        };
        let axis = |k: usize| {
            let mut v = vec![0.0f64; 32];
            v[k] = 1.0;
            Feature::from_unit(v)
        };
        let targets: Vec<_> = (0..4)
            .map(|k| TargetAppearance {
                anchor: axis(k),
                drift: axis(31),
            })
            .collect();
        let cams = [axis(10), axis(11)];
        let dark = Feature::zeros(32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut same, mut cross) = (0.0, 0.0);
        for _ in 0..1000 {
            let a = rng.gen_range(0..4);
            let b = (a + rng.gen_range(1..4)) % 4;
            let c = rng.gen_range(0..2);
            let x = embed(&targets[a], &cams[c], &dark, 0, 0, &cfg, &mut rng);
            let y = embed(&targets[b], &cams[c], &dark, 0, 0, &cfg, &mut rng);
            let z = embed(&targets[b], &cams[1 - c], &dark, 0, 0, &cfg, &mut rng);
            same += x.distance(&y).unwrap();
            cross += x.distance(&z).unwrap();
        }
        assert!(same < cross, "{same} vs {cross}");
    }

    #[test]
    fn count_and_empty_examples() {
        let empty: SynthDataset<f64> = generate_world(&tiny(0)).unwrap();
        assert!(empty.detections.is_empty());
        let cfg = WorldConfig {
            n_targets: 1,
            dwell_range: (50, 50),
            visits_range: (1, 1),
            ..tiny(1)
        };
        let one: SynthDataset<f64> = generate_world(&cfg).unwrap();
        assert_eq!(one.detections.len(), 50);
    }

    #[test]
    fn deterministic_and_consistent_with_tracks() {
        let cfg = WorldConfig {
            dropout: 0.1,
            ..tiny(6)
        };
        let a: SynthDataset<f64> = generate_world(&cfg).unwrap();
        let b: SynthDataset<f64> = generate_world(&cfg).unwrap();
        assert_eq!(a, b);
        let mut seen = BTreeSet::new();
        for d in &a.detections {
            let id = d.gt_identity.unwrap();
            assert!(a.gt_tracks[&id]
                .iter()
                .any(|s| s.camera == d.camera && (s.start..=s.end).contains(&d.frame)));
            assert!(seen.insert((id, d.frame)));
            assert!((d.feature.norm() - 1.0).abs() < 1e-9);
        }
        let other: SynthDataset<f64> = generate_world(&WorldConfig { split: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a.detections, other.detections);
        assert_eq!(Environment::<f64>::new(&cfg), Environment::new(&WorldConfig { split: 1, ..cfg }));
    }

    #[test]
    fn clean_orthogonal_worlds_separate_in_every_scope() {
        let cfg = WorldConfig {
            beta: 0.0,
            sigma: 0.0,
            ..tiny(5)
        };
        let mut ds: SynthDataset<f64> = generate_world(&cfg).unwrap();
        // replace anchors by orthogonal axes, keeping camera and illumination terms out
        for d in ds.detections.iter_mut() {
            let mut v = vec![0.0; 16];
            v[d.gt_identity.unwrap() as usize] = 1.0;
            d.feature = Feature::from_unit(v);
        }
        let cal = crate::affinity::ThresholdCalibration::from_threshold(0.7).unwrap();
        for scope in [ScopeSpec::reid(), ScopeSpec::mct(500), ScopeSpec::sct(150)] {
            for p in scope_pair_iter(&ds.detections, &scope, 3, Some(5000)) {
                let a = crate::affinity::reid_affinity(&ds.detections[p.i].feature, &ds.detections[p.j].feature, &cal).unwrap();
                assert_eq!(a > 0.0, p.same_identity);
            }
        }
    }

    #[test]
    fn pair_iteration_examples() {
        let cfg = WorldConfig {
            cameras: 1,
            edges: Vec::new(),
            ..tiny(3)
        };
        let ds: SynthDataset<f64> = generate_world(&cfg).unwrap();
        assert!(scope_pair_iter(&ds.detections, &ScopeSpec::mct(500), 0, None).is_empty());
        let n = ds.detections.len();
        assert_eq!(scope_pair_iter(&ds.detections, &ScopeSpec::reid(), 0, None).len(), n * (n - 1) / 2);

        let ds: SynthDataset<f64> = generate_world(&tiny(6)).unwrap();
        let sct = ScopeSpec::sct(30);
        let all = scope_pair_iter(&ds.detections, &sct, 0, None);
        assert_eq!(all.len() as u64, scope_pair_count(&ds.detections, &sct));
        let capped = scope_pair_iter(&ds.detections, &sct, 0, Some(100));
        assert_eq!(capped.len(), 100.min(all.len()));
        for p in all.iter().chain(&capped) {
            let (a, b) = (&ds.detections[p.i], &ds.detections[p.j]);
            assert_eq!(a.camera, b.camera);
            assert!((a.frame - b.frame).abs() <= 30);
        }
        let mct = ScopeSpec::mct(100);
        let all = scope_pair_iter(&ds.detections, &mct, 0, None);
        assert_eq!(all.len() as u64, scope_pair_count(&ds.detections, &mct));
        assert_eq!(scope_pair_iter(&ds.detections, &mct, 4, Some(50)), scope_pair_iter(&ds.detections, &mct, 4, Some(50)));
    }
}
