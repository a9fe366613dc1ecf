//! Workflow steps shared by the commands and by callers that stay in memory.
//!
//! Generic over the scalar so the same code runs the `f32` command line and
//! `f64` experiments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use mtaf_core::evaluation::id_measures;
use mtaf_core::metric_train::{observations, sample_pairs, train_metric, SamplerConfig, Scheme, TrainConfig, TrainOutcome};
use mtaf_core::synthgen::{scope_pair_count, scope_pair_iter};
use mtaf_core::{
    calibrate_threshold, run_tracker, Affinity, CameraId, Detection, Frame, Hypothesis, IdReport, Result, Scalar,
    ScopeSpec, ThresholdCalibration, TrackerConfig,
};

use crate::config::TrackerSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary<T> {
    pub calibration: ThresholdCalibration<T>,
    pub pairs_used: usize,
    pub pair_population: u64,
    /// Set when the population exceeded `max_pairs` and a seeded sample was used.
    pub capped: bool,
}

/// Midpoint threshold from all labelled detection pairs, or a seeded sample
/// of `max_pairs` of them when there are more.
pub fn calibrate<T: Scalar>(dets: &[Detection<T>], max_pairs: usize, seed: u64) -> Result<CalibrationSummary<T>> {
    let scope = ScopeSpec::reid();
    let population = scope_pair_count(dets, &scope);
    let pairs = scope_pair_iter(dets, &scope, seed, Some(max_pairs));
    let labelled = pairs
        .iter()
        .filter(|p| dets[p.i].gt_identity.is_some() && dets[p.j].gt_identity.is_some());
    let mut samples = Vec::with_capacity(pairs.len());
    for p in labelled {
        samples.push((dets[p.i].feature.distance(&dets[p.j].feature)?, p.same_identity));
    }
    let calibration = calibrate_threshold(samples.iter().copied())?;
    Ok(CalibrationSummary {
        calibration,
        pairs_used: samples.len(),
        pair_population: population,
        capped: population > max_pairs as u64,
    })
}

/// Samples pairs under `scheme` from detection-level observations and trains a
/// metric. `tau` is ignored for the global scheme.
pub fn train_scheme<T: Scalar>(
    dets: &[Detection<T>],
    scheme: Scheme,
    tau: Frame,
    pair_count: usize,
    sampler_seed: u64,
    train: &TrainConfig,
    init_seed: u64,
) -> Result<TrainOutcome<T>> {
    let sampler = SamplerConfig {
        scheme,
        tau: if scheme == Scheme::Global { 0 } else { tau },
        pair_count,
        seed: sampler_seed,
    };
    sampler.validate()?;
    let pairs = sample_pairs(&observations(dets), &sampler)?;
    train_metric(&pairs, train, init_seed, sampler.provenance())
}

pub fn tracker_config<T: Scalar>(t: &TrackerSettings, sct: Affinity<T>, mct: Affinity<T>) -> TrackerConfig<T> {
    TrackerConfig {
        stride_ratio: t.stride_ratio,
        exact_solver_cap: t.exact_solver_cap,
        seed: t.seed,
        ..TrackerConfig::new(t.tracklet_len, t.sct_window, t.mct_window, sct, mct)
    }
}

/// Identity scores at both association levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    /// Per camera, with identity labels compared only within that camera.
    pub per_camera: Vec<(CameraId, IdReport)>,
    /// Counts summed over cameras.
    pub sct: IdReport,
    pub mct: IdReport,
}

/// Scores `hyp` against `gt`; both map a detection key to `(camera, identity)`.
/// Ground-truth keys missing from the hypothesis count as misses; hypothesis
/// keys unknown to the ground truth are a universe mismatch.
pub fn level_reports<K: Eq + Hash + Clone>(gt: &HashMap<K, (CameraId, i64)>, hyp: &HashMap<K, (CameraId, i64)>) -> Result<LevelReport> {
    let ids = |m: &HashMap<K, (CameraId, i64)>, cam: Option<CameraId>| -> HashMap<K, i64> {
        m.iter()
            .filter(|(_, (c, _))| cam.map_or(true, |x| *c == x))
            .map(|(k, &(_, id))| (k.clone(), id))
            .collect()
    };
    let mct = id_measures(&ids(gt, None), &ids(hyp, None))?;
    let cameras: BTreeSet<CameraId> = gt.values().map(|&(c, _)| c).collect();
    let mut per_camera = Vec::with_capacity(cameras.len());
    let (mut tp, mut fp, mut fnn) = (0, 0, 0);
    for c in cameras {
        let r = id_measures(&ids(gt, Some(c)), &restrict_to(hyp, gt, c))?;
        tp += r.idtp;
        fp += r.idfp;
        fnn += r.idfn;
        per_camera.push((c, r));
    }
    Ok(LevelReport {
        per_camera,
        sct: IdReport::from_counts(tp, fp, fnn),
        mct,
    })
}

/// Hypothesis identities for keys whose ground truth lies in camera `c`;
/// the hypothesis side's own camera field is not trusted.
fn restrict_to<K: Eq + Hash + Clone>(hyp: &HashMap<K, (CameraId, i64)>, gt: &HashMap<K, (CameraId, i64)>, c: CameraId) -> HashMap<K, i64> {
    hyp.iter()
        .filter(|(k, _)| gt.get(*k).map_or(false, |&(gc, _)| gc == c))
        .map(|(k, &(_, id))| (k.clone(), id))
        .collect()
}

/// In-memory scoring of a tracker run; unlabeled detections are ignored.
pub fn score_hypothesis<T>(dets: &[Detection<T>], hyp: &Hypothesis) -> Result<LevelReport> {
    let gt: HashMap<usize, (CameraId, i64)> = dets
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.gt_identity.map(|g| (i, (d.camera, g))))
        .collect();
    let h: HashMap<usize, (CameraId, i64)> = hyp
        .identities
        .iter()
        .enumerate()
        .filter(|(i, _)| gt.contains_key(i))
        .map(|(i, &id)| (i, (dets[i].camera, id as i64)))
        .collect();
    level_reports(&gt, &h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub multiplier: f64,
    pub tau: Frame,
    pub sct: IdReport,
    pub mct: IdReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scheme: Scheme,
    pub multipliers: Vec<f64>,
    pub pair_count: usize,
    pub sampler_seed: u64,
    pub train: TrainConfig,
    pub temperature: f64,
}

fn trained<T: Scalar>(dets: &[Detection<T>], scheme: Scheme, tau: Frame, spec: &SweepSpec) -> Result<Affinity<T>> {
    let out = train_scheme(dets, scheme, tau, spec.pair_count, spec.sampler_seed, &spec.train, spec.train.seed)?;
    let mut model = out.model;
    model.set_temperature(T::lit(spec.temperature));
    Ok(Affinity::Siamese(model))
}

/// For each multiplier `m`, trains the swept scheme with `tau = m * window` of
/// its own association level, pairs it with the complementary adaptive metric
/// at `m = 1`, tracks `eval` and scores both levels.
///
/// Only the intra and inter schemes have an association window to scale.
pub fn window_sweep<T: Scalar>(
    train: &[Detection<T>],
    eval: &[Detection<T>],
    tracker: &TrackerSettings,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    let (window, partner_scheme, partner_window) = match spec.scheme {
        Scheme::Intra => (tracker.sct_window, Scheme::Inter, tracker.mct_window),
        Scheme::Inter => (tracker.mct_window, Scheme::Intra, tracker.sct_window),
        Scheme::Global => {
            return Err(mtaf_core::Error::Config {
                field: "scheme".into(),
                reason: "the global scheme has no sampling window to sweep".into(),
            })
        }
    };
    let partner = trained(train, partner_scheme, partner_window, spec)?;
    let mut rows = Vec::with_capacity(spec.multipliers.len());
    let mut cache: BTreeMap<Frame, (IdReport, IdReport)> = BTreeMap::new();
    for &m in &spec.multipliers {
        let tau = ((window as f64 * m).round() as Frame).max(1);
        if let Some(&(sct, mct)) = cache.get(&tau) {
            rows.push(SweepRow { multiplier: m, tau, sct, mct });
            continue;
        }
        let swept = trained(train, spec.scheme, tau, spec)?;
        let (sct_aff, mct_aff) = match spec.scheme {
            Scheme::Intra => (swept, partner.clone()),
            _ => (partner.clone(), swept),
        };
        let hyp = run_tracker(eval, &tracker_config(tracker, sct_aff, mct_aff))?;
        let r = score_hypothesis(eval, &hyp)?;
        cache.insert(tau, (r.sct, r.mct));
        rows.push(SweepRow {
            multiplier: m,
            tau,
            sct: r.sct,
            mct: r.mct,
        });
    }
    Ok(rows)
}
