//! Hierarchical sliding-window tracker: detections → tracklets → single-camera
//! trajectories → cross-camera identities.

use std::collections::BTreeMap;

use super::cc::{solve_cc_exact_capped, solve_cc_heuristic, Partition, DEFAULT_EXACT_CAP};
use crate::affinity::Affinity;
use crate::error::{Error, Result};
use crate::model::{
    majority_label, pool_feature, windows_over, AffinityMatrix, CameraId, Detection, Frame, Tracklet, Trajectory,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig<T> {
    pub tracklet_len: Frame,
    pub sct_window: Frame,
    pub mct_window: Frame,
    /// Window stride as a fraction of the window length.
    pub stride_ratio: f64,
    /// Used for tracklet formation and the single-camera pass.
    pub affinity_sct: Affinity<T>,
    pub affinity_mct: Affinity<T>,
    pub exact_solver_cap: usize,
    /// Seeds the heuristic solver for windows above the cap.
    pub seed: u64,
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn new(
        tracklet_len: Frame,
        sct_window: Frame,
        mct_window: Frame,
        affinity_sct: Affinity<T>,
        affinity_mct: Affinity<T>,
    ) -> Self {
        TrackerConfig {
            tracklet_len,
            sct_window,
            mct_window,
            stride_ratio: 0.5,
            affinity_sct,
            affinity_mct,
            exact_solver_cap: DEFAULT_EXACT_CAP,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tracklet_len <= 0 {
            return Err(Error::config("tracklet_len", "must be positive"));
        }
        if self.sct_window < self.tracklet_len {
            return Err(Error::config("sct_window", "must be at least tracklet_len"));
        }
        if self.mct_window < self.sct_window {
            return Err(Error::config("mct_window", "must be at least sct_window"));
        }
        if !(self.stride_ratio > 0.0 && self.stride_ratio <= 1.0) {
            return Err(Error::config("stride_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Stride in frames for a window of `length`; at least one frame.
    pub fn stride(&self, length: Frame) -> Frame {
        ((length as f64 * self.stride_ratio).round() as Frame).clamp(1, length.max(1))
    }

    fn solve(&self, a: &AffinityMatrix<T>, salt: u64) -> Partition {
        if a.n() <= self.exact_solver_cap {
            solve_cc_exact_capped(a, self.exact_solver_cap).expect("size checked against cap")
        } else {
            solve_cc_heuristic(a, self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        }
    }
}

/// Identity per input detection, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypothesis {
    pub identities: Vec<u32>,
    pub tracklet_count: usize,
    pub sct_trajectory_count: usize,
}

impl Hypothesis {
    pub fn identity_count(&self) -> usize {
        self.identities.iter().collect::<std::collections::BTreeSet<_>>().len()
    }
}

fn mean_affinity<T: Scalar>(a: &AffinityMatrix<T>, i: usize, others: &[usize]) -> T {
    let others: Vec<usize> = others.iter().copied().filter(|&o| o != i).collect();
    if others.is_empty() {
        return T::zero();
    }
    let sum = others.iter().fold(T::zero(), |s, &o| s + a.get(i, o));
    sum / T::lit(others.len() as f64)
}

/// Removes same-frame duplicates from every cluster: the member with the highest
/// mean affinity to its cluster stays, the others move to the best cluster
/// without a detection in that frame if its mean affinity is positive, else to
/// a new singleton.
fn split_same_frame<T: Scalar>(clusters: &mut Vec<Vec<usize>>, frames: &[Frame], a: &AffinityMatrix<T>) {
    let mut ci = 0;
    while ci < clusters.len() {
        let mut by_frame: BTreeMap<Frame, Vec<usize>> = BTreeMap::new();
        for &m in &clusters[ci] {
            by_frame.entry(frames[m]).or_default().push(m);
        }
        let Some(clash) = by_frame.into_values().find(|v| v.len() > 1) else {
            ci += 1;
            continue;
        };
        let members = clusters[ci].clone();
        let keep = *clash
            .iter()
            .max_by(|&&x, &&y| {
                mean_affinity(a, x, &members)
                    .partial_cmp(&mean_affinity(a, y, &members))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // prefer the smaller index on ties
                    .then(y.cmp(&x))
            })
            .expect("clash is non-empty");
        for &d in clash.iter().filter(|&&d| d != keep) {
            clusters[ci].retain(|&m| m != d);
            let target = clusters
                .iter()
                .enumerate()
                .filter(|(c, members)| *c != ci && members.iter().all(|&m| frames[m] != frames[d]))
                .map(|(c, members)| (c, mean_affinity(a, d, members)))
                .filter(|(_, v)| *v > T::zero())
                .fold(None::<(usize, T)>, |best, (c, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((c, v)),
                });
            match target {
                Some((c, _)) => clusters[c].push(d),
                None => clusters.push(vec![d]),
            }
        }
    }
    for c in clusters.iter_mut() {
        c.sort_by_key(|&m| (frames[m], m));
    }
    clusters.retain(|c| !c.is_empty());
}

/// Clusters each camera's detections within consecutive disjoint spans of
/// `tracklet_len` frames. Same-frame pairs are scored `-1` before solving.
/// `members` of the returned tracklets index into `detections`.
pub fn form_tracklets<T: Scalar>(
    detections: &[Detection<T>],
    cfg: &TrackerConfig<T>,
    affinity: &Affinity<T>,
) -> Result<Vec<Tracklet<T>>> {
    cfg.validate()?;
    let mut spans: BTreeMap<(CameraId, Frame), Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        spans
            .entry((d.camera, d.frame.div_euclid(cfg.tracklet_len)))
            .or_default()
            .push(i);
    }
    let mut out = Vec::new();
    for ((camera, span), mut idx) in spans {
        idx.sort_by_key(|&i| (detections[i].frame, i));
        let items: Vec<&Detection<T>> = idx.iter().map(|&i| &detections[i]).collect();
        let frames: Vec<Frame> = items.iter().map(|d| d.frame).collect();
        let mut a = affinity.matrix(&items)?;
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                if frames[i] == frames[j] {
                    a.set(i, j, -T::one());
                }
            }
        }
        let salt = (camera as u64) << 40 ^ span as u64;
        let mut clusters = cfg.solve(&a, salt).clusters();
        split_same_frame(&mut clusters, &frames, &a);
        for c in clusters {
            let members: Vec<usize> = c.iter().map(|&m| idx[m]).collect();
            let feature = pool_feature(members.iter().map(|&m| &detections[m].feature))?;
            let label = majority_label(members.iter().filter_map(|&m| detections[m].gt_identity.map(|l| (l, 1))));
            out.push(Tracklet {
                camera,
                span: (detections[members[0]].frame, detections[*members.last().expect("non-empty")].frame),
                members,
                feature,
                label,
            });
        }
    }
    out.sort_by_key(|t| (t.camera, t.span.0, t.span.1, t.members[0]));
    Ok(out)
}

struct Group<T> {
    units: Vec<usize>,
    traj: Trajectory<T>,
    alive: bool,
}

/// Sliding-window agglomeration of `units`. Each window clusters live groups
/// whose last frame lies inside it together with unassigned units starting
/// inside it; merges are irrevocable. Returns groups of unit indices.
fn sliding_merge<T: Scalar>(
    units: &[Trajectory<T>],
    window: Frame,
    cfg: &TrackerConfig<T>,
    affinity: &Affinity<T>,
    salt: u64,
) -> Result<Vec<Vec<usize>>> {
    if units.is_empty() {
        return Ok(Vec::new());
    }
    let first = units.iter().map(Trajectory::first_frame).min().expect("non-empty");
    let last = units.iter().map(Trajectory::last_frame).max().expect("non-empty");
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by_key(|&u| (units[u].first_frame(), u));
    let mut groups: Vec<Group<T>> = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; units.len()];
    for (w_idx, w) in windows_over((first, last), window, cfg.stride(window))?.into_iter().enumerate() {
        let live: Vec<usize> = (0..groups.len())
            .filter(|&g| groups[g].alive && w.contains(groups[g].traj.last_frame()))
            .collect();
        let fresh: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&u| owner[u].is_none() && w.contains(units[u].first_frame()))
            .collect();
        if live.is_empty() && fresh.is_empty() {
            continue;
        }
        let items: Vec<&Trajectory<T>> = live
            .iter()
            .map(|&g| &groups[g].traj)
            .chain(fresh.iter().map(|&u| &units[u]))
            .collect();
        let n = items.len();
        let mut a = affinity.matrix(&items)?;
        for i in 0..n {
            for j in i + 1..n {
                if items[i].conflicts_with(items[j]) {
                    a.set(i, j, -T::one());
                }
            }
        }
        let partition = cfg.solve(&a, salt ^ (w_idx as u64 + 1));
        let mut merged: Vec<Vec<usize>> = Vec::new();
        for cluster in partition.clusters() {
            // greedy split of clusters the solver still left conflicting
            let mut parts: Vec<Vec<usize>> = Vec::new();
            for &i in &cluster {
                let best = parts
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.iter().all(|&j| !items[i].conflicts_with(items[j])))
                    .map(|(k, p)| (k, p.iter().fold(T::zero(), |s, &j| s + a.get(i, j))))
                    .fold(None::<(usize, T)>, |best, (k, v)| match best {
                        Some((_, bv)) if bv >= v => best,
                        _ => Some((k, v)),
                    });
                match best {
                    Some((k, _)) => parts[k].push(i),
                    None => parts.push(vec![i]),
                }
            }
            merged.extend(parts);
        }
        for part in merged {
            let mut unit_ids = Vec::new();
            for &i in &part {
                if i < live.len() {
                    let g = live[i];
                    groups[g].alive = false;
                    unit_ids.extend(groups[g].units.iter().copied());
                } else {
                    unit_ids.push(fresh[i - live.len()]);
                }
            }
            if part.len() == 1 && part[0] < live.len() {
                // unchanged group
                groups[live[part[0]]].alive = true;
                continue;
            }
            unit_ids.sort_unstable();
            let tracklets = unit_ids
                .iter()
                .flat_map(|&u| units[u].tracklets.iter().cloned())
                .collect();
            let g = groups.len();
            for &u in &unit_ids {
                owner[u] = Some(g);
            }
            groups.push(Group {
                units: unit_ids,
                traj: Trajectory::from_tracklets(tracklets, 0)?,
                alive: true,
            });
        }
    }
    debug_assert!(owner.iter().all(Option::is_some), "windows cover every unit start");
    let mut out: Vec<Vec<usize>> = groups.into_iter().filter(|g| g.alive).map(|g| g.units).collect();
    out.sort_by_key(|g| (units[g[0]].first_frame(), g[0]));
    Ok(out)
}

fn chain<T: Scalar>(units: &[Trajectory<T>], groups: Vec<Vec<usize>>) -> Result<Vec<Trajectory<T>>> {
    let mut out = groups
        .into_iter()
        .map(|g| Trajectory::from_tracklets(g.iter().flat_map(|&u| units[u].tracklets.iter().cloned()).collect(), 0))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|t| (t.first_frame(), t.tracklets[0].camera, t.tracklets[0].members[0]));
    for (i, t) in out.iter_mut().enumerate() {
        t.identity = i as u32;
    }
    Ok(out)
}

/// Links one camera's tracklets into trajectories over `sct_window` windows.
pub fn sct_pass<T: Scalar>(
    tracklets: &[Tracklet<T>],
    cfg: &TrackerConfig<T>,
    affinity: &Affinity<T>,
) -> Result<Vec<Trajectory<T>>> {
    cfg.validate()?;
    let units = tracklets
        .iter()
        .map(|t| Trajectory::from_tracklets(vec![t.clone()], 0))
        .collect::<Result<Vec<_>>>()?;
    let salt = tracklets.first().map_or(0, |t| t.camera as u64 + 1);
    let groups = sliding_merge(&units, cfg.sct_window, cfg, affinity, salt)?;
    chain(&units, groups)
}

/// Links trajectories from all cameras over `mct_window` windows. Output
/// identities are `0..k`, ordered by first frame.
pub fn mct_pass<T: Scalar>(
    trajectories: &[Trajectory<T>],
    cfg: &TrackerConfig<T>,
    affinity: &Affinity<T>,
) -> Result<Vec<Trajectory<T>>> {
    cfg.validate()?;
    let groups = sliding_merge(trajectories, cfg.mct_window, cfg, affinity, u64::MAX)?;
    chain(trajectories, groups)
}

/// Tracklets, then single-camera trajectories per camera, then global identities.
pub fn run_tracker<T: Scalar>(detections: &[Detection<T>], cfg: &TrackerConfig<T>) -> Result<Hypothesis> {
    cfg.validate()?;
    let tracklets = form_tracklets(detections, cfg, &cfg.affinity_sct)?;
    let tracklet_count = tracklets.len();
    let mut per_camera: BTreeMap<CameraId, Vec<Tracklet<T>>> = BTreeMap::new();
    for t in tracklets {
        per_camera.entry(t.camera).or_default().push(t);
    }
    let mut sct = Vec::new();
    for list in per_camera.values() {
        sct.extend(sct_pass(list, cfg, &cfg.affinity_sct)?);
    }
    let sct_trajectory_count = sct.len();
    let mct = mct_pass(&sct, cfg, &cfg.affinity_mct)?;
    let mut identities = vec![u32::MAX; detections.len()];
    for t in &mct {
        for m in t.tracklets.iter().flat_map(|tr| tr.members.iter()) {
            debug_assert_eq!(identities[*m], u32::MAX, "detection assigned twice");
            identities[*m] = t.identity;
        }
    }
    debug_assert!(identities.iter().all(|&i| i != u32::MAX), "detection dropped");
    Ok(Hypothesis {
        identities,
        tracklet_count,
        sct_trajectory_count,
    })
}
