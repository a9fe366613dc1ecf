//! Identity-level precision, recall and F1 under an optimal one-to-one
//! truth-to-hypothesis identity assignment.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use super::hungarian::hungarian;
use crate::error::{Error, Result};
use crate::model::{BBox, CameraId, Frame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdReport {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
}

impl IdReport {
    /// Ratios from counts. Both sides empty scores 1; an empty side otherwise scores 0.
    pub fn from_counts(idtp: u64, idfp: u64, idfn: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        if idtp + idfp + idfn == 0 {
            return IdReport {
                idtp,
                idfp,
                idfn,
                idf1: 1.0,
                idp: 1.0,
                idr: 1.0,
            };
        }
        IdReport {
            idtp,
            idfp,
            idfn,
            idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
            idp: ratio(idtp, idtp + idfp),
            idr: ratio(idtp, idtp + idfn),
        }
    }
}

/// One detection-frame as seen by either side; `None` where a side has no entry.
pub type Correspondence = (Option<i64>, Option<i64>);

/// Core computation over per-detection identity correspondences.
pub fn id_measures_from_correspondences(items: impl IntoIterator<Item = Correspondence>) -> IdReport {
    let mut gt_index: BTreeMap<i64, usize> = BTreeMap::new();
    let mut hyp_index: BTreeMap<i64, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let (mut gt_count, mut hyp_count) = (Vec::<u64>::new(), Vec::<u64>::new());
    for (g, h) in items {
        let gi = g.map(|g| {
            let next = gt_index.len();
            let k = *gt_index.entry(g).or_insert(next);
            if k == gt_count.len() {
                gt_count.push(0);
            }
            gt_count[k] += 1;
            k
        });
        let hi = h.map(|h| {
            let next = hyp_index.len();
            let k = *hyp_index.entry(h).or_insert(next);
            if k == hyp_count.len() {
                hyp_count.push(0);
            }
            hyp_count[k] += 1;
            k
        });
        if let (Some(a), Some(b)) = (gi, hi) {
            *overlap.entry((a, b)).or_default() += 1;
        }
    }
    let (ng, nh) = (gt_count.len(), hyp_count.len());
    let total_gt: u64 = gt_count.iter().sum();
    let total_hyp: u64 = hyp_count.iter().sum();
    // rows: truths then dummies; columns: hypotheses then dummies
    let n = ng + nh;
    let forbid = 2 * (total_gt + total_hyp) as i64 + 1;
    let mut cost = vec![0i64; n * n];
    for g in 0..ng {
        for h in 0..nh {
            let c = overlap.get(&(g, h)).copied().unwrap_or(0);
            cost[g * n + h] = (gt_count[g] - c + hyp_count[h] - c) as i64;
        }
        for d in 0..ng {
            cost[g * n + nh + d] = if d == g { gt_count[g] as i64 } else { forbid };
        }
    }
    for d in 0..nh {
        for h in 0..nh {
            cost[(ng + d) * n + h] = if d == h { hyp_count[h] as i64 } else { forbid };
        }
    }
    let assign = hungarian(&cost, n);
    let idtp: u64 = (0..ng)
        .filter(|&g| assign[g] < nh)
        .map(|g| overlap.get(&(g, assign[g])).copied().unwrap_or(0))
        .sum();
    IdReport::from_counts(idtp, total_hyp - idtp, total_gt - idtp)
}

/// Detections matched by exact key. Ground-truth keys the hypothesis lacks count
/// as misses; hypothesis keys absent from the ground truth are an error.
pub fn id_measures<K: Eq + Hash>(gt: &HashMap<K, i64>, hyp: &HashMap<K, i64>) -> Result<IdReport> {
    let foreign = hyp.keys().filter(|k| !gt.contains_key(*k)).count();
    if foreign > 0 {
        return Err(Error::UniverseMismatch(foreign));
    }
    Ok(id_measures_from_correspondences(gt.iter().map(|(k, &g)| (Some(g), hyp.get(k).copied()))))
}

/// A labelled box for overlap-based matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLabel {
    pub camera: CameraId,
    pub frame: Frame,
    pub bbox: BBox,
    pub identity: i64,
}

/// Matches boxes per `(camera, frame)` greedily by descending IoU, accepting
/// pairs with IoU >= `threshold`. Unmatched hypothesis boxes are false positives.
pub fn id_measures_iou(gt: &[BoxLabel], hyp: &[BoxLabel], threshold: f64) -> IdReport {
    let mut frames: BTreeMap<(CameraId, Frame), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, b) in gt.iter().enumerate() {
        frames.entry((b.camera, b.frame)).or_default().0.push(i);
    }
    for (i, b) in hyp.iter().enumerate() {
        frames.entry((b.camera, b.frame)).or_default().1.push(i);
    }
    let mut items = Vec::with_capacity(gt.len() + hyp.len());
    for (gs, hs) in frames.values() {
        let mut cand: Vec<(f64, usize, usize)> = Vec::new();
        for &g in gs {
            for &h in hs {
                let iou = gt[g].bbox.iou(&hyp[h].bbox);
                if iou >= threshold {
                    cand.push((iou, g, h));
                }
            }
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = BTreeMap::new();
        let mut h_used = BTreeMap::new();
        for (_, g, h) in cand {
            if !g_used.contains_key(&g) && !h_used.contains_key(&h) {
                g_used.insert(g, h);
                h_used.insert(h, g);
            }
        }
        for &g in gs {
            items.push((Some(gt[g].identity), g_used.get(&g).map(|&h| hyp[h].identity)));
        }
        for &h in hs {
            if !h_used.contains_key(&h) {
                items.push((None, Some(hyp[h].identity)));
            }
        }
    }
    id_measures_from_correspondences(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Maximum overlap over every partial injective truth-to-hypothesis map.
    fn brute_force(items: &[Correspondence]) -> IdReport {
        let gts: Vec<i64> = {
            let mut v: Vec<i64> = items.iter().filter_map(|c| c.0).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let hyps: Vec<i64> = {
            let mut v: Vec<i64> = items.iter().filter_map(|c| c.1).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        fn rec(g: usize, gts: &[i64], hyps: &[i64], used: &mut Vec<bool>, map: &mut Vec<Option<i64>>, items: &[Correspondence], best: &mut u64) {
            if g == gts.len() {
                let tp = items
                    .iter()
                    .filter(|(a, b)| match (a, b) {
                        (Some(a), Some(b)) => {
                            let k = gts.iter().position(|x| x == a).unwrap();
                            map[k] == Some(*b)
                        }
                        _ => false,
                    })
                    .count() as u64;
                *best = (*best).max(tp);
                return;
            }
            map[g] = None;
            rec(g + 1, gts, hyps, used, map, items, best);
            for h in 0..hyps.len() {
                if !used[h] {
                    used[h] = true;
                    map[g] = Some(hyps[h]);
                    rec(g + 1, gts, hyps, used, map, items, best);
                    used[h] = false;
                }
            }
            map[g] = None;
        }
        let mut best = 0;
        rec(0, &gts, &hyps, &mut vec![false; hyps.len()], &mut vec![None; gts.len()], items, &mut best);
        let total_gt = items.iter().filter(|c| c.0.is_some()).count() as u64;
        let total_hyp = items.iter().filter(|c| c.1.is_some()).count() as u64;
        IdReport::from_counts(best, total_hyp - best, total_gt - best)
    }

    fn keyed(ids: &[(i64, i64)]) -> (HashMap<usize, i64>, HashMap<usize, i64>) {
        let gt = ids.iter().enumerate().map(|(k, &(g, _))| (k, g)).collect();
        let hyp = ids.iter().enumerate().map(|(k, &(_, h))| (k, h)).collect();
        (gt, hyp)
    }

    #[test]
    fn perfect_and_empty() {
        let (gt, hyp) = keyed(&[(1, 5), (1, 5), (2, 6)]);
        let r = id_measures(&gt, &hyp).unwrap();
        assert_eq!((r.idf1, r.idp, r.idr), (1.0, 1.0, 1.0));
        let r = id_measures(&gt, &HashMap::new()).unwrap();
        assert_eq!((r.idf1, r.idp, r.idr, r.idfn), (0.0, 0.0, 0.0, 3));
        let r = id_measures::<usize>(&HashMap::new(), &HashMap::new()).unwrap();
        assert_eq!((r.idf1, r.idp, r.idr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn six_four_split() {
        let pairs: Vec<(i64, i64)> = (0..10).map(|f| (1, if f < 6 { 10 } else { 11 })).collect();
        let (gt, hyp) = keyed(&pairs);
        let r = id_measures(&gt, &hyp).unwrap();
        assert_eq!((r.idtp, r.idfp, r.idfn), (6, 4, 4));
        assert!((r.idf1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn foreign_hypothesis_keys_are_rejected() {
        let gt: HashMap<u32, i64> = [(1, 1)].into();
        let hyp: HashMap<u32, i64> = [(1, 1), (2, 1), (3, 2)].into();
        assert_eq!(id_measures(&gt, &hyp), Err(Error::UniverseMismatch(2)));
    }

    #[test]
    fn iou_matching_recovers_exact_results() {
        let b = |x: f64| BBox { x, y: 0.0, w: 10.0, h: 10.0 };
        let gt: Vec<BoxLabel> = (0..10)
            .map(|f| BoxLabel {
                camera: 0,
                frame: f,
                bbox: b(0.0),
                identity: 1,
            })
            .collect();
        let mut hyp: Vec<BoxLabel> = gt
            .iter()
            .map(|g| BoxLabel {
                bbox: b(1.0),
                identity: if g.frame < 6 { 3 } else { 4 },
                ..*g
            })
            .collect();
        let r = id_measures_iou(&gt, &hyp, 0.5);
        assert!((r.idf1 - 0.6).abs() < 1e-12);
        // a box too far away is a miss plus a false positive
        hyp[0].bbox = b(9.0);
        let r = id_measures_iou(&gt, &hyp, 0.5);
        assert_eq!((r.idtp, r.idfp, r.idfn), (5, 5, 5));
    }

    fn cases() -> impl Strategy<Value = Vec<Correspondence>> {
        prop::collection::vec((prop::option::weighted(0.9, 0i64..4), prop::option::weighted(0.9, 0i64..4)), 0..30)
    }

    proptest! {
        #[test]
        fn matches_brute_force(items in cases()) {
            prop_assert_eq!(id_measures_from_correspondences(items.clone()), brute_force(&items));
        }

        #[test]
        fn invariant_under_hypothesis_relabeling(items in cases(), shift in 1i64..100) {
            let renamed: Vec<_> = items.iter().map(|&(g, h)| (g, h.map(|h| 3 - h + shift))).collect();
            prop_assert_eq!(id_measures_from_correspondences(items), id_measures_from_correspondences(renamed));
        }

        #[test]
        fn f1_is_harmonic_mean(items in cases()) {
            let r = id_measures_from_correspondences(items);
            if r.idp > 0.0 && r.idr > 0.0 {
                let h = 2.0 * r.idp * r.idr / (r.idp + r.idr);
                prop_assert!((h - r.idf1).abs() < 1e-12);
            }
        }
    }
}
