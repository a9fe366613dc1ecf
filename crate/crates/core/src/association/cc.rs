//! Correlation clustering over signed affinity matrices.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::AffinityMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_EXACT_CAP: usize = 12;
/// Perturbation rounds run by [`solve_cc_heuristic`].
pub const DEFAULT_RESTARTS: usize = 48;

/// A clustering of `n` items in canonical form: cluster ids appear in order of
/// first occurrence, so two partitions are equal iff their assignments are.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabels arbitrary cluster ids into canonical form.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition { assignment, k: map.len() }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            k: n,
        }
    }

    pub fn one_cluster(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn same(&self, i: usize, j: usize) -> bool {
        self.assignment[i] == self.assignment[j]
    }

    /// Members of each cluster, in cluster-id order; members ascend.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// True if `self` wins the tie-break against `other`: fewer clusters, then
    /// the lexicographically smaller assignment.
    fn preferred_over(&self, other: &Partition) -> bool {
        (self.k, &self.assignment) < (other.k, &other.assignment)
    }
}

/// `Σ_{i<j} x_ij a_ij` with `x_ij = +1` inside a cluster and `-1` across.
pub fn cc_objective<T: Scalar>(a: &AffinityMatrix<T>, p: &Partition) -> Result<T> {
    if a.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: p.n(),
        });
    }
    let mut total = T::zero();
    for i in 0..a.n() {
        for j in i + 1..a.n() {
            let v = a.get(i, j);
            total += if p.same(i, j) { v } else { -v };
        }
    }
    Ok(total)
}

fn tolerance<T: Scalar>(a: &AffinityMatrix<T>) -> T {
    let mut mass = T::zero();
    for i in 0..a.n() {
        for j in i + 1..a.n() {
            mass += a.get(i, j).abs();
        }
    }
    T::lit(1e-9) * (T::one() + mass)
}

/// Exact maximizer with the default size cap.
pub fn solve_cc_exact<T: Scalar>(a: &AffinityMatrix<T>) -> Result<Partition> {
    solve_cc_exact_capped(a, DEFAULT_EXACT_CAP)
}

/// Branch-and-bound over restricted growth strings. Objectives within a
/// relative `1e-9` are ties, broken toward fewer clusters and then the
/// lexicographically smallest assignment.
pub fn solve_cc_exact_capped<T: Scalar>(a: &AffinityMatrix<T>, cap: usize) -> Result<Partition> {
    let n = a.n();
    if n > cap {
        return Err(Error::TooLargeForExact { n, cap });
    }
    if n == 0 {
        return Ok(Partition::singletons(0));
    }
    // slack[i]: total |a| over pairs whose later item is >= i
    let mut slack = vec![T::zero(); n + 1];
    for i in (0..n).rev() {
        let row: T = (0..i).map(|j| a.get(i, j).abs()).fold(T::zero(), |s, v| s + v);
        slack[i] = slack[i + 1] + row;
    }
    let mut search = Search {
        a,
        tol: tolerance(a),
        slack,
        current: vec![0; n],
        best: Partition::singletons(n),
        best_value: T::zero(),
    };
    search.best_value = cc_objective(a, &search.best)?;
    search.descend(0, 0, T::zero());
    Ok(search.best)
}

struct Search<'a, T> {
    a: &'a AffinityMatrix<T>,
    tol: T,
    slack: Vec<T>,
    current: Vec<usize>,
    best: Partition,
    best_value: T,
}

impl<T: Scalar> Search<'_, T> {
    fn descend(&mut self, i: usize, k: usize, value: T) {
        let n = self.current.len();
        if i == n {
            let cand = Partition {
                assignment: self.current.clone(),
                k,
            };
            if value > self.best_value + self.tol
                || ((value - self.best_value).abs() <= self.tol && cand.preferred_over(&self.best))
            {
                self.best = cand;
                self.best_value = value;
            }
            return;
        }
        let bound = value + self.slack[i];
        if bound < self.best_value - self.tol {
            return;
        }
        // can at best tie, and every completion has at least k clusters and
        // sorts after every earlier visit
        if bound <= self.best_value + self.tol && k > self.best.k {
            return;
        }
        for c in 0..=k {
            let mut gain = T::zero();
            for j in 0..i {
                let v = self.a.get(i, j);
                gain += if self.current[j] == c { v } else { -v };
            }
            self.current[i] = c;
            self.descend(i + 1, k.max(c + 1), value + gain);
        }
    }
}

/// Greedy agglomeration plus single-item relocation and cluster joins, refined
/// by `DEFAULT_RESTARTS` seeded perturbation rounds. Never worse than all-singletons or one cluster.
pub fn solve_cc_heuristic<T: Scalar>(a: &AffinityMatrix<T>, seed: u64) -> Partition {
    solve_cc_heuristic_with(a, seed, DEFAULT_RESTARTS)
}

pub fn solve_cc_heuristic_with<T: Scalar>(a: &AffinityMatrix<T>, seed: u64, restarts: usize) -> Partition {
    let n = a.n();
    if n == 0 {
        return Partition::singletons(0);
    }
    let tol = tolerance(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T, Partition)> = None;
    let offer = |p: Partition, best: &mut Option<(T, Partition)>| {
        let v = cc_objective(a, &p).expect("sizes agree");
        let better = match best {
            None => true,
            Some((bv, bp)) => v > *bv + tol || ((v - *bv).abs() <= tol && p.preferred_over(bp)),
        };
        if better {
            *best = Some((v, p));
        }
    };
    for labels in [greedy_merge(a), vec![0; n], (0..n).collect()] {
        let p = local_search(a, labels, &mut rng, tol);
        offer(p, &mut best);
    }
    // iterated local search: kick a few items of the incumbent, then descend again
    let kick = (n / 4).max(2).min(n);
    for _ in 0..restarts {
        let mut labels = best.as_ref().expect("seeded above").1.assignment.clone();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        for _ in 0..kick {
            let i = rng.gen_range(0..n);
            labels[i] = rng.gen_range(0..=k);
        }
        let p = local_search(a, labels, &mut rng, tol);
        offer(p, &mut best);
    }
    best.expect("at least one start").1
}

/// Merges the cluster pair with the largest positive inter-cluster sum until none remains.
fn greedy_merge<T: Scalar>(a: &AffinityMatrix<T>) -> Vec<usize> {
    let n = a.n();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive = vec![true; n];
    let mut link: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    loop {
        let mut pick: Option<(usize, usize, T)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && link[i][j] > T::zero() && pick.map_or(true, |(_, _, v)| link[i][j] > v) {
                    pick = Some((i, j, link[i][j]));
                }
            }
        }
        let Some((i, j, _)) = pick else { break };
        alive[j] = false;
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        for c in 0..n {
            if alive[c] && c != i {
                let v = link[i][c] + link[j][c];
                link[i][c] = v;
                link[c][i] = v;
            }
        }
    }
    let mut labels = vec![0; n];
    for (c, m) in members.iter().enumerate() {
        for &i in m {
            labels[i] = c;
        }
    }
    labels
}

/// Moves single items to their best cluster (or a fresh one) until no move
/// improves the objective by more than `tol`. Visit order is reshuffled per sweep.
fn local_search<T: Scalar>(a: &AffinityMatrix<T>, labels: Vec<usize>, rng: &mut ChaCha8Rng, tol: T) -> Partition {
    let n = a.n();
    let mut assign = Partition::from_labels(&labels).assignment;
    let mut k = assign.iter().max().map_or(0, |m| m + 1);
    // w[i][c] = Σ_{j in c, j != i} a_ij
    let mut w = vec![vec![T::zero(); n + 1]; n];
    let mut size = vec![0usize; n + 1];
    for i in 0..n {
        size[assign[i]] += 1;
        for j in 0..n {
            if j != i {
                w[i][assign[j]] += a.get(i, j);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let from = assign[i];
            let stay = w[i][from];
            let mut target = from;
            let mut gain = T::zero();
            for c in 0..k {
                if c != from && size[c] > 0 {
                    let g = w[i][c] - stay;
                    if g > gain {
                        gain = g;
                        target = c;
                    }
                }
            }
            // a fresh singleton, unless already alone
            if size[from] > 1 && -stay > gain {
                gain = -stay;
                target = size.iter().take(k).position(|&s| s == 0).unwrap_or(k);
            }
            if target == from || gain + gain <= tol {
                continue;
            }
            if target == k {
                k += 1;
            }
            for j in 0..n {
                if j != i {
                    let v = a.get(i, j);
                    w[j][from] -= v;
                    w[j][target] += v;
                }
            }
            size[from] -= 1;
            size[target] += 1;
            assign[i] = target;
            moved = true;
        }
        if !moved {
            // joining two whole clusters escapes optima of single moves
            let mut link = vec![vec![T::zero(); k]; k];
            for i in 0..n {
                for c in 0..k {
                    link[assign[i]][c] += w[i][c];
                }
            }
            let mut join: Option<(usize, usize, T)> = None;
            for c in 0..k {
                for d in c + 1..k {
                    if size[c] > 0 && size[d] > 0 && link[c][d] + link[c][d] > tol {
                        if join.map_or(true, |(_, _, v)| link[c][d] > v) {
                            join = Some((c, d, link[c][d]));
                        }
                    }
                }
            }
            let Some((c, d, _)) = join else { break };
            for x in assign.iter_mut() {
                if *x == d {
                    *x = c;
                }
            }
            size[c] += size[d];
            size[d] = 0;
        }
        // compact ids so `k` stays within the n + 1 columns
        let canon = Partition::from_labels(&assign);
        if canon.k < k {
            assign = canon.assignment;
            k = canon.k;
            size = vec![0; n + 1];
            for row in w.iter_mut() {
                row.iter_mut().for_each(|v| *v = T::zero());
            }
            for i in 0..n {
                size[assign[i]] += 1;
                for j in 0..n {
                    if j != i {
                        w[i][assign[j]] += a.get(i, j);
                    }
                }
            }
        }
    }
    Partition::from_labels(&assign)
}
