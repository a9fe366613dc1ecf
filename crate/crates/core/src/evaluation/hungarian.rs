//! Minimum-cost perfect assignment on square integer cost tables.

/// Returns `assign` with `assign[row] = column`, minimizing the summed cost.
/// `cost` is row-major `n x n`; entries must stay well below `i64::MAX / 4`.
pub fn hungarian(cost: &[i64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost table must be n x n");
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // potentials and matching over 1-based indices; column 0 is a sentinel
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn total(cost: &[i64], n: usize, assign: &[usize]) -> i64 {
        assign.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum()
    }

    #[test]
    fn small_example() {
        let cost = [4, 1, 3, 2, 0, 5, 3, 2, 2];
        let a = hungarian(&cost, 3);
        assert_eq!(total(&cost, 3, &a), 5);
        assert!(hungarian(&[], 0).is_empty());
    }

    proptest! {
        #[test]
        fn matches_permutation_enumeration(n in 1usize..=6, seed in prop::collection::vec(-50i64..50, 36)) {
            let cost: Vec<i64> = seed[..n * n].to_vec();
            let a = hungarian(&cost, n);
            let mut cols = a.clone();
            cols.sort_unstable();
            prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
            let best = permutations(n).iter().map(|p| total(&cost, n, p)).min().unwrap();
            prop_assert_eq!(total(&cost, n, &a), best);
        }
    }
}
