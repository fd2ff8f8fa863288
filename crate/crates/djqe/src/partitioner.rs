//! Penalized optimal partitioning of the action grid.
//!
//! Three solvers share one objective — minimize the sum of interval costs
//! plus `gamma` per interval: a pruned Bellman recursion (`pelt`), the
//! unpruned quadratic dynamic program (`exact_dp`), and an exponential
//! enumerator (`brute_force`) for use as a small-grid oracle.

use crate::cost::CostSource;
use crate::dataset::Partition;
use crate::error::{DjqeError, Result};
use crate::scalar::Scalar;

/// Result of a partitioning run.
///
/// `objective = bellman[m] + gamma`, which equals the sum of selected
/// interval costs plus `gamma` times the interval count. `bellman` and
/// `backpointers` expose the recursion state for diagnostics (empty for
/// `brute_force`, which does not run the recursion). `candidate_evaluations`
/// counts how many `(v, v*)` cost lookups the solver performed.
#[derive(Debug, Clone)]
pub struct Segmentation<T> {
    pub partition: Partition,
    pub objective: T,
    pub bellman: Vec<T>,
    pub backpointers: Vec<usize>,
    pub candidate_evaluations: usize,
}

/// Pruned exact recursion: at each frontier `v*` only a filtered candidate
/// list is scanned, with `v* - 1` always admitted. For costs satisfying
/// the merge inequality `cost(t, u) >= cost(t, s) + cost(s, u)` the result
/// matches `exact_dp`.
pub fn pelt<T: Scalar, S: CostSource<T> + ?Sized>(source: &S, gamma: T) -> Result<Segmentation<T>> {
    bellman_recursion(source, gamma, true)
}

/// Unpruned dynamic program scanning every earlier grid point; globally
/// optimal for arbitrary non-negative costs.
pub fn exact_dp<T: Scalar, S: CostSource<T> + ?Sized>(
    source: &S,
    gamma: T,
) -> Result<Segmentation<T>> {
    bellman_recursion(source, gamma, false)
}

fn bellman_recursion<T: Scalar, S: CostSource<T> + ?Sized>(
    source: &S,
    gamma: T,
    prune: bool,
) -> Result<Segmentation<T>> {
    if !(gamma.is_finite() && gamma >= T::zero()) {
        return Err(DjqeError::validation("gamma must be finite and >= 0"));
    }
    let m = source.grid();
    if m == 0 {
        return Err(DjqeError::validation("grid resolution must be positive"));
    }

    let mut bell = vec![T::zero(); m + 1];
    let mut tau = vec![0usize; m + 1];
    bell[0] = -gamma;
    let mut candidates: Vec<usize> = vec![0];
    let mut evaluations = 0usize;

    for v_star in 1..=m {
        if !prune {
            candidates = (0..v_star).collect();
        }
        let pairs: Vec<(usize, usize)> = candidates.iter().map(|&v| (v, v_star)).collect();
        source.prefetch(&pairs);

        let mut best = T::infinity();
        let mut best_v = candidates[0];
        let mut costs = Vec::with_capacity(candidates.len());
        for &v in &candidates {
            let c = source.cost(v, v_star)?;
            costs.push(c);
            evaluations += 1;
            let value = bell[v] + c + gamma;
            // strict comparison keeps the smallest v on ties
            if value < best {
                best = value;
                best_v = v;
            }
        }
        bell[v_star] = best;
        tau[v_star] = best_v;

        if prune && v_star < m {
            let kept: Vec<usize> = candidates
                .iter()
                .zip(&costs)
                .filter(|(&v, &c)| bell[v] + c <= bell[v_star])
                .map(|(&v, _)| v)
                .collect();
            candidates = kept;
            candidates.push(v_star); // admitted unconditionally
        }
    }

    let partition = backtrack(&tau, m)?;
    Ok(Segmentation {
        objective: bell[m] + gamma,
        partition,
        bellman: bell,
        backpointers: tau,
        candidate_evaluations: evaluations,
    })
}

fn backtrack(tau: &[usize], m: usize) -> Result<Partition> {
    let mut cps = Vec::new();
    let mut r = m;
    while r > 0 {
        let prev = tau[r];
        if prev >= r {
            return Err(DjqeError::Numerical(
                "backpointer chain is not strictly decreasing".into(),
            ));
        }
        if prev > 0 {
            cps.push(prev);
        }
        r = prev;
    }
    cps.reverse();
    Partition::from_changepoints(&cps, m)
}

/// Exhaustive enumeration of all `2^(m-1)` grid partitions. Ties are
/// broken toward fewer intervals, then the lexicographically smallest
/// change-point list. Refuses grids above `m = 16`.
pub fn brute_force<T: Scalar, S: CostSource<T> + ?Sized>(
    source: &S,
    gamma: T,
) -> Result<Segmentation<T>> {
    if !(gamma.is_finite() && gamma >= T::zero()) {
        return Err(DjqeError::validation("gamma must be finite and >= 0"));
    }
    let m = source.grid();
    if m == 0 {
        return Err(DjqeError::validation("grid resolution must be positive"));
    }
    if m > 16 {
        return Err(DjqeError::BruteForceGuard(m));
    }

    let mut best: Option<(T, Vec<usize>)> = None;
    let mut evaluations = 0usize;
    for mask in 0u32..(1u32 << (m - 1)) {
        let mut cps = Vec::new();
        for j in 1..m {
            if mask & (1 << (j - 1)) != 0 {
                cps.push(j);
            }
        }
        let mut total = gamma * T::of_usize(cps.len() + 1);
        let mut lo = 0usize;
        for &cp in cps.iter().chain(std::iter::once(&m)) {
            total += source.cost(lo, cp)?;
            evaluations += 1;
            lo = cp;
        }
        let better = match &best {
            None => true,
            Some((obj, cur)) => {
                total < *obj
                    || (total == *obj
                        && (cps.len() < cur.len() || (cps.len() == cur.len() && cps < *cur)))
            }
        };
        if better {
            best = Some((total, cps));
        }
    }
    let (objective, cps) = best.expect("at least one partition exists");
    Ok(Segmentation {
        partition: Partition::from_changepoints(&cps, m)?,
        objective,
        bellman: Vec::new(),
        backpointers: Vec::new(),
        candidate_evaluations: evaluations,
    })
}
