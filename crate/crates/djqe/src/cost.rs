//! Per-interval cost computation and memoization.
//!
//! The cost of an interval is the per-fold-normalized sum of squared
//! residuals of the best regression fit on the fold samples whose action
//! falls inside it. Costs are computed lazily on first request and cached;
//! a dense precomputed table backs the partitioner oracles in tests.

use dashmap::DashMap;
use rayon::prelude::*;

use crate::config::MlpSpec;
use crate::dataset::{Dataset, Interval};
use crate::error::{DjqeError, Result};
use crate::regressor::{self, FittedModel};
use crate::scalar::Scalar;
use crate::seeding::{self, stream};

/// Anything the partitioner can query for interval costs on a fixed grid.
///
/// `prefetch` is a batching hint: implementations may compute the listed
/// intervals concurrently so subsequent `cost` calls are cache hits.
pub trait CostSource<T: Scalar>: Sync {
    fn grid(&self) -> usize;

    /// Cost of the interval `[lo/m, hi/m)` (closed at 1 when `hi == m`).
    fn cost(&self, lo: usize, hi: usize) -> Result<T>;

    fn prefetch(&self, _intervals: &[(usize, usize)]) {}
}

/// A fitted interval's cost, sample count, and regression model.
#[derive(Debug, Clone)]
pub struct CacheEntry<T> {
    pub cost: T,
    pub n_samples: usize,
    pub model: FittedModel<T>,
}

/// Lazy, thread-safe memo of interval fits over one training fold.
///
/// Entries are computed at most once per key; a per-key seed derived from
/// the cache seed makes results identical regardless of request order or
/// thread interleaving. At most `m (m + 1) / 2` entries ever exist.
pub struct CostCache<'a, T> {
    dataset: &'a Dataset<T>,
    fold_rows: Vec<usize>,
    m: usize,
    spec: MlpSpec<T>,
    seed: u64,
    entries: DashMap<(usize, usize), CacheEntry<T>>,
}

impl<'a, T: Scalar> CostCache<'a, T> {
    /// `fold_rows` are the training rows the costs are based on; `seed`
    /// scopes all interval fits in this cache.
    pub fn new(
        dataset: &'a Dataset<T>,
        fold_rows: &[usize],
        m: usize,
        spec: &MlpSpec<T>,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(DjqeError::validation("grid resolution must be positive"));
        }
        if fold_rows.is_empty() {
            return Err(DjqeError::validation("training fold must be non-empty"));
        }
        if fold_rows.iter().any(|&i| i >= dataset.len()) {
            return Err(DjqeError::validation("fold row index out of range"));
        }
        let mut spec = spec.clone();
        if spec.output_clamp.is_none() {
            // one shared bound per fold so every interval model lives in
            // the same prediction range
            let max_abs = fold_rows
                .iter()
                .map(|&i| dataset.reward(i).abs())
                .fold(T::zero(), T::max);
            spec.output_clamp = Some(if max_abs > T::zero() {
                T::of(2.0) * max_abs
            } else {
                T::one()
            });
        }
        Ok(CostCache {
            dataset,
            fold_rows: fold_rows.to_vec(),
            m,
            spec,
            seed,
            entries: DashMap::new(),
        })
    }

    pub fn fold_size(&self) -> usize {
        self.fold_rows.len()
    }

    pub fn fold_rows(&self) -> &[usize] {
        &self.fold_rows
    }

    /// Cost, sample count, and model for one interval, memoized.
    pub fn entry(&self, iv: Interval) -> Result<CacheEntry<T>> {
        if iv.grid() != self.m {
            return Err(DjqeError::Validation(format!(
                "interval grid {} does not match cache grid {}",
                iv.grid(),
                self.m
            )));
        }
        let key = (iv.lo(), iv.hi());
        if let Some(e) = self.entries.get(&key) {
            return Ok(e.clone());
        }
        // Compute outside the map lock; concurrent duplicates are benign
        // because the per-key seed makes every computation identical, and
        // the first writer wins.
        let computed = self.compute(iv)?;
        let stored = self.entries.entry(key).or_insert(computed);
        Ok(stored.clone())
    }

    /// The regression model minimizing the interval's masked loss.
    pub fn model_for(&self, iv: Interval) -> Result<FittedModel<T>> {
        Ok(self.entry(iv)?.model)
    }

    /// Eagerly compute every interval on the grid.
    pub fn compute_all(&self) -> Result<()> {
        let all: Vec<(usize, usize)> = (0..self.m)
            .flat_map(|lo| (lo + 1..=self.m).map(move |hi| (lo, hi)))
            .collect();
        self.prefetch_pairs(&all)
    }

    /// Number of intervals fitted so far.
    pub fn computed(&self) -> usize {
        self.entries.len()
    }

    /// Snapshot of all computed entries, ordered by `(lo, hi)`.
    pub fn entries_sorted(&self) -> Vec<(Interval, CacheEntry<T>)> {
        let mut out: Vec<(Interval, CacheEntry<T>)> = self
            .entries
            .iter()
            .map(|kv| {
                let (lo, hi) = *kv.key();
                (
                    Interval::new(lo, hi, self.m).expect("cache keys are valid intervals"),
                    kv.value().clone(),
                )
            })
            .collect();
        out.sort_by_key(|(iv, _)| (iv.lo(), iv.hi()));
        out
    }

    fn prefetch_pairs(&self, pairs: &[(usize, usize)]) -> Result<()> {
        let missing: Vec<(usize, usize)> = pairs
            .iter()
            .copied()
            .filter(|k| !self.entries.contains_key(k))
            .collect();
        missing
            .par_iter()
            .map(|&(lo, hi)| {
                let iv = Interval::new(lo, hi, self.m)?;
                self.entry(iv).map(|_| ())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    fn compute(&self, iv: Interval) -> Result<CacheEntry<T>> {
        let mut mask = vec![false; self.dataset.len()];
        let mut n_samples = 0usize;
        for &i in &self.fold_rows {
            if iv.contains(self.dataset.action(i)) {
                mask[i] = true;
                n_samples += 1;
            }
        }
        if n_samples == 0 {
            return Ok(CacheEntry {
                cost: T::zero(),
                n_samples: 0,
                model: FittedModel::zero(),
            });
        }
        let seed = seeding::derive(
            self.seed,
            &[stream::INTERVAL_FIT, iv.lo() as u64, iv.hi() as u64],
        );
        let model = regressor::fit(
            self.dataset.features(),
            self.dataset.feature_dim(),
            self.dataset.rewards(),
            &mask,
            &self.spec,
            seed,
        )?;
        let mse = model.masked_mse(
            self.dataset.features(),
            self.dataset.feature_dim(),
            self.dataset.rewards(),
            &mask,
        )?;
        // residual sum over the interval, normalized by the fold size
        let cost = T::of_usize(n_samples) / T::of_usize(self.fold_rows.len()) * mse;
        Ok(CacheEntry {
            cost,
            n_samples,
            model,
        })
    }
}

impl<T: Scalar> CostSource<T> for CostCache<'_, T> {
    fn grid(&self) -> usize {
        self.m
    }

    fn cost(&self, lo: usize, hi: usize) -> Result<T> {
        Ok(self.entry(Interval::new(lo, hi, self.m)?)?.cost)
    }

    fn prefetch(&self, intervals: &[(usize, usize)]) {
        // failures resurface on the subsequent cost() call
        let _ = self.prefetch_pairs(intervals);
    }
}

/// Dense precomputed cost table over every interval of a grid, used as a
/// deterministic stand-in for model fits when exercising the partitioner.
#[derive(Debug, Clone)]
pub struct GridCosts<T> {
    m: usize,
    table: Vec<T>, // index lo * m + (hi - 1)
}

impl<T: Scalar> GridCosts<T> {
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut table = vec![T::zero(); m * m];
        for lo in 0..m {
            for hi in lo + 1..=m {
                table[lo * m + hi - 1] = f(lo, hi);
            }
        }
        GridCosts { m, table }
    }

    /// Within-segment sum-of-squares costs for a sequence of per-cell
    /// observations: the cost of `[lo, hi)` pools the observations of
    /// cells `lo..hi` and sums squared deviations from their mean. These
    /// costs satisfy the merge inequality
    /// `cost(t, u) >= cost(t, s) + cost(s, u)` that makes pruned search
    /// exact, mirroring the structure of real regression residuals.
    pub fn least_squares(cell_values: &[Vec<T>]) -> Self {
        let m = cell_values.len();
        Self::from_fn(m, |lo, hi| {
            let pooled: Vec<T> = cell_values[lo..hi].iter().flatten().copied().collect();
            if pooled.is_empty() {
                return T::zero();
            }
            let n = T::of_usize(pooled.len());
            let mean = pooled.iter().copied().sum::<T>() / n;
            pooled
                .iter()
                .map(|v| {
                    let d = *v - mean;
                    d * d
                })
                .sum()
        })
    }
}

impl<T: Scalar> CostSource<T> for GridCosts<T> {
    fn grid(&self) -> usize {
        self.m
    }

    fn cost(&self, lo: usize, hi: usize) -> Result<T> {
        if lo >= hi || hi > self.m {
            return Err(DjqeError::Validation(format!(
                "invalid interval ({lo}, {hi}) on grid {}",
                self.m
            )));
        }
        Ok(self.table[lo * self.m + hi - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn four_sample_dataset() -> Dataset<f64> {
        // constant feature, actions split across [0, 0.5) and [0.5, 1]
        Dataset::new(
            vec![1.0; 8],
            1,
            vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9],
            vec![0.0, 0.0, 2.0, 2.0, 5.0, 5.0, 5.0, 5.0],
        )
        .unwrap()
    }

    #[test]
    fn empty_interval_costs_zero_with_zero_model() {
        let ds = four_sample_dataset();
        // fold covers only the upper half of the action range
        let cache = CostCache::new(&ds, &[4, 5, 6, 7], 10, &MlpSpec::default(), 0).unwrap();
        let iv = Interval::new(0, 2, 10).unwrap();
        let e = cache.entry(iv).unwrap();
        assert_eq!(e.n_samples, 0);
        assert_eq!(e.cost, 0.0);
        assert_eq!(e.model.predict(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_rewards_cost_zero() {
        let ds = four_sample_dataset();
        let cache = CostCache::new(&ds, &[4, 5, 6, 7], 2, &MlpSpec::default(), 0).unwrap();
        let full = Interval::new(0, 2, 2).unwrap();
        let e = cache.entry(full).unwrap();
        assert_eq!(e.n_samples, 4);
        assert!(e.cost < 1e-12);
    }

    #[test]
    fn binary_rewards_on_constant_feature_hit_hand_cost() {
        let ds = four_sample_dataset();
        // fold = all 8 rows; interval [0, 0.5) holds Y = {0, 0, 2, 2}
        let cache = CostCache::new(
            &ds,
            &[0, 1, 2, 3, 4, 5, 6, 7],
            2,
            &MlpSpec::default(),
            3,
        )
        .unwrap();
        let low = Interval::new(0, 1, 2).unwrap();
        let e = cache.entry(low).unwrap();
        assert_eq!(e.n_samples, 4);
        // masked MSE 1.0 (deviations from mean 1), times 4/8
        assert_relative_eq!(e.cost, 0.5, max_relative = 1e-9);
        assert!(e.model.is_constant());

        // fold exactly the 4 interval samples: cost = 4/4 * 1.0
        let cache = CostCache::new(&ds, &[0, 1, 2, 3], 2, &MlpSpec::default(), 3).unwrap();
        let e = cache.entry(low).unwrap();
        assert_relative_eq!(e.cost, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn entries_are_memoized_and_identical() {
        let ds = four_sample_dataset();
        let cache = CostCache::new(&ds, &[0, 1, 2, 3, 4, 5, 6, 7], 4, &MlpSpec::default(), 7)
            .unwrap();
        let iv = Interval::new(1, 3, 4).unwrap();
        let a = cache.entry(iv).unwrap();
        let b = cache.entry(iv).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        assert_eq!(cache.computed(), 1);

        cache.compute_all().unwrap();
        assert_eq!(cache.computed(), 4 * 5 / 2);
    }

    #[test]
    fn request_order_does_not_change_results() {
        let ds = four_sample_dataset();
        let forward =
            CostCache::new(&ds, &[0, 1, 2, 3, 4, 5, 6, 7], 4, &MlpSpec::default(), 11).unwrap();
        let backward =
            CostCache::new(&ds, &[0, 1, 2, 3, 4, 5, 6, 7], 4, &MlpSpec::default(), 11).unwrap();
        let mut keys: Vec<(usize, usize)> = (0..4)
            .flat_map(|lo| (lo + 1..=4).map(move |hi| (lo, hi)))
            .collect();
        for &(lo, hi) in &keys {
            forward.entry(Interval::new(lo, hi, 4).unwrap()).unwrap();
        }
        keys.reverse();
        for &(lo, hi) in &keys {
            backward.entry(Interval::new(lo, hi, 4).unwrap()).unwrap();
        }
        for &(lo, hi) in &keys {
            let iv = Interval::new(lo, hi, 4).unwrap();
            let a = forward.entry(iv).unwrap();
            let b = backward.entry(iv).unwrap();
            assert_eq!(a.cost, b.cost, "cost mismatch at ({lo}, {hi})");
            assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        }
    }

    #[test]
    fn full_interval_matches_direct_fit() {
        let ds = four_sample_dataset();
        let rows = [0usize, 1, 2, 3, 4, 5, 6, 7];
        let cache = CostCache::new(&ds, &rows, 2, &MlpSpec::default(), 19).unwrap();
        let full = Interval::new(0, 2, 2).unwrap();
        let from_cache = cache.model_for(full).unwrap();

        let mut spec = MlpSpec::default();
        spec.output_clamp = Some(2.0 * 5.0);
        let mask = vec![true; 8];
        let direct = regressor::fit(
            ds.features(),
            1,
            ds.rewards(),
            &mask,
            &spec,
            seeding::derive(19, &[stream::INTERVAL_FIT, 0, 2]),
        )
        .unwrap();
        assert_eq!(
            from_cache.to_json().unwrap(),
            direct.to_json().unwrap()
        );
    }

    #[test]
    fn grid_costs_lookup_and_least_squares() {
        let costs = GridCosts::from_fn(3, |lo, hi| (lo * 10 + hi) as f64);
        assert_eq!(costs.cost(0, 3).unwrap(), 3.0);
        assert_eq!(costs.cost(1, 2).unwrap(), 12.0);
        assert!(costs.cost(2, 2).is_err());
        assert!(costs.cost(0, 4).is_err());

        // cells {0,0} and {2,2}: per-cell SS = 0, pooled SS = 4
        let ls = GridCosts::least_squares(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        assert_eq!(ls.cost(0, 1).unwrap(), 0.0);
        assert_eq!(ls.cost(1, 2).unwrap(), 0.0);
        assert_relative_eq!(ls.cost(0, 2).unwrap(), 4.0);
    }

    #[test]
    fn least_squares_costs_are_merge_superadditive() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cells: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let costs = GridCosts::least_squares(&cells);
        for t in 0..8 {
            for s in t + 1..8 {
                for u in s + 1..=8 {
                    let whole = costs.cost(t, u).unwrap();
                    let parts = costs.cost(t, s).unwrap() + costs.cost(s, u).unwrap();
                    assert!(
                        whole + 1e-9 >= parts,
                        "merge inequality violated at ({t},{s},{u})"
                    );
                }
            }
        }
    }
}
