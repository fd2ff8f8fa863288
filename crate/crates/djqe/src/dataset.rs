//! Core domain types: datasets, grid intervals, partitions, and policies.
//!
//! Actions live in `[0, 1]`. Interval endpoints are stored as indices on
//! the grid `{j/m : j = 0..=m}`, never as floating endpoints, so partition
//! validation is exact integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{DjqeError, Result};
use crate::scalar::Scalar;

// ── Dataset ─────────────────────────────────────────────────────────────

/// Affine map from normalized actions back to original units:
/// `original = offset + scale * normalized`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScale<T> {
    pub offset: T,
    pub scale: T,
}

impl<T: Scalar> ActionScale<T> {
    pub fn identity() -> Self {
        ActionScale {
            offset: T::zero(),
            scale: T::one(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.offset == T::zero() && self.scale == T::one()
    }

    pub fn to_original(&self, normalized: T) -> T {
        self.offset + self.scale * normalized
    }
}

/// Logged feature–action–reward triples with actions normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n: usize,
    p: usize,
    features: Vec<T>, // row-major n x p
    actions: Vec<T>,
    rewards: Vec<T>,
    action_scale: ActionScale<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Build a dataset whose actions are already in `[0, 1]`.
    pub fn new(features: Vec<T>, p: usize, actions: Vec<T>, rewards: Vec<T>) -> Result<Self> {
        Self::with_scale(features, p, actions, rewards, ActionScale::identity())
    }

    /// Build a dataset from raw actions, min–max normalizing to `[0, 1]`
    /// when any action falls outside that range. The affine map back to
    /// original units is recorded either way.
    pub fn from_raw_actions(
        features: Vec<T>,
        p: usize,
        actions: Vec<T>,
        rewards: Vec<T>,
    ) -> Result<Self> {
        let in_range = actions.iter().all(|a| *a >= T::zero() && *a <= T::one());
        if in_range {
            return Self::new(features, p, actions, rewards);
        }
        let lo = actions.iter().cloned().fold(T::infinity(), T::min);
        let hi = actions.iter().cloned().fold(T::neg_infinity(), T::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(DjqeError::validation("non-finite action value"));
        }
        let span = hi - lo;
        if span <= T::zero() {
            return Err(DjqeError::validation(
                "cannot normalize actions: zero range",
            ));
        }
        let normalized = actions.iter().map(|a| (*a - lo) / span).collect();
        Self::with_scale(
            features,
            p,
            normalized,
            rewards,
            ActionScale {
                offset: lo,
                scale: span,
            },
        )
    }

    fn with_scale(
        features: Vec<T>,
        p: usize,
        actions: Vec<T>,
        rewards: Vec<T>,
        action_scale: ActionScale<T>,
    ) -> Result<Self> {
        let n = actions.len();
        if n == 0 {
            return Err(DjqeError::validation("dataset must contain at least one row"));
        }
        if p == 0 {
            return Err(DjqeError::validation("feature dimension must be positive"));
        }
        if rewards.len() != n {
            return Err(DjqeError::DimensionMismatch {
                expected: n,
                got: rewards.len(),
            });
        }
        if features.len() != n * p {
            return Err(DjqeError::DimensionMismatch {
                expected: n * p,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DjqeError::validation("features contain non-finite values"));
        }
        if rewards.iter().any(|v| !v.is_finite()) {
            return Err(DjqeError::validation("rewards contain non-finite values"));
        }
        if actions
            .iter()
            .any(|a| !a.is_finite() || *a < T::zero() || *a > T::one())
        {
            return Err(DjqeError::validation("actions must lie in [0, 1]"));
        }
        Ok(Dataset {
            n,
            p,
            features,
            actions,
            rewards,
            action_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn feature_dim(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn action(&self, i: usize) -> T {
        self.actions[i]
    }

    pub fn actions(&self) -> &[T] {
        &self.actions
    }

    pub fn reward(&self, i: usize) -> T {
        self.rewards[i]
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn action_scale(&self) -> ActionScale<T> {
        self.action_scale
    }

    /// Largest absolute reward, used for default output clamps.
    pub fn max_abs_reward(&self) -> T {
        self.rewards
            .iter()
            .map(|y| y.abs())
            .fold(T::zero(), T::max)
    }

    /// Row-major `n × (p+1)` matrix with the action appended as the last
    /// column, for models over the joint `(x, a)` input.
    pub fn features_with_action(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * (self.p + 1));
        for i in 0..self.n {
            out.extend_from_slice(self.row(i));
            out.push(self.actions[i]);
        }
        out
    }
}

// ── Interval ────────────────────────────────────────────────────────────

/// A grid-aligned action interval `[lo/m, hi/m)`, closed on the right when
/// `hi == m` so that the final interval is `[lo/m, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    lo: usize,
    hi: usize,
    m: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize, m: usize) -> Result<Self> {
        if m == 0 || lo >= hi || hi > m {
            return Err(DjqeError::Validation(format!(
                "invalid interval: lo={lo}, hi={hi}, m={m}"
            )));
        }
        Ok(Interval { lo, hi, m })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn grid(&self) -> usize {
        self.m
    }

    pub fn lo_frac<T: Scalar>(&self) -> T {
        T::of_usize(self.lo) / T::of_usize(self.m)
    }

    pub fn hi_frac<T: Scalar>(&self) -> T {
        T::of_usize(self.hi) / T::of_usize(self.m)
    }

    /// Interval length as a fraction of the action space.
    pub fn len_frac<T: Scalar>(&self) -> T {
        T::of_usize(self.hi - self.lo) / T::of_usize(self.m)
    }

    pub fn is_last(&self) -> bool {
        self.hi == self.m
    }

    /// Realizes the indicator `I(a in I)`: half-open on the right except
    /// for the final interval, which includes `a = 1`.
    pub fn contains<T: Scalar>(&self, a: T) -> bool {
        let lo = self.lo_frac::<T>();
        if a < lo {
            return false;
        }
        if self.is_last() {
            a <= T::one()
        } else {
            a < self.hi_frac::<T>()
        }
    }
}

// ── Partition ───────────────────────────────────────────────────────────

/// An ordered, disjoint, exhaustive cover of `[0, 1]` by grid intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    intervals: Vec<Interval>,
    m: usize,
}

impl Partition {
    /// Single interval `[0, 1]`.
    pub fn trivial(m: usize) -> Result<Self> {
        Ok(Partition {
            intervals: vec![Interval::new(0, m, m)?],
            m,
        })
    }

    pub fn from_intervals(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(DjqeError::validation("partition must contain intervals"));
        }
        let m = intervals[0].m;
        if intervals.iter().any(|iv| iv.m != m) {
            return Err(DjqeError::validation("mixed grid resolutions in partition"));
        }
        if intervals[0].lo != 0 || intervals[intervals.len() - 1].hi != m {
            return Err(DjqeError::validation("partition must cover [0, 1]"));
        }
        for pair in intervals.windows(2) {
            if pair[0].hi != pair[1].lo {
                return Err(DjqeError::validation(
                    "partition intervals must be contiguous",
                ));
            }
        }
        Ok(Partition { intervals, m })
    }

    /// Build the partition whose interior endpoints are exactly `taus`.
    pub fn from_changepoints(taus: &[usize], m: usize) -> Result<Self> {
        if m == 0 {
            return Err(DjqeError::validation("grid resolution must be positive"));
        }
        for pair in taus.windows(2) {
            if pair[0] >= pair[1] {
                return Err(DjqeError::validation(
                    "change points must be strictly increasing",
                ));
            }
        }
        if taus.iter().any(|&t| t == 0 || t >= m) {
            return Err(DjqeError::validation(
                "change points must lie strictly inside the grid",
            ));
        }
        let mut intervals = Vec::with_capacity(taus.len() + 1);
        let mut lo = 0usize;
        for &t in taus {
            intervals.push(Interval::new(lo, t, m)?);
            lo = t;
        }
        intervals.push(Interval::new(lo, m, m)?);
        Ok(Partition { intervals, m })
    }

    pub fn grid(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least one interval by construction
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Interior endpoints as grid indices (the change-point set `J`).
    pub fn change_points(&self) -> Vec<usize> {
        self.intervals[..self.intervals.len() - 1]
            .iter()
            .map(|iv| iv.hi)
            .collect()
    }

    pub fn change_points_frac<T: Scalar>(&self) -> Vec<T> {
        self.change_points()
            .into_iter()
            .map(|t| T::of_usize(t) / T::of_usize(self.m))
            .collect()
    }

    /// Index of the unique interval containing `a`.
    pub fn find<T: Scalar>(&self, a: T) -> usize {
        // First interval whose right endpoint lies strictly above a; the
        // final closed interval picks up everything else (incl. a = 1).
        for (k, iv) in self.intervals.iter().enumerate() {
            if !iv.is_last() && a < iv.hi_frac::<T>() {
                return k;
            }
        }
        self.intervals.len() - 1
    }
}

/// One-sided Hausdorff distance from true change points to estimated ones:
/// `max over true tau of min over estimated tau-hat of |tau-hat - tau|`.
/// Returns `+inf` when the estimate has no change points at all.
pub fn changepoint_hausdorff<T: Scalar>(estimated: &Partition, truth: &Partition) -> Result<T> {
    let true_cps = truth.change_points_frac::<T>();
    if true_cps.is_empty() {
        return Err(DjqeError::validation(
            "truth partition has no change points",
        ));
    }
    let est_cps = estimated.change_points_frac::<T>();
    if est_cps.is_empty() {
        return Ok(T::infinity());
    }
    let mut worst = T::zero();
    for t in &true_cps {
        let closest = est_cps
            .iter()
            .map(|e| (*e - *t).abs())
            .fold(T::infinity(), T::min);
        worst = worst.max(closest);
    }
    Ok(worst)
}

// ── Policy ──────────────────────────────────────────────────────────────

/// Deterministic target policy mapping features to an action in `[0, 1]`.
///
/// Scenario-optimal variants are closed-form argmax policies for the
/// built-in synthetic scenarios; `ToyIdentity` is `pi(x) = x_1`;
/// `Tabulated` carries one precomputed action per dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy<T> {
    OptimalS1,
    OptimalS2,
    OptimalS3,
    OptimalS4,
    OptimalToy,
    /// pi(x) = x_1, clamped to [0, 1].
    ToyIdentity,
    Constant(T),
    Tabulated(Vec<T>),
}

impl<T: Scalar> Policy<T> {
    pub fn constant(a: T) -> Result<Self> {
        if !a.is_finite() || a < T::zero() || a > T::one() {
            return Err(DjqeError::validation("constant policy action outside [0, 1]"));
        }
        Ok(Policy::Constant(a))
    }

    pub fn tabulated(actions: Vec<T>) -> Result<Self> {
        if actions
            .iter()
            .any(|a| !a.is_finite() || *a < T::zero() || *a > T::one())
        {
            return Err(DjqeError::validation(
                "tabulated policy actions must lie in [0, 1]",
            ));
        }
        if actions.is_empty() {
            return Err(DjqeError::validation("tabulated policy is empty"));
        }
        Ok(Policy::Tabulated(actions))
    }

    pub fn name(&self) -> String {
        match self {
            Policy::OptimalS1 => "s1-optimal".into(),
            Policy::OptimalS2 => "s2-optimal".into(),
            Policy::OptimalS3 => "s3-optimal".into(),
            Policy::OptimalS4 => "s4-optimal".into(),
            Policy::OptimalToy => "toy-optimal".into(),
            Policy::ToyIdentity => "toy-identity".into(),
            Policy::Constant(a) => format!("constant:{a}"),
            Policy::Tabulated(_) => "tabulated".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_boundaries_are_half_open() {
        let iv = Interval::new(0, 5, 10).unwrap();
        assert!(iv.contains(0.0));
        assert!(iv.contains(0.49));
        assert!(!iv.contains(0.5_f64));

        let last = Interval::new(5, 10, 10).unwrap();
        assert!(last.contains(0.5));
        assert!(last.contains(1.0_f64));

        let mid = Interval::new(7, 13, 20).unwrap();
        assert!(mid.contains(0.4_f64));
    }

    #[test]
    fn partition_from_changepoints_examples() {
        let p = Partition::from_changepoints(&[], 10).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.intervals()[0], Interval::new(0, 10, 10).unwrap());

        let p = Partition::from_changepoints(&[5], 10).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.change_points(), vec![5]);

        // grid form of the first scenario's true breaks at 0.35 / 0.65
        let p = Partition::from_changepoints(&[7, 13], 20).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.change_points_frac::<f64>(), vec![0.35, 0.65]);
    }

    #[test]
    fn partition_from_changepoints_rejects_bad_input() {
        assert!(Partition::from_changepoints(&[3, 3], 10).is_err());
        assert!(Partition::from_changepoints(&[0], 10).is_err());
        assert!(Partition::from_changepoints(&[10], 10).is_err());
        assert!(Partition::from_changepoints(&[7, 5], 10).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let truth = Partition::from_changepoints(&[7, 13], 20).unwrap();
        let exact = Partition::from_changepoints(&[7, 13], 20).unwrap();
        assert_eq!(changepoint_hausdorff::<f64>(&exact, &truth).unwrap(), 0.0);

        // estimated {0.3, 0.7} vs truth {0.35, 0.65}
        let est = Partition::from_changepoints(&[6, 14], 20).unwrap();
        let d: f64 = changepoint_hausdorff(&est, &truth).unwrap();
        assert!((d - 0.05).abs() < 1e-12);

        let empty = Partition::trivial(20).unwrap();
        let truth1 = Partition::from_changepoints(&[10], 20).unwrap();
        assert!(changepoint_hausdorff::<f64>(&empty, &truth1)
            .unwrap()
            .is_infinite());

        // truth without change points violates the precondition
        assert!(changepoint_hausdorff::<f64>(&est, &empty).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::<f64>::new(vec![], 1, vec![], vec![]).is_err());
        assert!(Dataset::new(vec![0.0], 1, vec![1.5], vec![0.0]).is_err());
        assert!(Dataset::new(vec![f64::NAN], 1, vec![0.5], vec![0.0]).is_err());
        let ds = Dataset::new(vec![1.0, 2.0], 2, vec![0.5], vec![3.0]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn raw_actions_normalized_only_when_out_of_range() {
        // already in [0, 1]: untouched, identity map
        let ds =
            Dataset::from_raw_actions(vec![0.0, 0.0], 1, vec![0.2, 0.8], vec![0.0, 0.0]).unwrap();
        assert_eq!(ds.actions(), &[0.2, 0.8]);
        assert!(ds.action_scale().is_identity());

        // dose-like range gets min-max normalized, with the map recorded
        let ds =
            Dataset::from_raw_actions(vec![0.0, 0.0], 1, vec![10.0, 30.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(ds.actions(), &[0.0, 1.0]);
        let scale = ds.action_scale();
        assert_eq!(scale.to_original(0.0), 10.0);
        assert_eq!(scale.to_original(1.0), 30.0);
    }

    proptest! {
        #[test]
        fn exactly_one_interval_contains_each_action(
            cps in proptest::collection::btree_set(1usize..20, 0..6),
            a in 0.0f64..=1.0,
        ) {
            let taus: Vec<usize> = cps.into_iter().collect();
            let part = Partition::from_changepoints(&taus, 20).unwrap();
            let hits = part.intervals().iter().filter(|iv| iv.contains(a)).count();
            prop_assert_eq!(hits, 1);
            let k = part.find(a);
            prop_assert!(part.intervals()[k].contains(a));
        }

        #[test]
        fn changepoint_roundtrip_is_identity(
            cps in proptest::collection::btree_set(1usize..50, 0..10),
            m in 50usize..60,
        ) {
            let taus: Vec<usize> = cps.into_iter().collect();
            let part = Partition::from_changepoints(&taus, m).unwrap();
            prop_assert_eq!(part.change_points(), taus);
        }

        #[test]
        fn hausdorff_of_self_is_zero(
            cps in proptest::collection::btree_set(1usize..30, 1..6),
        ) {
            let taus: Vec<usize> = cps.into_iter().collect();
            let part = Partition::from_changepoints(&taus, 30).unwrap();
            prop_assert_eq!(changepoint_hausdorff::<f64>(&part, &part).unwrap(), 0.0);
        }
    }
}
