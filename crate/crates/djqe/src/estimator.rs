//! The full evaluation pipeline: fold splitting, per-fold jump
//! discretization with interval outcome and propensity models, and the
//! cross-fitted doubly-robust value estimate with penalty selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EstimatorVariant, EvalConfig, PartitionerKind};
use crate::cost::CostCache;
use crate::dataset::{Dataset, Partition, Policy};
use crate::error::{DjqeError, Result};
use crate::partitioner::{self, Segmentation};
use crate::regressor::{self, FittedModel};
use crate::scalar::Scalar;
use crate::seeding::{self, stream};
use crate::synthetic;

// ── Fold plan ───────────────────────────────────────────────────────────

/// A seeded random partition of row indices into near-equal folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    seed: u64,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, l: usize) -> &[usize] {
        &self.folds[l]
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// All rows outside fold `l`: the training set for fold `l`'s models.
    pub fn complement(&self, l: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != l)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Split `{0, .., n-1}` into `l` disjoint folds whose sizes differ by at
/// most one.
pub fn split_folds(n: usize, l: usize, seed: u64) -> Result<FoldPlan> {
    if l < 2 {
        return Err(DjqeError::validation("fold count must be >= 2"));
    }
    if n < l {
        return Err(DjqeError::Validation(format!(
            "cannot split {n} rows into {l} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[stream::FOLD_SPLIT]));
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / l + 1); l];
    for (i, row) in order.into_iter().enumerate() {
        folds[i % l].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

// ── Fitted fold ─────────────────────────────────────────────────────────

/// One fold's discretization plus its per-interval outcome and propensity
/// models. Propensity predictions are clipped to `[clip_eps, 1]` at use.
#[derive(Debug, Clone)]
pub struct FittedFold<T> {
    pub fold_index: usize,
    pub partition: Partition,
    /// Partitioner objective: normalized cost sum plus penalty.
    pub objective: T,
    pub outcome_models: Vec<FittedModel<T>>,
    pub propensity_models: Vec<FittedModel<T>>,
    /// Training samples that fell inside each interval.
    pub interval_counts: Vec<usize>,
    pub clip_eps: T,
}

impl<T: Scalar> FittedFold<T> {
    /// Assemble a fold from externally supplied models — the injection
    /// point for known-truth propensity/outcome models in tests.
    pub fn from_parts(
        partition: Partition,
        outcome_models: Vec<FittedModel<T>>,
        propensity_models: Vec<FittedModel<T>>,
        clip_eps: T,
    ) -> Result<Self> {
        let k = partition.len();
        if outcome_models.len() != k {
            return Err(DjqeError::DimensionMismatch {
                expected: k,
                got: outcome_models.len(),
            });
        }
        if propensity_models.len() != k {
            return Err(DjqeError::DimensionMismatch {
                expected: k,
                got: propensity_models.len(),
            });
        }
        if !(clip_eps > T::zero() && clip_eps < T::of(0.5)) {
            return Err(DjqeError::validation("clip_eps must lie in (0, 0.5)"));
        }
        Ok(FittedFold {
            fold_index: 0,
            partition,
            objective: T::zero(),
            outcome_models,
            propensity_models,
            interval_counts: vec![0; k],
            clip_eps,
        })
    }

    pub fn outcome(&self, interval: usize, x: &[T]) -> Result<T> {
        self.outcome_models[interval].predict(x)
    }

    /// Clipped propensity prediction for one interval; the flag reports
    /// whether the raw prediction fell outside `[clip_eps, 1]`.
    pub fn propensity(&self, interval: usize, x: &[T]) -> Result<(T, bool)> {
        let raw = self.propensity_models[interval].predict(x)?;
        let clipped = raw.max(self.clip_eps).min(T::one());
        Ok((clipped, clipped != raw))
    }
}

/// Fit one fold: build the interval-cost cache on `train_rows`, select the
/// penalized partition, and fit a propensity model per selected interval.
///
/// The partitioner penalty is `gamma / |train_rows|`: interval costs are
/// fold-size-normalized, so rescaling the penalty identically keeps the
/// optimized objective proportional to the unnormalized residual sum plus
/// `gamma` per interval, which is the scale the default gamma grid targets.
pub fn fit_fold<T: Scalar>(
    dataset: &Dataset<T>,
    train_rows: &[usize],
    config: &EvalConfig<T>,
    gamma: T,
    fold_index: usize,
) -> Result<FittedFold<T>> {
    let m = config.resolve_m(dataset.len());
    let fold_seed = seeding::derive(config.seed, &[stream::FOLD_FIT, fold_index as u64]);
    let cache = CostCache::new(dataset, train_rows, m, &config.mlp, fold_seed)?;
    let gamma_eff = gamma / T::of_usize(train_rows.len());
    let seg: Segmentation<T> = match config.partitioner {
        PartitionerKind::Pelt => partitioner::pelt(&cache, gamma_eff)?,
        PartitionerKind::ExactDp => partitioner::exact_dp(&cache, gamma_eff)?,
    };

    let intervals = seg.partition.intervals().to_vec();
    let mut outcome_models = Vec::with_capacity(intervals.len());
    let mut interval_counts = Vec::with_capacity(intervals.len());
    for iv in &intervals {
        let entry = cache.entry(*iv)?;
        outcome_models.push(entry.model);
        interval_counts.push(entry.n_samples);
    }

    // one indicator regression per selected interval, over all train rows
    let mut mask = vec![false; dataset.len()];
    for &i in train_rows {
        mask[i] = true;
    }
    let prop_spec = {
        let mut s = config.mlp.clone();
        // indicator targets live in [0, 1]; match the derived bound rule
        if s.output_clamp.is_none() {
            s.output_clamp = Some(T::of(2.0));
        }
        s
    };
    let propensity_models = intervals
        .par_iter()
        .enumerate()
        .map(|(k, iv)| {
            let targets: Vec<T> = dataset
                .actions()
                .iter()
                .map(|a| if iv.contains(*a) { T::one() } else { T::zero() })
                .collect();
            regressor::fit(
                dataset.features(),
                dataset.feature_dim(),
                &targets,
                &mask,
                &prop_spec,
                seeding::derive(fold_seed, &[stream::PROPENSITY_FIT, k as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FittedFold {
        fold_index,
        partition: seg.partition,
        objective: seg.objective,
        outcome_models,
        propensity_models,
        interval_counts,
        clip_eps: config.propensity_clip,
    })
}

// ── Doubly-robust scoring ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default)]
struct PartialScore<T> {
    sum: T,
    propensity_evaluations: usize,
    propensity_clipped: usize,
}

fn row_summand<T: Scalar>(
    dataset: &Dataset<T>,
    row: usize,
    fold: &FittedFold<T>,
    pi_action: T,
    variant: EstimatorVariant,
) -> Result<(T, Option<bool>)> {
    let x = dataset.row(row);
    let a = dataset.action(row);
    let y = dataset.reward(row);
    let k_pi = fold.partition.find(pi_action);
    let k_a = fold.partition.find(a);

    let plug_in = match variant {
        // plug-in from the target action's interval
        EstimatorVariant::StandardDr => fold.outcome(k_pi, x)?,
        // plug-in from the observed action's interval
        EstimatorVariant::PaperLiteral => fold.outcome(k_a, x)?,
    };
    if k_a != k_pi {
        return Ok((plug_in, None));
    }
    // augmentation: both variants correct with the observed interval's
    // residual, inverse-weighted by its propensity
    let q_a = fold.outcome(k_a, x)?;
    let (b, was_clipped) = fold.propensity(k_a, x)?;
    Ok((plug_in + (y - q_a) / b, Some(was_clipped)))
}

/// The doubly-robust summand for one row, exposed for building masked
/// partial value estimates.
pub fn dr_row_summand<T: Scalar>(
    dataset: &Dataset<T>,
    row: usize,
    fold: &FittedFold<T>,
    pi_action: T,
    variant: EstimatorVariant,
) -> Result<T> {
    Ok(row_summand(dataset, row, fold, pi_action, variant)?.0)
}

fn score_rows<T: Scalar>(
    dataset: &Dataset<T>,
    rows: &[usize],
    fold: &FittedFold<T>,
    pi_actions: &[T],
    variant: EstimatorVariant,
) -> Result<PartialScore<T>> {
    let mut out = PartialScore {
        sum: T::zero(),
        propensity_evaluations: 0,
        propensity_clipped: 0,
    };
    for &i in rows {
        let (v, prop) = row_summand(dataset, i, fold, pi_actions[i], variant)?;
        out.sum += v;
        if let Some(clipped) = prop {
            out.propensity_evaluations += 1;
            if clipped {
                out.propensity_clipped += 1;
            }
        }
    }
    Ok(out)
}

/// Sum of doubly-robust summands over `test_rows`, scored with a fold fit
/// on disjoint training rows.
pub fn dr_partial_sum<T: Scalar>(
    dataset: &Dataset<T>,
    test_rows: &[usize],
    fold: &FittedFold<T>,
    policy: &Policy<T>,
    variant: EstimatorVariant,
) -> Result<T> {
    let pi = synthetic::policy_actions(policy, dataset)?;
    Ok(score_rows(dataset, test_rows, fold, &pi, variant)?.sum)
}

// ── Full pipeline ───────────────────────────────────────────────────────

/// All fitted folds plus the resolved penalty and grid resolution.
#[derive(Debug, Clone)]
pub struct DjqeFit<T> {
    pub plan: FoldPlan,
    pub folds: Vec<FittedFold<T>>,
    pub gamma: T,
    pub m: usize,
}

/// Fit every fold of the pipeline: resolve (or cross-validate) the
/// penalty, split the data, and fit each fold on its complement.
pub fn djqe_fit<T: Scalar>(dataset: &Dataset<T>, config: &EvalConfig<T>) -> Result<DjqeFit<T>> {
    config.validate()?;
    let n = dataset.len();
    let grid = config.resolve_gamma_grid(n);
    let gamma = if grid.len() == 1 {
        grid[0]
    } else {
        select_gamma(dataset, config)?
    };
    let plan = split_folds(n, config.folds, config.seed)?;
    let folds = (0..config.folds)
        .into_par_iter()
        .map(|l| fit_fold(dataset, &plan.complement(l), config, gamma, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(DjqeFit {
        plan,
        folds,
        gamma,
        m: config.resolve_m(n),
    })
}

/// Per-fold slice of an evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct FoldReport<T> {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_intervals: usize,
    pub change_points: Vec<T>,
    pub partition: Partition,
    pub objective: T,
    pub partial_sum: T,
    pub interval_sample_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics<T> {
    pub propensity_evaluations: usize,
    pub propensity_clipped: usize,
    pub propensity_clip_rate: T,
}

/// Complete result of one evaluation run, serializable as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport<T> {
    pub value: T,
    pub policy: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub selected_gamma: T,
    pub estimator_variant: EstimatorVariant,
    pub folds: Vec<FoldReport<T>>,
    pub diagnostics: Diagnostics<T>,
    pub config: EvalConfig<T>,
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| DjqeError::Numerical(format!("report serialization failed: {e}")))
    }
}

/// Score an existing fit against a policy: the cross-fitted value is the
/// average of each fold's summands over that fold's held-out rows.
pub fn evaluate_with_fit<T: Scalar>(
    dataset: &Dataset<T>,
    policy: &Policy<T>,
    fit: &DjqeFit<T>,
    variant: EstimatorVariant,
) -> Result<(T, Vec<PartialScoreReport<T>>)> {
    let pi = synthetic::policy_actions(policy, dataset)?;
    let mut partials = Vec::with_capacity(fit.folds.len());
    let mut total = T::zero();
    for (l, fold) in fit.folds.iter().enumerate() {
        let score = score_rows(dataset, fit.plan.fold(l), fold, &pi, variant)?;
        total += score.sum;
        partials.push(PartialScoreReport {
            partial_sum: score.sum,
            propensity_evaluations: score.propensity_evaluations,
            propensity_clipped: score.propensity_clipped,
        });
    }
    Ok((total / T::of_usize(dataset.len()), partials))
}

/// Per-fold partial sum plus propensity-clip accounting.
#[derive(Debug, Clone, Copy)]
pub struct PartialScoreReport<T> {
    pub partial_sum: T,
    pub propensity_evaluations: usize,
    pub propensity_clipped: usize,
}

/// End-to-end evaluation: fit all folds, then score the policy.
pub fn djqe_evaluate<T: Scalar>(
    dataset: &Dataset<T>,
    policy: &Policy<T>,
    config: &EvalConfig<T>,
) -> Result<EvalReport<T>> {
    let fit = djqe_fit(dataset, config)?;
    let (value, partials) = evaluate_with_fit(dataset, policy, &fit, config.estimator_variant)?;
    if !value.is_finite() {
        return Err(DjqeError::Numerical(
            "value estimate is non-finite".into(),
        ));
    }

    let mut evals = 0usize;
    let mut clipped = 0usize;
    let folds = fit
        .folds
        .iter()
        .zip(&partials)
        .map(|(fold, partial)| {
            evals += partial.propensity_evaluations;
            clipped += partial.propensity_clipped;
            FoldReport {
                fold: fold.fold_index,
                n_train: dataset.len() - fit.plan.fold(fold.fold_index).len(),
                n_test: fit.plan.fold(fold.fold_index).len(),
                n_intervals: fold.partition.len(),
                change_points: fold.partition.change_points_frac(),
                partition: fold.partition.clone(),
                objective: fold.objective,
                partial_sum: partial.partial_sum,
                interval_sample_counts: fold.interval_counts.clone(),
            }
        })
        .collect();

    Ok(EvalReport {
        value,
        policy: policy.name(),
        n: dataset.len(),
        p: dataset.feature_dim(),
        m: fit.m,
        selected_gamma: fit.gamma,
        estimator_variant: config.estimator_variant,
        folds,
        diagnostics: Diagnostics {
            propensity_evaluations: evals,
            propensity_clipped: clipped,
            propensity_clip_rate: if evals == 0 {
                T::zero()
            } else {
                T::of_usize(clipped) / T::of_usize(evals)
            },
        },
        config: config.clone(),
    })
}

// ── Penalty selection ───────────────────────────────────────────────────

/// Choose the penalty by five-fold cross-validation: for each candidate,
/// fit the partition and interval models on four fifths of the data and
/// score the held-out piecewise squared loss; the candidate with the
/// smallest mean loss wins, with ties resolved toward the larger penalty.
pub fn select_gamma<T: Scalar>(dataset: &Dataset<T>, config: &EvalConfig<T>) -> Result<T> {
    config.validate()?;
    let n = dataset.len();
    let mut grid = config.resolve_gamma_grid(n);
    grid.sort_by(|a, b| a.partial_cmp(b).expect("gamma grid entries are finite"));
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let m = config.resolve_m(n);
    const CV_FOLDS: usize = 5;
    let cv_seed = seeding::derive(config.seed, &[stream::GAMMA_CV]);
    let plan = split_folds(n, CV_FOLDS, cv_seed)?;

    // one cost cache per CV fold, shared across the whole grid: interval
    // fits do not depend on gamma, so candidates differ only in the DP
    let fold_losses: Vec<Vec<T>> = (0..CV_FOLDS)
        .into_par_iter()
        .map(|j| {
            let train = plan.complement(j);
            let cache = CostCache::new(
                dataset,
                &train,
                m,
                &config.mlp,
                seeding::derive(cv_seed, &[j as u64]),
            )?;
            let gamma_scale = T::of_usize(train.len());
            grid.iter()
                .map(|&gamma| {
                    let seg = match config.partitioner {
                        PartitionerKind::Pelt => partitioner::pelt(&cache, gamma / gamma_scale)?,
                        PartitionerKind::ExactDp => {
                            partitioner::exact_dp(&cache, gamma / gamma_scale)?
                        }
                    };
                    let mut loss = T::zero();
                    for &i in plan.fold(j) {
                        let k = seg.partition.find(dataset.action(i));
                        let model = cache.model_for(seg.partition.intervals()[k])?;
                        let r = dataset.reward(i) - model.predict(dataset.row(i))?;
                        loss += r * r;
                    }
                    Ok(loss)
                })
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best_gamma = grid[0];
    let mut best_loss = T::infinity();
    for (g_idx, &gamma) in grid.iter().enumerate() {
        let total: T = fold_losses.iter().map(|per_fold| per_fold[g_idx]).sum();
        // <= prefers the larger gamma on exact ties (grid is ascending)
        if total <= best_loss {
            best_loss = total;
            best_gamma = gamma;
        }
    }
    Ok(best_gamma)
}
