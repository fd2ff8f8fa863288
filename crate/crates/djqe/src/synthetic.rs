//! Ground-truth generators and the benchmark harness: five synthetic
//! scenarios with known Q-functions, their optimal policies and oracle
//! values, a calibration simulator for real datasets, and replicated
//! bias/sd/MSE comparisons between estimators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorVariant, EvalConfig, MlpSpec};
use crate::dataset::{ActionScale, Dataset, Policy};
use crate::error::{DjqeError, Result};
use crate::estimator::{self, DjqeFit};
use crate::kernel::{self, KernelKind, KernelSpec};
use crate::regressor::{self, FittedModel};
use crate::scalar::Scalar;
use crate::seeding::{self, stream};

/// Built-in scenario identifiers.
///
/// `S1`/`S2` have piecewise-constant Q in the action, `S3`/`S4` are
/// continuous in the action, and `Toy` shares `S3`'s Q-function but draws
/// features from `Unif[0,1]` instead of `Unif[-1,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    Toy,
}

impl ScenarioId {
    /// Minimum feature dimension the scenario's Q-function reads.
    pub fn min_features(&self) -> usize {
        match self {
            ScenarioId::S1 => 2,
            ScenarioId::S2 | ScenarioId::S3 | ScenarioId::Toy => 1,
            ScenarioId::S4 => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S4 => "s4",
            ScenarioId::Toy => "toy",
        }
    }

    pub fn all() -> [ScenarioId; 5] {
        [
            ScenarioId::S1,
            ScenarioId::S2,
            ScenarioId::S3,
            ScenarioId::S4,
            ScenarioId::Toy,
        ]
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = DjqeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            "s3" => Ok(ScenarioId::S3),
            "s4" => Ok(ScenarioId::S4),
            "toy" => Ok(ScenarioId::Toy),
            other => Err(DjqeError::Validation(format!(
                "unknown scenario '{other}' (expected s1, s2, s3, s4, or toy)"
            ))),
        }
    }
}

/// A fully specified generator: scenario, feature dimension, and reward
/// noise level. Behavior actions are always `Unif[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub id: ScenarioId,
    pub p: usize,
    pub noise_sd: T,
}

impl<T: Scalar> Scenario<T> {
    /// Standard-noise scenario (`sd = 1`).
    pub fn new(id: ScenarioId, p: usize) -> Result<Self> {
        Self::with_noise(id, p, T::one())
    }

    /// Deterministic rewards, `Y = Q(X, A)` exactly.
    pub fn noiseless(id: ScenarioId, p: usize) -> Result<Self> {
        Self::with_noise(id, p, T::zero())
    }

    pub fn with_noise(id: ScenarioId, p: usize, noise_sd: T) -> Result<Self> {
        if p < id.min_features() {
            return Err(DjqeError::Validation(format!(
                "scenario {} needs p >= {}, got {p}",
                id.as_str(),
                id.min_features()
            )));
        }
        if !(noise_sd.is_finite() && noise_sd >= T::zero()) {
            return Err(DjqeError::validation("noise sd must be finite and >= 0"));
        }
        Ok(Scenario { id, p, noise_sd })
    }

    /// The scenario's true Q-function.
    ///
    /// Requires `a` in `[0,1]` and at least `min_features` entries in `x`.
    pub fn q_true(&self, x: &[T], a: T) -> T {
        assert!(
            x.len() >= self.id.min_features(),
            "feature vector shorter than the scenario requires"
        );
        let half = T::of(0.5);
        match self.id {
            ScenarioId::S1 => {
                if a < T::of(0.35) {
                    T::one() + x[0]
                } else if a < T::of(0.65) {
                    x[0] - x[1]
                } else {
                    T::one() - x[1]
                }
            }
            ScenarioId::S2 => {
                if a < T::of(0.25) {
                    T::one()
                } else if a < half {
                    (T::of(2.0 * std::f64::consts::PI) * x[0]).sin()
                } else if a < T::of(0.75) {
                    let d = x[0] - T::of(0.75);
                    half - T::of(8.0) * d * d
                } else {
                    half
                }
            }
            ScenarioId::S3 | ScenarioId::Toy => {
                let bump = (a * a - T::of(0.25)).max(T::zero());
                T::of(10.0) * bump * (x[0] + T::of(2.0)).ln()
            }
            ScenarioId::S4 => {
                let linear = T::of(0.2)
                    * (T::of(8.0) + T::of(4.0) * x[0] - T::of(2.0) * x[1] - T::of(2.0) * x[2]);
                let gap = T::one() + half * x[0] + half * x[1] - T::of(2.0) * a;
                linear - T::of(2.0) * gap * gap
            }
        }
    }

    /// Seeded draw of `n` logged samples: features per the scenario's
    /// law, actions `Unif[0,1]`, rewards `Q(X,A) + noise_sd * N(0,1)`.
    pub fn gen_data(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        if n == 0 {
            return Err(DjqeError::validation("dataset must contain at least one row"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[stream::DATA_GEN]));
        let (f_lo, f_hi) = self.feature_range();
        let mut features = Vec::with_capacity(n * self.p);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let row_start = features.len();
            for _ in 0..self.p {
                features.push(T::of(rng.gen_range(f_lo..f_hi)));
            }
            let a = T::of(rng.gen_range(0.0..1.0));
            let q = self.q_true(&features[row_start..], a);
            let noise: f64 = rng.sample(StandardNormal);
            actions.push(a);
            rewards.push(q + self.noise_sd * T::of(noise));
        }
        Dataset::new(features, self.p, actions, rewards)
    }

    fn feature_range(&self) -> (f64, f64) {
        match self.id {
            ScenarioId::Toy => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    /// Closed-form argmax of `q_true(x, .)` over `[0, 1]`.
    pub fn optimal_action(&self, x: &[T]) -> T {
        match self.id {
            ScenarioId::S1 => {
                // piece values: 1+x1 on [0,0.35), x1-x2 on [0.35,0.65),
                // 1-x2 on [0.65,1]; the middle piece never strictly wins,
                // and 1+x1 >= 1-x2 iff x1 + x2 >= 0. Return the winning
                // piece's midaction.
                let (v1, v2, v3) = (T::one() + x[0], x[0] - x[1], T::one() - x[1]);
                let best = v1.max(v2).max(v3);
                if v1 == best {
                    T::of(0.175)
                } else if v2 == best {
                    T::of(0.5)
                } else {
                    T::of(0.825)
                }
            }
            // any action below 0.25 attains the global maximum of 1
            ScenarioId::S2 => T::of(0.1),
            // Q is zero up to a = 0.5 and increasing in a beyond it
            ScenarioId::S3 | ScenarioId::Toy => T::one(),
            // vertex of the concave quadratic, always inside [0, 1]
            ScenarioId::S4 => (T::one() + T::of(0.5) * x[0] + T::of(0.5) * x[1]) / T::of(2.0),
        }
    }

    /// The optimal policy as a named built-in.
    pub fn optimal_policy(&self) -> Policy<T> {
        match self.id {
            ScenarioId::S1 => Policy::OptimalS1,
            ScenarioId::S2 => Policy::OptimalS2,
            ScenarioId::S3 => Policy::OptimalS3,
            ScenarioId::S4 => Policy::OptimalS4,
            ScenarioId::Toy => Policy::OptimalToy,
        }
    }

    /// Monte Carlo estimate of the optimal value `E max_a Q(X, a)`.
    pub fn oracle_value(&self, mc_samples: usize, seed: u64) -> Result<T> {
        if mc_samples < 10_000 {
            return Err(DjqeError::validation("oracle_value needs >= 10^4 samples"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[stream::ORACLE_MC]));
        let (f_lo, f_hi) = self.feature_range();
        let mut x = vec![T::zero(); self.p];
        let mut total = T::zero();
        for _ in 0..mc_samples {
            for xi in x.iter_mut() {
                *xi = T::of(rng.gen_range(f_lo..f_hi));
            }
            total += self.q_true(&x, self.optimal_action(&x));
        }
        Ok(total / T::of_usize(mc_samples))
    }

    /// Analytic optimal value.
    pub fn closed_form_value(&self) -> T {
        match self.id {
            // 1 + E max(X1, -X2) for two iid Unif[-1,1]
            ScenarioId::S1 => T::of(4.0 / 3.0),
            ScenarioId::S2 => T::one(),
            // 7.5 * E log(X1 + 2), X1 ~ Unif[-1,1]
            ScenarioId::S3 => T::of(7.5 * (1.5 * 3f64.ln() - 1.0)),
            // the squared term vanishes at the vertex
            ScenarioId::S4 => T::of(1.6),
            // 7.5 * E log(X + 2), X ~ Unif[0,1]
            ScenarioId::Toy => T::of(7.5 * (3.0 * 3f64.ln() - 2.0 * 2f64.ln() - 1.0)),
        }
    }

    /// The policy benchmarks evaluate: the optimal policy for S1-S4, and
    /// the identity map `pi(x) = x` for the toy scenario.
    pub fn target_policy(&self) -> Policy<T> {
        match self.id {
            ScenarioId::Toy => Policy::ToyIdentity,
            _ => self.optimal_policy(),
        }
    }

    /// True value of [`Self::target_policy`], in closed form.
    pub fn target_value(&self) -> T {
        match self.id {
            // 10 * int_{1/2}^{1} (x^2 - 1/4) ln(x + 2) dx
            ScenarioId::Toy => T::of(
                10.0 * (2.25 * 3f64.ln() - 25.0 / 12.0 * 2.5f64.ln() - 7.0 / 18.0),
            ),
            _ => self.closed_form_value(),
        }
    }
}

/// Evaluate a policy on every dataset row, producing the target action
/// column. Built-in scenario policies read only the features they need;
/// tabulated policies must match the dataset length.
pub fn policy_actions<T: Scalar>(policy: &Policy<T>, dataset: &Dataset<T>) -> Result<Vec<T>> {
    let n = dataset.len();
    if let Policy::Tabulated(actions) = policy {
        if actions.len() != n {
            return Err(DjqeError::DimensionMismatch {
                expected: n,
                got: actions.len(),
            });
        }
        return Ok(actions.clone());
    }
    let p = dataset.feature_dim();
    let scenario_for = |id: ScenarioId| -> Result<Scenario<T>> { Scenario::noiseless(id, p) };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = dataset.row(i);
        let a = match policy {
            Policy::OptimalS1 => scenario_for(ScenarioId::S1)?.optimal_action(x),
            Policy::OptimalS2 => scenario_for(ScenarioId::S2)?.optimal_action(x),
            Policy::OptimalS3 => scenario_for(ScenarioId::S3)?.optimal_action(x),
            Policy::OptimalS4 => scenario_for(ScenarioId::S4)?.optimal_action(x),
            Policy::OptimalToy => scenario_for(ScenarioId::Toy)?.optimal_action(x),
            Policy::ToyIdentity => x[0].max(T::zero()).min(T::one()),
            Policy::Constant(a) => *a,
            Policy::Tabulated(_) => unreachable!("handled above"),
        };
        if !(a >= T::zero() && a <= T::one()) {
            return Err(DjqeError::validation("policy produced an action outside [0, 1]"));
        }
        out.push(a);
    }
    Ok(out)
}

// ── Benchmark harness ───────────────────────────────────────────────────

/// Estimators the benchmark harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Djqe,
    KernelDr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Djqe => "djqe",
            Method::KernelDr => "kernel-dr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = DjqeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "djqe" => Ok(Method::Djqe),
            "kernel-dr" => Ok(Method::KernelDr),
            other => Err(DjqeError::Validation(format!(
                "unknown method {other:?}; expected djqe or kernel-dr"
            ))),
        }
    }
}

/// Aggregated replication results for one (scenario, n, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow<T> {
    pub scenario: ScenarioId,
    pub n: usize,
    pub method: Method,
    pub bias: T,
    pub sd: T,
    pub mse: T,
    pub reps: usize,
    pub seed: u64,
}

fn summarize<T: Scalar>(estimates: &[T], truth: T) -> (T, T, T) {
    let reps = estimates.len();
    let nf = T::of_usize(reps);
    let mean = estimates.iter().copied().sum::<T>() / nf;
    let bias = mean - truth;
    let sd = if reps < 2 {
        T::zero()
    } else {
        let ss = estimates
            .iter()
            .map(|e| (*e - mean) * (*e - mean))
            .sum::<T>();
        (ss / (nf - T::one())).sqrt()
    };
    let mse = estimates
        .iter()
        .map(|e| (*e - truth) * (*e - truth))
        .sum::<T>()
        / nf;
    (bias, sd, mse)
}

/// Run `reps` replications of each requested method on fresh data from the
/// scenario and aggregate bias, replication sd, and MSE against the
/// scenario's closed-form target value.
///
/// Each replication draws its dataset (and all model fits) from a seed
/// derived from `config.seed` and the replication index, so results are
/// independent of execution order. For the kernel baseline the full
/// bandwidth grid is evaluated in every replication and the report keeps
/// the grid entry with the smallest MSE against the oracle.
pub fn run_benchmark<T: Scalar>(
    scenario: &Scenario<T>,
    n: usize,
    reps: usize,
    methods: &[Method],
    kernel: KernelKind,
    config: &EvalConfig<T>,
) -> Result<Vec<BenchmarkRow<T>>> {
    if reps == 0 {
        return Err(DjqeError::validation("reps must be >= 1"));
    }
    if methods.is_empty() {
        return Err(DjqeError::validation("no methods requested"));
    }
    config.validate()?;
    let policy = scenario.target_policy();
    let truth = scenario.target_value();
    let want_djqe = methods.contains(&Method::Djqe);
    let want_kernel = methods.contains(&Method::KernelDr);

    struct RepResult<T> {
        djqe: Option<T>,
        kernel: Option<Vec<T>>,
    }

    let per_rep: Vec<RepResult<T>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<RepResult<T>> {
            let rep_seed = seeding::derive(config.seed, &[stream::REPLICATION, rep as u64]);
            let ds = scenario.gen_data(n, rep_seed)?;
            let djqe = if want_djqe {
                let mut rep_config = config.clone();
                rep_config.seed = rep_seed;
                Some(estimator::djqe_evaluate(&ds, &policy, &rep_config)?.value)
            } else {
                None
            };
            let kernel_ests = if want_kernel {
                let qhat = kernel::fit_kernel_outcome(&ds, &config.mlp, rep_seed)?;
                let grid = kernel::bandwidth_grid(&ds)?;
                let mut ests = Vec::with_capacity(grid.len());
                for h in grid {
                    let spec = KernelSpec::new(kernel, h)?;
                    // synthetic behavior actions are Unif[0,1]: density 1
                    ests.push(kernel::kernel_dr_value(
                        &ds,
                        &policy,
                        &qhat,
                        |_, _| T::one(),
                        &spec,
                    )?);
                }
                Some(ests)
            } else {
                None
            };
            Ok(RepResult {
                djqe,
                kernel: kernel_ests,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for method in methods {
        match method {
            Method::Djqe => {
                let estimates: Vec<T> = per_rep.iter().map(|r| r.djqe.unwrap()).collect();
                let (bias, sd, mse) = summarize(&estimates, truth);
                rows.push(BenchmarkRow {
                    scenario: scenario.id,
                    n,
                    method: Method::Djqe,
                    bias,
                    sd,
                    mse,
                    reps,
                    seed: config.seed,
                });
            }
            Method::KernelDr => {
                let grid_len = per_rep[0].kernel.as_ref().unwrap().len();
                let mut best: Option<(T, T, T)> = None;
                for g in 0..grid_len {
                    let estimates: Vec<T> = per_rep
                        .iter()
                        .map(|r| r.kernel.as_ref().unwrap()[g])
                        .collect();
                    let stats = summarize(&estimates, truth);
                    if best.is_none() || stats.2 < best.unwrap().2 {
                        best = Some(stats);
                    }
                }
                let (bias, sd, mse) = best.expect("non-empty bandwidth grid");
                rows.push(BenchmarkRow {
                    scenario: scenario.id,
                    n,
                    method: Method::KernelDr,
                    bias,
                    sd,
                    mse,
                    reps,
                    seed: config.seed,
                });
            }
        }
    }
    Ok(rows)
}

// ── Value decomposition ─────────────────────────────────────────────────

/// Masked split of the cross-fitted value: `v1` collects summands whose
/// target action lies in `[0, 0.5]`, `v2` the rest. They sum to the full
/// estimate exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueDecomposition<T> {
    pub v1: T,
    pub v2: T,
}

pub fn toy_decomposition<T: Scalar>(
    dataset: &Dataset<T>,
    policy: &Policy<T>,
    fit: &DjqeFit<T>,
    variant: EstimatorVariant,
) -> Result<ValueDecomposition<T>> {
    let pi = policy_actions(policy, dataset)?;
    let mut v1 = T::zero();
    let mut v2 = T::zero();
    for (l, fold) in fit.folds.iter().enumerate() {
        for &i in fit.plan.fold(l) {
            let s = estimator::dr_row_summand(dataset, i, fold, pi[i], variant)?;
            if pi[i] <= T::of(0.5) {
                v1 += s;
            } else {
                v2 += s;
            }
        }
    }
    let nf = T::of_usize(dataset.len());
    Ok(ValueDecomposition {
        v1: v1 / nf,
        v2: v2 / nf,
    })
}

// ── Calibration ─────────────────────────────────────────────────────────

/// Argmax grid resolution for calibrated optimal policies.
pub const CALIBRATION_ARGMAX_GRID: usize = 1000;

/// A reward simulator calibrated to a real dataset: resamples empirical
/// `(x, a)` pairs and draws rewards from `Normal(Q̂(x,a), σ̂²)`.
#[derive(Debug, Clone)]
pub struct CalibratedSimulator<T> {
    features: Vec<T>,
    p: usize,
    actions: Vec<T>,
    qhat: FittedModel<T>,
    sigma_hat: T,
    action_scale: ActionScale<T>,
}

impl<T: Scalar> CalibratedSimulator<T> {
    pub fn qhat(&self) -> &FittedModel<T> {
        &self.qhat
    }

    pub fn sigma_hat(&self) -> T {
        self.sigma_hat
    }

    pub fn source_len(&self) -> usize {
        self.actions.len()
    }

    /// Action normalization carried over from the source dataset.
    pub fn action_scale(&self) -> ActionScale<T> {
        self.action_scale
    }

    /// Fitted mean reward at `(x, a)`, with `a` in normalized units.
    pub fn predict_q(&self, x: &[T], a: T) -> Result<T> {
        let mut joint = Vec::with_capacity(self.p + 1);
        joint.extend_from_slice(x);
        joint.push(a);
        self.qhat.predict(&joint)
    }

    /// Draw `n` rows: each resamples one empirical `(x, a)` pair uniformly
    /// with replacement and attaches a fresh normal reward.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        if n == 0 {
            return Err(DjqeError::validation("cannot simulate an empty dataset"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[stream::CALIBRATION]));
        let src = self.actions.len();
        let mut features = Vec::with_capacity(n * self.p);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let j = rng.gen_range(0..src);
            let x = &self.features[j * self.p..(j + 1) * self.p];
            features.extend_from_slice(x);
            actions.push(self.actions[j]);
            let q = self.predict_q(x, self.actions[j])?;
            let z: f64 = rng.sample(StandardNormal);
            rewards.push(q + self.sigma_hat * T::of(z));
        }
        Dataset::new(features, self.p, actions, rewards)
    }

    /// Grid argmax of the fitted Q̂ over `a ∈ {j/G : j = 0..G}`; ties keep
    /// the smallest action.
    pub fn optimal_action(&self, x: &[T]) -> Result<T> {
        let g = CALIBRATION_ARGMAX_GRID;
        let mut best_a = T::zero();
        let mut best_q = T::neg_infinity();
        let mut joint = Vec::with_capacity(self.p + 1);
        joint.extend_from_slice(x);
        joint.push(T::zero());
        for j in 0..=g {
            let a = T::of_usize(j) / T::of_usize(g);
            joint[self.p] = a;
            let q = self.qhat.predict(&joint)?;
            if q > best_q {
                best_q = q;
                best_a = a;
            }
        }
        Ok(best_a)
    }

    /// The calibrated optimal policy evaluated on every row of a dataset.
    pub fn pi_star_column(&self, dataset: &Dataset<T>) -> Result<Vec<T>> {
        if dataset.feature_dim() != self.p {
            return Err(DjqeError::DimensionMismatch {
                expected: self.p,
                got: dataset.feature_dim(),
            });
        }
        (0..dataset.len())
            .map(|i| self.optimal_action(dataset.row(i)))
            .collect()
    }
}

/// Fit the calibration model on the full dataset: Q̂ over the joint
/// `(x, a)` input plus the residual standard deviation σ̂.
pub fn calibrate<T: Scalar>(
    dataset: &Dataset<T>,
    spec: &MlpSpec<T>,
    seed: u64,
) -> Result<CalibratedSimulator<T>> {
    let joint = dataset.features_with_action();
    let p = dataset.feature_dim();
    let mask = vec![true; dataset.len()];
    let qhat = regressor::fit(
        &joint,
        p + 1,
        dataset.rewards(),
        &mask,
        spec,
        seeding::derive(seed, &[stream::CALIBRATION]),
    )?;

    let n = dataset.len();
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let row = &joint[i * (p + 1)..(i + 1) * (p + 1)];
        residuals.push(dataset.reward(i) - qhat.predict(row)?);
    }
    let nf = T::of_usize(n);
    let mean = residuals.iter().copied().sum::<T>() / nf;
    let sigma_hat = if n < 2 {
        T::zero()
    } else {
        let ss = residuals.iter().map(|r| (*r - mean) * (*r - mean)).sum::<T>();
        (ss / (nf - T::one())).sqrt()
    };

    Ok(CalibratedSimulator {
        features: dataset.features().to_vec(),
        p,
        actions: dataset.actions().to_vec(),
        qhat,
        sigma_hat,
        action_scale: dataset.action_scale(),
    })
}
