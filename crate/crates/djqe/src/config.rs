//! Run configuration: MLP hyperparameters, penalty selection, fold counts,
//! and the estimator/partitioner switches.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DjqeError, Result};
use crate::scalar::Scalar;

/// Hyperparameters for the from-scratch MLP regressor.
///
/// `output_clamp` bounds predictions to `[-M, M]`; `None` derives
/// `M = 2 * max|target|` from each training set (with a floor of 1 for
/// all-zero targets). `batch_size = None` trains full-batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec<T> {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: T,
    pub batch_size: Option<usize>,
    pub output_clamp: Option<T>,
}

impl<T: Scalar> Default for MlpSpec<T> {
    fn default() -> Self {
        MlpSpec {
            hidden_layers: 1,
            hidden_width: 16,
            epochs: 400,
            learning_rate: T::of(0.4),
            batch_size: None,
            output_clamp: None,
        }
    }
}

impl<T: Scalar> MlpSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 {
            return Err(DjqeError::validation("hidden_layers must be >= 1"));
        }
        if self.hidden_width < 1 {
            return Err(DjqeError::validation("hidden_width must be >= 1"));
        }
        if self.epochs < 1 {
            return Err(DjqeError::validation("epochs must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > T::zero()) {
            return Err(DjqeError::validation("learning_rate must be positive"));
        }
        if let Some(b) = self.batch_size {
            if b < 1 {
                return Err(DjqeError::validation("batch_size must be >= 1"));
            }
        }
        if let Some(m) = self.output_clamp {
            if !(m.is_finite() && m > T::zero()) {
                return Err(DjqeError::validation("output_clamp must be positive"));
            }
        }
        Ok(())
    }
}

/// Penalty specification: a fixed value, an explicit cross-validation grid,
/// or the default grid `{0.1, 0.2, 0.3, 0.4, 0.5} * n^0.4` resolved at
/// evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaSpec<T> {
    Default,
    Fixed(T),
    Grid(Vec<T>),
}

impl<T> Default for GammaSpec<T> {
    fn default() -> Self {
        GammaSpec::Default
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionerKind {
    Pelt,
    ExactDp,
}

impl PartitionerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionerKind::Pelt => "pelt",
            PartitionerKind::ExactDp => "exact-dp",
        }
    }
}

impl FromStr for PartitionerKind {
    type Err = DjqeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pelt" => Ok(PartitionerKind::Pelt),
            "exact-dp" | "exact_dp" => Ok(PartitionerKind::ExactDp),
            other => Err(DjqeError::Validation(format!(
                "unknown partitioner '{other}' (expected pelt or exact-dp)"
            ))),
        }
    }
}

/// Which doubly-robust summand to use. `StandardDr` indexes the plug-in
/// term by the target policy's interval; `PaperLiteral` indexes it by the
/// observed action's interval instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    StandardDr,
    PaperLiteral,
}

impl EstimatorVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorVariant::StandardDr => "standard-dr",
            EstimatorVariant::PaperLiteral => "paper-literal",
        }
    }
}

impl FromStr for EstimatorVariant {
    type Err = DjqeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard-dr" | "standard_dr" => Ok(EstimatorVariant::StandardDr),
            "paper-literal" | "paper_literal" => Ok(EstimatorVariant::PaperLiteral),
            other => Err(DjqeError::Validation(format!(
                "unknown estimator variant '{other}' (expected standard-dr or paper-literal)"
            ))),
        }
    }
}

/// Full evaluation configuration. `m = None` resolves to `ceil(n/10)`
/// (at least 2) from the dataset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig<T> {
    pub m: Option<usize>,
    pub gamma: GammaSpec<T>,
    pub folds: usize,
    pub mlp: MlpSpec<T>,
    pub seed: u64,
    pub propensity_clip: T,
    pub estimator_variant: EstimatorVariant,
    pub partitioner: PartitionerKind,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        EvalConfig {
            m: None,
            gamma: GammaSpec::Default,
            folds: 2,
            mlp: MlpSpec::default(),
            seed: 0,
            propensity_clip: T::of(0.05),
            estimator_variant: EstimatorVariant::StandardDr,
            partitioner: PartitionerKind::Pelt,
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(DjqeError::validation("folds must be >= 2"));
        }
        if let Some(m) = self.m {
            if m < 2 {
                return Err(DjqeError::validation("grid resolution m must be >= 2"));
            }
        }
        if !(self.propensity_clip > T::zero() && self.propensity_clip < T::of(0.5)) {
            return Err(DjqeError::validation("propensity_clip must lie in (0, 0.5)"));
        }
        match &self.gamma {
            GammaSpec::Default => {}
            GammaSpec::Fixed(g) => {
                if !(g.is_finite() && *g >= T::zero()) {
                    return Err(DjqeError::validation("gamma must be finite and >= 0"));
                }
            }
            GammaSpec::Grid(grid) => {
                if grid.is_empty() {
                    return Err(DjqeError::validation("gamma grid must be non-empty"));
                }
                if grid.iter().any(|g| !(g.is_finite() && *g >= T::zero())) {
                    return Err(DjqeError::validation(
                        "gamma grid entries must be finite and >= 0",
                    ));
                }
            }
        }
        self.mlp.validate()
    }

    /// Grid resolution for a dataset of size `n`.
    pub fn resolve_m(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| n.div_ceil(10).max(2))
    }

    /// Candidate penalties for a dataset of size `n`. A fixed gamma yields
    /// a single-entry grid.
    pub fn resolve_gamma_grid(&self, n: usize) -> Vec<T> {
        match &self.gamma {
            GammaSpec::Default => {
                let scale = T::of((n as f64).powf(0.4));
                [0.1, 0.2, 0.3, 0.4, 0.5]
                    .iter()
                    .map(|c| T::of(*c) * scale)
                    .collect()
            }
            GammaSpec::Fixed(g) => vec![*g],
            GammaSpec::Grid(grid) => grid.clone(),
        }
    }
}
