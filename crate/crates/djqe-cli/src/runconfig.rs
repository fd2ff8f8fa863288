//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line flags, highest layer winning per field.

use std::path::Path;

use serde::Deserialize;

use djqe::{DjqeError, EvalConfigF64, GammaSpec, Result};

use crate::args::SharedEvalArgs;

/// Optional TOML file mirroring the shared evaluation flags. Unknown keys
/// are rejected so typos fail loudly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub partitioner: Option<String>,
    pub estimator_variant: Option<String>,
    pub clip_eps: Option<f64>,
    pub mlp_depth: Option<usize>,
    pub mlp_width: Option<usize>,
    pub mlp_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub kernel: Option<String>,
    pub jobs: Option<usize>,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| DjqeError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text)
        .map_err(|e| DjqeError::Validation(format!("config {}: {e}", path.display())))
}

/// Resolved settings beyond `EvalConfig`: thread count and baseline kernel.
#[derive(Debug, Clone)]
pub struct Extras {
    pub jobs: Option<usize>,
    pub kernel: Option<String>,
}

/// Merge defaults, file values, and flags into a validated `EvalConfig`.
pub fn resolve(shared: &SharedEvalArgs, file: &FileConfig) -> Result<(EvalConfigF64, Extras)> {
    if file.gamma.is_some() && file.gamma_grid.is_some() {
        return Err(DjqeError::validation(
            "config sets both gamma and gamma_grid; choose one",
        ));
    }

    let mut config = EvalConfigF64::default();
    config.m = shared.m.or(file.m);
    config.gamma = if let Some(g) = shared.gamma {
        GammaSpec::Fixed(g)
    } else if let Some(grid) = &shared.gamma_grid {
        GammaSpec::Grid(grid.clone())
    } else if let Some(g) = file.gamma {
        GammaSpec::Fixed(g)
    } else if let Some(grid) = &file.gamma_grid {
        GammaSpec::Grid(grid.clone())
    } else {
        GammaSpec::Default
    };
    if let Some(folds) = shared.folds.or(file.folds) {
        config.folds = folds;
    }
    if let Some(seed) = shared.seed.or(file.seed) {
        config.seed = seed;
    }
    if let Some(s) = shared.partitioner.as_deref().or(file.partitioner.as_deref()) {
        config.partitioner = s.parse()?;
    }
    if let Some(s) = shared
        .estimator_variant
        .as_deref()
        .or(file.estimator_variant.as_deref())
    {
        config.estimator_variant = s.parse()?;
    }
    if let Some(eps) = shared.clip_eps.or(file.clip_eps) {
        config.propensity_clip = eps;
    }
    if let Some(depth) = shared.mlp_depth.or(file.mlp_depth) {
        config.mlp.hidden_layers = depth;
    }
    if let Some(width) = shared.mlp_width.or(file.mlp_width) {
        config.mlp.hidden_width = width;
    }
    if let Some(epochs) = file.mlp_epochs {
        config.mlp.epochs = epochs;
    }
    if let Some(lr) = file.learning_rate {
        config.mlp.learning_rate = lr;
    }
    config.validate()?;

    Ok((
        config,
        Extras {
            jobs: shared.jobs.or(file.jobs),
            kernel: file.kernel.clone(),
        },
    ))
}

/// Apply `--jobs`; silently keeps the existing pool if one was already
/// installed (rayon allows a single global pool per process).
pub fn init_threads(jobs: Option<usize>) {
    if let Some(j) = jobs {
        if j > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use djqe::PartitionerKind;

    #[test]
    fn flags_override_file_values() {
        let file = FileConfig {
            seed: Some(5),
            folds: Some(4),
            partitioner: Some("exact-dp".into()),
            gamma: Some(2.0),
            ..FileConfig::default()
        };
        let shared = SharedEvalArgs {
            seed: Some(9),
            gamma_grid: Some(vec![0.1, 1.0]),
            ..SharedEvalArgs::default()
        };
        let (config, _) = resolve(&shared, &file).unwrap();
        assert_eq!(config.seed, 9); // flag wins
        assert_eq!(config.folds, 4); // file fills the gap
        assert_eq!(config.partitioner, PartitionerKind::ExactDp);
        assert_eq!(config.gamma, GammaSpec::Grid(vec![0.1, 1.0])); // flag layer wins whole gamma choice
    }

    #[test]
    fn conflicting_file_gammas_are_rejected() {
        let file = FileConfig {
            gamma: Some(1.0),
            gamma_grid: Some(vec![1.0]),
            ..FileConfig::default()
        };
        assert!(resolve(&SharedEvalArgs::default(), &file).is_err());
    }

    #[test]
    fn invalid_merged_config_fails_validation() {
        let file = FileConfig {
            folds: Some(1),
            ..FileConfig::default()
        };
        assert!(resolve(&SharedEvalArgs::default(), &file).is_err());
    }
}
