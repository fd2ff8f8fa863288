//! Kernel-smoothed doubly-robust baseline: the indicator in the augmentation
//! term is replaced by a kernel weight around the target action, with a
//! plug-in outcome model over the joint `(x, a)` input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::MlpSpec;
use crate::dataset::{Dataset, Policy};
use crate::error::{DjqeError, Result};
use crate::regressor::{self, FittedModel};
use crate::scalar::Scalar;
use crate::seeding::{self, stream};
use crate::synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
    Boxcar,
}

impl KernelKind {
    /// Kernel weight at standardized offset `u`; each kernel integrates
    /// to one over its support.
    pub fn weight<T: Scalar>(self, u: T) -> T {
        match self {
            KernelKind::Gaussian => {
                let norm = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                norm * (-u * u / T::of(2.0)).exp()
            }
            KernelKind::Epanechnikov => {
                if u.abs() <= T::one() {
                    T::of(0.75) * (T::one() - u * u)
                } else {
                    T::zero()
                }
            }
            KernelKind::Boxcar => {
                if u.abs() <= T::one() {
                    T::of(0.5)
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Boxcar => "boxcar",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = DjqeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "boxcar" => Ok(KernelKind::Boxcar),
            other => Err(DjqeError::Validation(format!(
                "unknown kernel {other:?}; expected gaussian, epanechnikov, or boxcar"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    pub kernel: KernelKind,
    pub bandwidth: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(kernel: KernelKind, bandwidth: T) -> Result<Self> {
        let spec = KernelSpec { kernel, bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero()) || !self.bandwidth.is_finite() {
            return Err(DjqeError::validation("bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Fit the baseline outcome model: one regressor over the concatenated
/// `(x, a)` input against the rewards.
pub fn fit_kernel_outcome<T: Scalar>(
    dataset: &Dataset<T>,
    spec: &MlpSpec<T>,
    seed: u64,
) -> Result<FittedModel<T>> {
    let joint = dataset.features_with_action();
    let mask = vec![true; dataset.len()];
    regressor::fit(
        &joint,
        dataset.feature_dim() + 1,
        dataset.rewards(),
        &mask,
        spec,
        seeding::derive(seed, &[stream::KERNEL_FIT]),
    )
}

/// Kernel-smoothed doubly-robust value estimate:
///
/// `(1/n) Σᵢ [ q̂(Xᵢ, π(Xᵢ)) + K((Aᵢ−π(Xᵢ))/h) / (h·b̂(Aᵢ|Xᵢ)) · (Yᵢ − q̂(Xᵢ, Aᵢ)) ]`
///
/// `bhat_density` evaluates the behavior policy's conditional action
/// density and must be strictly positive on the sample.
pub fn kernel_dr_value<T, B>(
    dataset: &Dataset<T>,
    policy: &Policy<T>,
    qhat: &FittedModel<T>,
    bhat_density: B,
    spec: &KernelSpec<T>,
) -> Result<T>
where
    T: Scalar,
    B: Fn(&[T], T) -> T,
{
    spec.validate()?;
    let h = spec.bandwidth;
    let pi = synthetic::policy_actions(policy, dataset)?;
    let p = dataset.feature_dim();
    let mut joint = vec![T::zero(); p + 1];
    let mut sum = T::zero();
    for i in 0..dataset.len() {
        let x = dataset.row(i);
        let a = dataset.action(i);
        joint[..p].copy_from_slice(x);
        joint[p] = pi[i];
        let q_pi = qhat.predict(&joint)?;
        joint[p] = a;
        let q_a = qhat.predict(&joint)?;
        let b = bhat_density(x, a);
        if !(b > T::zero()) || !b.is_finite() {
            return Err(DjqeError::Validation(format!(
                "behavior density must be positive; got {b} at row {i}"
            )));
        }
        let w = spec.kernel.weight((a - pi[i]) / h) / (h * b);
        sum += q_pi + w * (dataset.reward(i) - q_a);
    }
    Ok(sum / T::of_usize(dataset.len()))
}

/// Bandwidth candidates `c·σ_A·n^{−0.2}` for `c ∈ {0.5, 0.75, 1.0, 1.5}`,
/// with `σ_A` the sample standard deviation of the observed actions.
pub fn bandwidth_grid<T: Scalar>(dataset: &Dataset<T>) -> Result<Vec<T>> {
    let n = dataset.len();
    if n < 2 {
        return Err(DjqeError::validation(
            "bandwidth grid needs at least two samples",
        ));
    }
    let nf = T::of_usize(n);
    let mean = dataset.actions().iter().copied().sum::<T>() / nf;
    let ss = dataset
        .actions()
        .iter()
        .map(|a| (*a - mean) * (*a - mean))
        .sum::<T>();
    let sd = (ss / (nf - T::one())).sqrt();
    if !(sd > T::zero()) {
        return Err(DjqeError::validation(
            "actions have zero variance; bandwidth grid is undefined",
        ));
    }
    let scale = sd * nf.powf(T::of(-0.2));
    Ok([0.5, 0.75, 1.0, 1.5]
        .iter()
        .map(|c| T::of(*c) * scale)
        .collect())
}

/// Carry a tuned bandwidth from sample size `n0` to `n`: `h*·(n0/n)^0.2`.
pub fn bandwidth_rescale<T: Scalar>(h_star: T, n0: usize, n: usize) -> T {
    h_star * (T::of_usize(n0) / T::of_usize(n)).powf(T::of(0.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let actions: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Dataset::new(features, p, actions, rewards).unwrap()
    }

    #[test]
    fn kernel_shapes() {
        assert_relative_eq!(
            KernelKind::Gaussian.weight(0.0),
            1.0 / (2.0 * std::f64::consts::PI).sqrt()
        );
        assert_relative_eq!(KernelKind::Epanechnikov.weight(0.0), 0.75);
        assert_relative_eq!(KernelKind::Epanechnikov.weight(1.0), 0.0);
        assert_eq!(KernelKind::Epanechnikov.weight(1.1), 0.0);
        assert_relative_eq!(KernelKind::Boxcar.weight(-0.99), 0.5);
        assert_eq!(KernelKind::Boxcar.weight(1.01), 0.0);
        // numeric integral of each kernel over its effective support
        for kind in [
            KernelKind::Gaussian,
            KernelKind::Epanechnikov,
            KernelKind::Boxcar,
        ] {
            let steps = 400_000;
            let lo = -8.0;
            let hi = 8.0;
            let du = (hi - lo) / steps as f64;
            let integral: f64 = (0..steps)
                .map(|k| kind.weight(lo + (k as f64 + 0.5) * du) * du)
                .sum();
            assert_relative_eq!(integral, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn boxcar_all_pass_recovers_sample_mean() {
        // pi ≡ 0.5 with h = 0.5 puts every standardized offset inside
        // [-1, 1], so the weight is 0.5/(0.5·1) = 1 for every row
        let ds = random_dataset(64, 2, 1);
        let spec = KernelSpec::new(KernelKind::Boxcar, 0.5).unwrap();
        let v = kernel_dr_value(
            &ds,
            &Policy::constant(0.5).unwrap(),
            &FittedModel::zero(),
            |_, _| 1.0,
            &spec,
        )
        .unwrap();
        let mean = ds.rewards().iter().sum::<f64>() / 64.0;
        assert_relative_eq!(v, mean, max_relative = 1e-12);
    }

    #[test]
    fn zero_residuals_are_bandwidth_invariant() {
        // constant rewards matched exactly by a constant outcome model
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = Dataset::new(
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            1,
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            vec![1.25; n],
        )
        .unwrap();
        let qhat = FittedModel::constant(1.25, 10.0);
        let policy = Policy::constant(0.3).unwrap();
        for kind in [
            KernelKind::Gaussian,
            KernelKind::Epanechnikov,
            KernelKind::Boxcar,
        ] {
            for &h in &bandwidth_grid(&ds).unwrap() {
                let spec = KernelSpec::new(kind, h).unwrap();
                let v = kernel_dr_value(&ds, &policy, &qhat, |_, _| 1.0, &spec).unwrap();
                assert_relative_eq!(v, 1.25, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matches_independent_sum() {
        let ds = random_dataset(40, 3, 9);
        let qhat = fit_kernel_outcome(&ds, &MlpSpec::default(), 7).unwrap();
        let policy = Policy::constant(0.25).unwrap();
        let h = 0.3;
        let spec = KernelSpec::new(KernelKind::Gaussian, h).unwrap();
        let v = kernel_dr_value(&ds, &policy, &qhat, |_, _| 1.0, &spec).unwrap();

        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut expected = 0.0;
        for i in 0..ds.len() {
            let mut xa: Vec<f64> = ds.row(i).to_vec();
            xa.push(0.25);
            let q_pi = qhat.predict(&xa).unwrap();
            xa[3] = ds.action(i);
            let q_a = qhat.predict(&xa).unwrap();
            let u = (ds.action(i) - 0.25) / h;
            let k = norm * (-0.5 * u * u).exp();
            expected += q_pi + k / h * (ds.reward(i) - q_a);
        }
        expected /= ds.len() as f64;
        assert_relative_eq!(v, expected, max_relative = 1e-12);
    }

    #[test]
    fn non_positive_density_is_rejected() {
        let ds = random_dataset(10, 1, 2);
        let spec = KernelSpec::new(KernelKind::Gaussian, 0.2).unwrap();
        let err = kernel_dr_value(
            &ds,
            &Policy::constant(0.5).unwrap(),
            &FittedModel::zero(),
            |_, _| 0.0,
            &spec,
        );
        assert!(matches!(err, Err(DjqeError::Validation(_))));
    }

    #[test]
    fn bandwidth_grid_arithmetic() {
        let ds = random_dataset(100, 1, 3);
        let grid = bandwidth_grid(&ds).unwrap();
        assert_eq!(grid.len(), 4);
        let mean = ds.actions().iter().sum::<f64>() / 100.0;
        let sd = (ds
            .actions()
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / 99.0)
            .sqrt();
        let n_factor = 100f64.powf(-0.2);
        for (h, c) in grid.iter().zip([0.5, 0.75, 1.0, 1.5]) {
            assert_relative_eq!(*h, c * sd * n_factor, max_relative = 1e-12);
        }
        // uniform actions put sigma near 1/sqrt(12)
        assert!((sd - 0.289).abs() < 0.03, "sd = {sd}");

        let constant =
            Dataset::new(vec![0.0; 5], 1, vec![0.4; 5], vec![0.0; 5]).unwrap();
        assert!(bandwidth_grid(&constant).is_err());
        let single = Dataset::new(vec![0.0], 1, vec![0.4], vec![0.0]).unwrap();
        assert!(bandwidth_grid(&single).is_err());
    }

    #[test]
    fn bandwidth_rescale_examples() {
        assert_relative_eq!(bandwidth_rescale(0.37, 120, 120), 0.37);
        assert_relative_eq!(
            bandwidth_rescale(1.0, 50, 300),
            (50.0f64 / 300.0).powf(0.2),
            max_relative = 1e-12
        );
        assert!((bandwidth_rescale(1.0f64, 50, 300) - 0.699).abs() < 1e-3);
        let mut last = f64::INFINITY;
        for n in [100, 400, 1600, 6400] {
            let h = bandwidth_rescale(0.8, 100, n);
            assert!(h < last || n == 100);
            last = h;
        }
    }

    #[test]
    fn smooth_kernels_vary_continuously_in_h() {
        let ds = random_dataset(30, 2, 11);
        let qhat = FittedModel::zero();
        let policy = Policy::constant(0.6).unwrap();
        let mut prev: Option<f64> = None;
        for k in 1..=60 {
            let h = 0.05 + 0.01 * k as f64;
            let spec = KernelSpec::new(KernelKind::Gaussian, h).unwrap();
            let v = kernel_dr_value(&ds, &policy, &qhat, |_, _| 1.0, &spec).unwrap();
            assert!(v.is_finite());
            if let Some(p) = prev {
                assert!((v - p).abs() < 2.0, "jump at h={h}: {p} -> {v}");
            }
            prev = Some(v);
        }
    }

    #[test]
    fn kernel_kind_round_trips() {
        for kind in [
            KernelKind::Gaussian,
            KernelKind::Epanechnikov,
            KernelKind::Boxcar,
        ] {
            assert_eq!(kind.as_str().parse::<KernelKind>().unwrap(), kind);
        }
        assert!("triangle".parse::<KernelKind>().is_err());
    }
}
