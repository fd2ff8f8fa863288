//! Feature-only regression for interval outcome and propensity models: a
//! small multilayer perceptron trained by seeded gradient descent on
//! squared loss, with a constant-mean fallback that guarantees the fit is
//! never worse than predicting the masked target mean.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::MlpSpec;
use crate::error::{DjqeError, Result};
use crate::scalar::Scalar;
use crate::seeding;

/// A fitted regression model. Predictions are always clamped to
/// `[-output_clamp, output_clamp]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel<T> {
    ConstantMean {
        value: T,
        output_clamp: T,
    },
    Mlp {
        input_dim: usize,
        /// Layer sizes from input to output, e.g. `[p, H, 1]`.
        dims: Vec<usize>,
        /// Row-major `out x in` weight matrices, one per layer.
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
        output_clamp: T,
    },
}

impl<T: Scalar> FittedModel<T> {
    pub fn constant(value: T, output_clamp: T) -> Self {
        FittedModel::ConstantMean {
            value,
            output_clamp,
        }
    }

    /// Constant model predicting 0, used for intervals with no samples.
    pub fn zero() -> Self {
        FittedModel::ConstantMean {
            value: T::zero(),
            output_clamp: T::one(),
        }
    }

    pub fn output_clamp(&self) -> T {
        match self {
            FittedModel::ConstantMean { output_clamp, .. } => *output_clamp,
            FittedModel::Mlp { output_clamp, .. } => *output_clamp,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, FittedModel::ConstantMean { .. })
    }

    /// Evaluate the model at one feature vector.
    pub fn predict(&self, x: &[T]) -> Result<T> {
        match self {
            FittedModel::ConstantMean {
                value,
                output_clamp,
            } => Ok(clamp(*value, *output_clamp)),
            FittedModel::Mlp {
                input_dim,
                dims,
                weights,
                biases,
                output_clamp,
            } => {
                if x.len() != *input_dim {
                    return Err(DjqeError::DimensionMismatch {
                        expected: *input_dim,
                        got: x.len(),
                    });
                }
                let mut cur: Vec<T> = x.to_vec();
                let mut next: Vec<T> = Vec::new();
                let last = weights.len() - 1;
                for (k, (w, b)) in weights.iter().zip(biases).enumerate() {
                    let (n_in, n_out) = (dims[k], dims[k + 1]);
                    next.clear();
                    for o in 0..n_out {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        let mut z = b[o];
                        for (wi, xi) in row.iter().zip(&cur) {
                            z += *wi * *xi;
                        }
                        // linear output layer, sigmoidal hidden layers
                        next.push(if k == last { z } else { z.tanh() });
                    }
                    std::mem::swap(&mut cur, &mut next);
                }
                Ok(clamp(cur[0], *output_clamp))
            }
        }
    }

    /// Mean squared residual over masked rows.
    pub fn masked_mse(&self, features: &[T], p: usize, targets: &[T], mask: &[bool]) -> Result<T> {
        let n_masked = mask.iter().filter(|m| **m).count();
        if n_masked == 0 {
            return Err(DjqeError::EmptyInterval);
        }
        let mut sum = T::zero();
        for (i, keep) in mask.iter().enumerate() {
            if !keep {
                continue;
            }
            let r = self.predict(&features[i * p..(i + 1) * p])? - targets[i];
            sum += r * r;
        }
        Ok(sum / T::of_usize(n_masked))
    }

    /// Self-describing JSON dump (kind, shapes, parameters) for debugging.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| DjqeError::Numerical(format!("model serialization failed: {e}")))
    }
}

fn clamp<T: Scalar>(v: T, bound: T) -> T {
    v.max(-bound).min(bound)
}

/// Fit a regression of `targets` on `features` over the rows where `mask`
/// is true, minimizing masked mean squared error.
///
/// Returns the trained MLP unless the constant-mean fit scores at least as
/// well on the same masked rows, in which case the constant fit is
/// returned. Identical `(inputs, spec, seed)` produce a bit-identical
/// model.
pub fn fit<T: Scalar>(
    features: &[T],
    p: usize,
    targets: &[T],
    mask: &[bool],
    spec: &MlpSpec<T>,
    seed: u64,
) -> Result<FittedModel<T>> {
    spec.validate()?;
    let n = targets.len();
    if mask.len() != n {
        return Err(DjqeError::DimensionMismatch {
            expected: n,
            got: mask.len(),
        });
    }
    if features.len() != n * p {
        return Err(DjqeError::DimensionMismatch {
            expected: n * p,
            got: features.len(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|i| mask[*i]).collect();
    if rows.is_empty() {
        return Err(DjqeError::EmptyInterval);
    }
    if rows.iter().any(|&i| !targets[i].is_finite()) {
        return Err(DjqeError::validation("targets contain non-finite values"));
    }

    let n_masked = T::of_usize(rows.len());
    let mean = rows.iter().map(|&i| targets[i]).sum::<T>() / n_masked;
    let var = rows
        .iter()
        .map(|&i| {
            let d = targets[i] - mean;
            d * d
        })
        .sum::<T>()
        / n_masked;
    let sd = var.sqrt();

    let clamp_bound = spec.output_clamp.unwrap_or_else(|| {
        let max_abs = rows
            .iter()
            .map(|&i| targets[i].abs())
            .fold(T::zero(), T::max);
        if max_abs > T::zero() {
            T::of(2.0) * max_abs
        } else {
            T::one()
        }
    });
    let constant = FittedModel::constant(mean, clamp_bound);

    // Degenerate targets: the mean is already the exact minimizer.
    if sd < T::of(1e-12) {
        return Ok(constant);
    }

    // Train on standardized targets, then fold the affine map back into
    // the output layer so the stored parameters predict in target units.
    let mut net = Net::init(p, spec, seeding::derive(seed, &[1]));
    let std_targets: Vec<T> = targets.iter().map(|t| (*t - mean) / sd).collect();

    let batch = spec.batch_size.filter(|b| *b < rows.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[2]));
    let mut order = rows.clone();
    let mut diverged = false;

    'train: for _ in 0..spec.epochs {
        match batch {
            None => {
                let loss = net.gd_step(features, &std_targets, &order, spec.learning_rate);
                if !loss.is_finite() {
                    diverged = true;
                    break 'train;
                }
            }
            Some(b) => {
                use rand::seq::SliceRandom;
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(b) {
                    let loss = net.gd_step(features, &std_targets, chunk, spec.learning_rate);
                    if !loss.is_finite() {
                        diverged = true;
                        break 'train;
                    }
                }
            }
        }
    }

    if diverged || !net.params_finite() {
        // The constant fit always exists for a non-empty mask, so the
        // divergence is absorbed rather than surfaced.
        return Ok(constant);
    }

    net.rescale_output(sd, mean);
    let mlp = net.into_model(clamp_bound);

    // Never worse than the constant fit on the training rows.
    let mlp_mse = mlp.masked_mse(features, p, targets, mask)?;
    let cm_mse = constant.masked_mse(features, p, targets, mask)?;
    if mlp_mse <= cm_mse {
        Ok(mlp)
    } else {
        Ok(constant)
    }
}

/// Plain MLP with tanh hidden layers and a scalar linear output.
struct Net<T> {
    dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    // training scratch, one slot per non-input layer
    acts: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
    grad_w: Vec<Vec<T>>,
    grad_b: Vec<Vec<T>>,
}

impl<T: Scalar> Net<T> {
    fn init(p: usize, spec: &MlpSpec<T>, seed: u64) -> Self {
        let mut dims = Vec::with_capacity(spec.hidden_layers + 2);
        dims.push(p);
        dims.extend(std::iter::repeat(spec.hidden_width).take(spec.hidden_layers));
        dims.push(1);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[k], dims[k + 1]);
            let bound = (n_in as f64).sqrt().recip();
            let w: Vec<T> = (0..n_in * n_out)
                .map(|_| T::of(rng.gen_range(-bound..bound)))
                .collect();
            weights.push(w);
            biases.push(vec![T::zero(); n_out]);
        }
        let acts: Vec<Vec<T>> = dims[1..].iter().map(|d| vec![T::zero(); *d]).collect();
        let deltas = acts.clone();
        let grad_w: Vec<Vec<T>> = weights.iter().map(|w| vec![T::zero(); w.len()]).collect();
        let grad_b: Vec<Vec<T>> = biases.iter().map(|b| vec![T::zero(); b.len()]).collect();
        Net {
            dims,
            weights,
            biases,
            acts,
            deltas,
            grad_w,
            grad_b,
        }
    }

    /// Accumulate squared-error loss and gradients over `rows`, then apply
    /// one gradient-descent update. Returns the mean loss before the step.
    fn gd_step(&mut self, features: &[T], targets: &[T], rows: &[usize], lr: T) -> T {
        let p = self.dims[0];
        let scale = T::of_usize(rows.len());
        for g in &mut self.grad_w {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        for g in &mut self.grad_b {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let mut loss = T::zero();
        for &i in rows {
            let x = &features[i * p..(i + 1) * p];
            self.forward(x);
            let err = self.acts[self.acts.len() - 1][0] - targets[i];
            loss += err * err;
            self.backward(x, T::of(2.0) * err / scale);
        }
        for ((w, gw), (b, gb)) in self
            .weights
            .iter_mut()
            .zip(&self.grad_w)
            .zip(self.biases.iter_mut().zip(&self.grad_b))
        {
            for (wi, gi) in w.iter_mut().zip(gw) {
                *wi -= lr * *gi;
            }
            for (bi, gi) in b.iter_mut().zip(gb) {
                *bi -= lr * *gi;
            }
        }
        loss / scale
    }

    fn forward(&mut self, x: &[T]) {
        let last = self.weights.len() - 1;
        for k in 0..self.weights.len() {
            let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
            // activations of layer k-1 are read while layer k is written
            let (prev, cur) = if k == 0 {
                (x, &mut self.acts[0])
            } else {
                let (done, rest) = self.acts.split_at_mut(k);
                (&done[k - 1][..], &mut rest[0])
            };
            let w = &self.weights[k];
            let b = &self.biases[k];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(prev) {
                    z += *wi * *xi;
                }
                cur[o] = if k == last { z } else { z.tanh() };
            }
        }
    }

    /// Backpropagate `dout = dL/d(output)` for the row whose input was `x`
    /// and whose activations are still in `self.acts`, accumulating into
    /// the gradient buffers.
    fn backward(&mut self, x: &[T], dout: T) {
        let layers = self.weights.len();
        self.deltas[layers - 1][0] = dout;
        for k in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
            // gradient for this layer's weights/biases
            for o in 0..n_out {
                let d = self.deltas[k][o];
                self.grad_b[k][o] += d;
                let grow = &mut self.grad_w[k][o * n_in..(o + 1) * n_in];
                if k == 0 {
                    for (g, xi) in grow.iter_mut().zip(x) {
                        *g += d * *xi;
                    }
                } else {
                    let prev = &self.acts[k - 1];
                    for (g, ai) in grow.iter_mut().zip(prev) {
                        *g += d * *ai;
                    }
                }
            }
            // delta for the layer below: (W^T d) * tanh'(z) with
            // tanh'(z) = 1 - a^2
            if k > 0 {
                let w = &self.weights[k];
                for j in 0..n_in {
                    let mut s = T::zero();
                    for o in 0..n_out {
                        s += w[o * n_in + j] * self.deltas[k][o];
                    }
                    let a = self.acts[k - 1][j];
                    self.deltas[k - 1][j] = s * (T::one() - a * a);
                }
            }
        }
    }

    fn params_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|p| p.is_finite()))
    }

    /// Fold the target destandardization `y = sd * y' + mean` into the
    /// linear output layer.
    fn rescale_output(&mut self, sd: T, mean: T) {
        let last = self.weights.len() - 1;
        for w in self.weights[last].iter_mut() {
            *w *= sd;
        }
        for b in self.biases[last].iter_mut() {
            *b = *b * sd + mean;
        }
    }

    fn into_model(self, output_clamp: T) -> FittedModel<T> {
        FittedModel::Mlp {
            input_dim: self.dims[0],
            dims: self.dims,
            weights: self.weights,
            biases: self.biases,
            output_clamp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_features(n: usize, p: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constant_targets_give_constant_model() {
        let n = 40;
        let features = uniform_features(n, 3, 7);
        let targets = vec![3.0; n];
        let mask = vec![true; n];
        let model = fit(&features, 3, &targets, &mask, &MlpSpec::default(), 0).unwrap();
        assert!(model.is_constant());
        let pred = model.predict(&[0.3, -0.2, 0.9]).unwrap();
        assert!((pred - 3.0).abs() < 1e-6);
    }

    #[test]
    fn all_false_mask_is_an_error() {
        let features = uniform_features(10, 2, 1);
        let targets = vec![1.0; 10];
        let mask = vec![false; 10];
        let err = fit(&features, 2, &targets, &mask, &MlpSpec::default(), 0).unwrap_err();
        assert!(matches!(err, DjqeError::EmptyInterval));
        let model = FittedModel::constant(0.0, 1.0);
        assert!(matches!(
            model.masked_mse(&features, 2, &targets, &mask),
            Err(DjqeError::EmptyInterval)
        ));
    }

    #[test]
    fn linear_target_beats_mse_bound() {
        // Oracle: ordinary least squares of y on x_1 solves this exactly
        // (slope 1, intercept 0, residual MSE 0); the MLP must come close.
        let n = 500;
        let p = 3;
        let features = uniform_features(n, p, 11);
        let targets: Vec<f64> = (0..n).map(|i| features[i * p]).collect();
        let mask = vec![true; n];

        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (x, y) = (features[i * p], targets[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let nf = n as f64;
        let slope = (sxy - sx * sy / nf) / (sxx - sx * sx / nf);
        let intercept = (sy - slope * sx) / nf;
        let ols_mse: f64 = (0..n)
            .map(|i| {
                let r = targets[i] - (intercept + slope * features[i * p]);
                r * r
            })
            .sum::<f64>()
            / nf;
        assert!(ols_mse < 1e-20);

        let model = fit(&features, p, &targets, &mask, &MlpSpec::default(), 5).unwrap();
        let mse = model.masked_mse(&features, p, &targets, &mask).unwrap();
        assert!(mse <= 0.01, "masked MSE {mse} exceeds 0.01");
        assert!(mse >= ols_mse);

        let pred = model.predict(&[0.5, 0.0, 0.0]).unwrap();
        assert!((pred - 0.5).abs() < 0.1, "predict(x1=0.5) = {pred}");
    }

    #[test]
    fn masked_mse_hand_examples() {
        // constant_mean on targets {0, 2}: deviations from 1 square to 1
        let features = vec![0.0, 0.0];
        let model = FittedModel::constant(1.0, 10.0);
        let mse = model
            .masked_mse(&features, 1, &[0.0, 2.0], &[true, true])
            .unwrap();
        assert_relative_eq!(mse, 1.0);

        // single masked row: the squared residual of that row
        let mse = model
            .masked_mse(&features, 1, &[4.0, 2.0], &[true, false])
            .unwrap();
        assert_relative_eq!(mse, 9.0);

        // perfect fit on constant targets
        let exact = FittedModel::constant(2.0, 10.0);
        let mse = exact
            .masked_mse(&features, 1, &[2.0, 2.0], &[true, true])
            .unwrap();
        assert_relative_eq!(mse, 0.0);
    }

    #[test]
    fn zero_network_predicts_zero() {
        let model = FittedModel::Mlp {
            input_dim: 2,
            dims: vec![2, 4, 1],
            weights: vec![vec![0.0; 8], vec![0.0; 4]],
            biases: vec![vec![0.0; 4], vec![0.0; 1]],
            output_clamp: 5.0,
        };
        assert_eq!(model.predict(&[0.7, -0.3]).unwrap(), 0.0);
        assert!(matches!(
            model.predict(&[0.7]),
            Err(DjqeError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let n = 120;
        let features = uniform_features(n, 2, 3);
        let targets: Vec<f64> = (0..n).map(|i| features[i * 2] * 2.0 + 0.5).collect();
        let mask = vec![true; n];
        let spec = MlpSpec::default();
        let a = fit(&features, 2, &targets, &mask, &spec, 42).unwrap();
        let b = fit(&features, 2, &targets, &mask, &spec, 42).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn predictions_respect_clamp() {
        let n = 100;
        let features = uniform_features(n, 2, 9);
        let targets: Vec<f64> = (0..n).map(|i| 3.0 * features[i * 2]).collect();
        let mask = vec![true; n];
        let spec = MlpSpec {
            output_clamp: Some(0.5),
            ..MlpSpec::default()
        };
        let model = fit(&features, 2, &targets, &mask, &spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            let pred = model.predict(&x).unwrap();
            assert!(pred.abs() <= 0.5, "prediction {pred} escaped the clamp");
        }
    }

    #[test]
    fn never_worse_than_constant_mean() {
        for seed in 0..6u64 {
            let n = 60;
            let features = uniform_features(n, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
            let model = fit(&features, 2, &targets, &mask, &MlpSpec::default(), seed).unwrap();
            let mean = {
                let kept: Vec<f64> = (0..n).filter(|i| mask[*i]).map(|i| targets[i]).collect();
                kept.iter().sum::<f64>() / kept.len() as f64
            };
            let cm = FittedModel::constant(mean, model.output_clamp());
            let cm_mse = cm.masked_mse(&features, 2, &targets, &mask).unwrap();
            let mse = model.masked_mse(&features, 2, &targets, &mask).unwrap();
            assert!(mse <= cm_mse + 1e-9, "seed {seed}: {mse} > {cm_mse}");
        }
    }

    #[test]
    fn minibatch_training_converges_too() {
        let n = 300;
        let features = uniform_features(n, 2, 21);
        let targets: Vec<f64> = (0..n).map(|i| features[i * 2]).collect();
        let mask = vec![true; n];
        let spec = MlpSpec {
            batch_size: Some(32),
            learning_rate: 0.05,
            epochs: 200,
            ..MlpSpec::default()
        };
        let model = fit(&features, 2, &targets, &mask, &spec, 2).unwrap();
        let mse = model.masked_mse(&features, 2, &targets, &mask).unwrap();
        assert!(mse < 0.05, "minibatch masked MSE {mse}");
    }

    #[test]
    fn divergent_learning_rate_falls_back_to_constant() {
        let n = 80;
        let features = uniform_features(n, 2, 4);
        let targets: Vec<f64> = (0..n).map(|i| features[i * 2]).collect();
        let mask = vec![true; n];
        let spec = MlpSpec {
            learning_rate: 1e6, // guaranteed blow-up
            ..MlpSpec::default()
        };
        let model = fit(&features, 2, &targets, &mask, &spec, 0).unwrap();
        assert!(model.is_constant());
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let p = 3;
        let spec = MlpSpec::<f64> {
            hidden_layers: 2,
            hidden_width: 4,
            ..MlpSpec::default()
        };
        let n = 7;
        let features = uniform_features(n, p, 17);
        let targets: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let rows: Vec<usize> = (0..n).collect();

        // analytic gradients from one accumulation pass (lr = 0 keeps the
        // parameters untouched so finite differences see the same point)
        let mut net = Net::init(p, &spec, 123);
        net.gd_step(&features, &targets, &rows, 0.0);

        let loss_at = |net: &mut Net<f64>| -> f64 {
            let mut total = 0.0;
            for &i in &rows {
                net.forward(&features[i * p..(i + 1) * p]);
                let err = net.acts[net.acts.len() - 1][0] - targets[i];
                total += err * err;
            }
            total / rows.len() as f64
        };

        let h = 1e-6;
        let mut checked = 0usize;
        for layer in 0..net.weights.len() {
            for idx in 0..net.weights[layer].len() {
                let orig = net.weights[layer][idx];
                net.weights[layer][idx] = orig + h;
                let up = loss_at(&mut net);
                net.weights[layer][idx] = orig - h;
                let down = loss_at(&mut net);
                net.weights[layer][idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = net.grad_w[layer][idx];
                assert!(
                    (numeric - analytic).abs() < 1e-5 * (1.0 + numeric.abs()),
                    "weight grad mismatch at layer {layer} idx {idx}: {numeric} vs {analytic}"
                );
                checked += 1;
            }
            for idx in 0..net.biases[layer].len() {
                let orig = net.biases[layer][idx];
                net.biases[layer][idx] = orig + h;
                let up = loss_at(&mut net);
                net.biases[layer][idx] = orig - h;
                let down = loss_at(&mut net);
                net.biases[layer][idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = net.grad_b[layer][idx];
                assert!(
                    (numeric - analytic).abs() < 1e-5 * (1.0 + numeric.abs()),
                    "bias grad mismatch at layer {layer} idx {idx}: {numeric} vs {analytic}"
                );
                checked += 1;
            }
        }
        assert!(checked > 30);
    }
}
