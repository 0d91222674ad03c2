use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Number of parameters to probe; all of them when larger than the vector.
    pub sample: usize,
    /// Entries where both gradients are smaller than this are reported but
    /// do not count towards the relative error.
    pub min_magnitude: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            sample: 64,
            min_magnitude: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index with the largest discrepancy.
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub below_magnitude: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` on a random
/// subsample of parameter indices.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], mut loss: F, tolerance: f64, opts: &GradCheckOptions) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut indices: Vec<usize> = if opts.sample >= params.len() {
        (0..params.len()).collect()
    } else {
        sample(&mut rng, params.len(), opts.sample).into_vec()
    };
    indices.sort_unstable();

    let mut probe = params.to_vec();
    let mut worst = (0.0f64, None);
    let mut below = 0;
    for &k in &indices {
        let original = probe[k];
        probe[k] = original + opts.step;
        let up = loss(&probe);
        probe[k] = original - opts.step;
        let down = loss(&probe);
        probe[k] = original;
        let numeric = (up - down) / (2.0 * opts.step);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs());
        if scale < opts.min_magnitude {
            below += 1;
            continue;
        }
        let rel = (a - numeric).abs() / scale;
        if rel > worst.0 || rel.is_nan() {
            worst = (if rel.is_nan() { f64::INFINITY } else { rel }, Some(k));
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: indices.len(),
        below_magnitude: below,
        tolerance,
        passed: worst.0 < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::MlpParams;
    use ndarray::Array2;

    #[test]
    fn least_squares_gradient_is_exact() {
        // L(w) = sum_k (a_k . w - y_k)^2, gradient 2 A^T (A w - y)
        let a = [[1.0, 2.0], [-0.5, 3.0], [2.0, -1.0]];
        let y = [1.0, -2.0, 0.5];
        let loss = |w: &[f64]| -> f64 {
            a.iter()
                .zip(&y)
                .map(|(row, yk)| (row[0] * w[0] + row[1] * w[1] - yk).powi(2))
                .sum()
        };
        let w = [0.3, -0.7];
        let mut g = [0.0; 2];
        for (row, yk) in a.iter().zip(&y) {
            let r = row[0] * w[0] + row[1] * w[1] - yk;
            g[0] += 2.0 * r * row[0];
            g[1] += 2.0 * r * row[1];
        }
        let report = grad_check(&w, &g, loss, 1e-8, &GradCheckOptions::default());
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 2);
    }

    #[test]
    fn mlp_backward_matches_differences_away_from_kinks() {
        // Biases push every hidden pre-activation at least 1e-3 from zero.
        let mut net = MlpParams::zeros(&[2, 3, 1]);
        {
            let layers = net.layers_mut();
            layers[0].weight = ndarray::array![[0.5, -0.25], [1.0, 0.75], [-0.5, 0.2]];
            layers[0].bias = ndarray::array![0.3, -0.4, 0.1];
            layers[1].weight = ndarray::array![[1.5, -2.0, 0.7]];
            layers[1].bias = ndarray::array![0.05];
        }
        let x = ndarray::array![[0.8, -0.6], [-0.2, 0.9]];
        let (out, tape) = net.forward(x.view()).unwrap();
        for pre in tape_preactivations(&net, &x) {
            assert!(pre.abs() > 1e-3, "probe too close to a kink: {pre}");
        }
        // L = 0.5 * sum(out^2)
        let mut grads = net.zeros_like();
        net.backward(&tape, out.view(), &mut grads).unwrap();
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);
        let template = net.clone();
        let loss = |p: &[f64]| {
            let mut n = template.clone();
            n.assign_from(p);
            let (o, _) = n.forward(x.view()).unwrap();
            0.5 * o.iter().map(|v| v * v).sum::<f64>()
        };
        let report = grad_check(&flat, &analytic, loss, 1e-6, &GradCheckOptions::default());
        assert!(report.passed, "{report:?}");
    }

    fn tape_preactivations(net: &MlpParams, x: &Array2<f64>) -> Vec<f64> {
        let l0 = &net.layers()[0];
        let z = x.dot(&l0.weight.t()) + &l0.bias;
        z.iter().copied().collect()
    }
}
