use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;

/// One fully connected layer, `z = W x + b` with `W` stored out x in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multilayer perceptron with ReLU after every layer except the last.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Dense>,
    #[serde(skip)]
    version: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations cached by [`MlpParams::forward`]; `inputs[l]` is the input of
/// layer `l`, so `inputs[l + 1]` doubles as the ReLU mask of layer `l`.
#[derive(Clone, Debug)]
pub struct MlpTape {
    inputs: Vec<Array2<f64>>,
    version: u64,
}

impl MlpTape {
    pub fn rows(&self) -> usize {
        self.inputs[0].nrows()
    }
}

impl MlpParams {
    /// Zero-initialized network with the given layer widths, input first.
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, version: 0 }
    }

    /// Uniform Glorot initialization, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weight.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-a..a));
        }
        net
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::contract("an MLP needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(NeuralError::DimensionMismatch {
                    context: format!("layer {} -> {}", k, k + 1),
                    expected: pair[0].output_width(),
                    actual: pair[1].input_width(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_width() {
                return Err(NeuralError::DimensionMismatch {
                    context: "bias".into(),
                    expected: l.output_width(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].input_width()];
        w.extend(self.layers.iter().map(Dense::output_width));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output_width()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>() + l.bias.iter().map(|b| b * b).sum::<f64>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Appends weights then bias of every layer, in order.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
    }

    /// Inverse of [`flatten_into`](Self::flatten_into); returns the number of values consumed.
    pub fn assign_from(&mut self, flat: &[f64]) -> usize {
        self.version += 1;
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[k];
                k += 1;
            }
        }
        k
    }

    /// Names of each flattened block with its length, e.g. `("0.weight", 1792)`.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("{k}.weight"), l.weight.len()));
            out.push((format!("{k}.bias"), l.bias.len()));
        }
        out
    }

    /// Zero-valued network of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.widths())
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpTape), NeuralError> {
        if input.ncols() != self.input_width() {
            return Err(NeuralError::DimensionMismatch {
                context: "mlp input".into(),
                expected: self.input_width(),
                actual: input.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Array2::zeros((x.nrows(), layer.output_width()));
            z.assign(&layer.bias.broadcast((x.nrows(), layer.output_width())).unwrap());
            general_mat_mul(1.0, &x, &layer.weight.t(), 1.0, &mut z);
            if k != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(x);
            x = z;
        }
        Ok((
            x,
            MlpTape {
                inputs,
                version: self.version,
            },
        ))
    }

    /// Single-vector convenience wrapper around [`forward`](Self::forward).
    pub fn forward_vec(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NeuralError::contract(e.to_string()))?;
        let (out, _) = self.forward(view)?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. Parameter gradients are accumulated into `grads`; the
    /// gradient with respect to the input rows is returned.
    pub fn backward(
        &self,
        tape: &MlpTape,
        output_grad: ArrayView2<'_, f64>,
        grads: &mut MlpParams,
    ) -> Result<Array2<f64>, NeuralError> {
        if tape.version != self.version || tape.inputs.len() != self.layers.len() {
            return Err(NeuralError::StaleTape);
        }
        if output_grad.dim() != (tape.rows(), self.output_width()) {
            return Err(NeuralError::DimensionMismatch {
                context: "mlp output gradient".into(),
                expected: self.output_width(),
                actual: output_grad.ncols(),
            });
        }
        if grads.widths() != self.widths() {
            return Err(NeuralError::contract("gradient accumulator has a different shape"));
        }
        let last = self.layers.len() - 1;
        let mut d = output_grad.to_owned();
        for k in (0..self.layers.len()).rev() {
            if k != last {
                let activated = &tape.inputs[k + 1];
                ndarray::Zip::from(&mut d)
                    .and(activated)
                    .for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0
                        }
                    });
            }
            let x = &tape.inputs[k];
            let g = &mut grads.layers[k];
            general_mat_mul(1.0, &d.t(), x, 1.0, &mut g.weight);
            g.bias += &d.sum_axis(Axis(0));
            let layer = &self.layers[k];
            let mut dx = Array2::zeros((d.nrows(), layer.input_width()));
            general_mat_mul(1.0, &d, &layer.weight, 0.0, &mut dx);
            d = dx;
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_bias() {
        let mut net = MlpParams::zeros(&[3, 4, 2]);
        net.layers_mut()[1].bias = array![0.5, -2.0];
        let out = net.forward_vec(&[1.0, -7.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.5, -2.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = MlpParams::zeros(&[3, 3]);
        net.layers_mut()[0].weight = Array2::eye(3);
        assert_eq!(net.forward_vec(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn two_layer_hand_computed() {
        // h = relu([[1, -1], [2, 0.5]] x + [0, -1]) ; y = [[1, 2]] h + 0.5
        let net = MlpParams::from_layers(vec![
            Dense {
                weight: array![[1.0, -1.0], [2.0, 0.5]],
                bias: array![0.0, -1.0],
            },
            Dense {
                weight: array![[1.0, 2.0]],
                bias: array![0.5],
            },
        ])
        .unwrap();
        // x = (1, 3): pre = (-2, 2.5) -> relu (0, 2.5) -> y = 5.5
        assert_eq!(net.forward_vec(&[1.0, 3.0]).unwrap(), vec![5.5]);
        // x = (2, 1): pre = (1, 3.5) -> y = 1 + 7 + 0.5
        assert_eq!(net.forward_vec(&[2.0, 1.0]).unwrap(), vec![8.5]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = MlpParams::zeros(&[3, 2]);
        assert!(matches!(
            net.forward_vec(&[1.0, 2.0]),
            Err(NeuralError::DimensionMismatch { expected: 3, actual: 2, .. })
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::glorot(&[4, 8, 3], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64) - 0.3 * j as f64);
        let (_, tape) = net.forward(x.view()).unwrap();
        let mut grads = net.zeros_like();
        let dx = net.backward(&tape, Array2::zeros((5, 3)).view(), &mut grads).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert_eq!(grads.squared_norm(), 0.0);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::glorot(&[3, 2], &mut rng);
        let x = array![[0.5, -1.0, 2.0]];
        let g = array![[1.5, -0.25]];
        let (_, tape) = net.forward(x.view()).unwrap();
        let mut grads = net.zeros_like();
        let dx = net.backward(&tape, g.view(), &mut grads).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(grads.layers()[0].weight[[i, j]], g[[0, i]] * x[[0, j]]);
            }
            assert_eq!(grads.layers()[0].bias[i], g[[0, i]]);
        }
        let expected_dx = g.dot(&net.layers()[0].weight);
        assert_eq!(dx, expected_dx);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = MlpParams::zeros(&[2, 2]);
        let (_, tape) = net.forward(array![[1.0, 2.0]].view()).unwrap();
        net.layers_mut()[0].bias[0] = 1.0;
        let mut grads = net.zeros_like();
        assert!(matches!(
            net.backward(&tape, array![[1.0, 1.0]].view(), &mut grads),
            Err(NeuralError::StaleTape)
        ));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpParams::glorot(&[5, 7, 2], &mut rng);
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        assert_eq!(flat.len(), net.num_params());
        let mut other = net.zeros_like();
        assert_eq!(other.assign_from(&flat), flat.len());
        assert_eq!(other, net);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpParams::glorot(&[14, 128, 64], &mut rng);
        let a = (6.0f64 / (14.0 + 128.0)).sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= a));
        assert!(net.layers()[0].bias.iter().all(|&b| b == 0.0));
    }
}
