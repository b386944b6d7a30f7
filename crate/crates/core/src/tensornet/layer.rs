use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `a = act(x·Wᵀ + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} biases",
                weights.nrows(),
                biases.len()
            )));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn apply(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, layer expects {}",
                input.ncols(),
                self.in_dim()
            )));
        }
        let mut z = input.dot(&self.weights.t());
        z += &self.biases;
        self.activation.apply(&mut z);
        Ok(z)
    }
}

/// Xavier-uniform bound `√(6 / (in + out))`.
pub fn xavier_bound(in_dim: usize, out_dim: usize) -> f64 {
    (6.0 / (in_dim + out_dim) as f64).sqrt()
}

/// Draws weights uniformly in `±√(6/(in+out))`; biases start at zero.
pub fn xavier_init(in_dim: usize, out_dim: usize, activation: Activation, seed: u64) -> DenseLayer {
    let in_dim = in_dim.max(1);
    let out_dim = out_dim.max(1);
    let bound = xavier_bound(in_dim, out_dim);
    let mut rng = seed::rng(seed);
    let weights =
        Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-bound..=bound));
    DenseLayer {
        weights,
        biases: Array1::zeros(out_dim),
        activation,
    }
}

/// Runs `input` through every layer and returns each layer's output; the
/// last entry is the network output.
pub fn forward(layers: &[DenseLayer], input: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for layer in layers {
        let next = layer.apply(acts.last().unwrap_or(input))?;
        acts.push(next);
    }
    Ok(acts)
}

/// Network output only.
pub fn predict(layers: &[DenseLayer], input: &Array2<f64>) -> Result<Array2<f64>> {
    let mut x = input.to_owned();
    for layer in layers {
        x = layer.apply(&x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Loss gradients for every layer of a network, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(layers: &[DenseLayer]) -> Self {
        Gradients {
            layers: layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights
                .iter()
                .chain(g.biases.iter())
                .all(|v| v.is_finite())
        })
    }

    /// Appends weights then biases of every layer to `out`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for g in &self.layers {
            out.extend(g.weights.iter());
            out.extend(g.biases.iter());
        }
    }
}

/// Reverse-mode accumulation of `∂loss/∂W` and `∂loss/∂b` given
/// `output_gradient = ∂loss/∂output`. Layers are not modified.
pub fn backward(
    layers: &[DenseLayer],
    input: &Array2<f64>,
    activations: &[Array2<f64>],
    output_gradient: &Array2<f64>,
) -> Result<Gradients> {
    if activations.len() != layers.len() {
        return Err(Error::Shape(format!(
            "{} activations for {} layers",
            activations.len(),
            layers.len()
        )));
    }
    let last = activations
        .last()
        .ok_or_else(|| Error::Shape("empty network".into()))?;
    if last.dim() != output_gradient.dim() {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match output {:?}",
            output_gradient.dim(),
            last.dim()
        )));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut upstream = output_gradient.to_owned();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let act = &activations[l];
        let layer_input = if l == 0 { input } else { &activations[l - 1] };
        let mut delta = upstream;
        if layer.activation != Activation::Identity {
            delta.zip_mut_with(act, |d, &a| {
                *d *= layer.activation.derivative_from_output(a)
            });
        }
        let gw = delta.t().dot(layer_input);
        let gb = delta.sum_axis(Axis(0));
        upstream = delta.dot(&layer.weights);
        grads.push(LayerGradient {
            weights: gw,
            biases: gb,
        });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// Total parameter count across layers.
pub fn n_params(layers: &[DenseLayer]) -> usize {
    layers.iter().map(DenseLayer::n_params).sum()
}

/// Appends weights then biases of every layer to `out`.
pub fn flatten_params(layers: &[DenseLayer], out: &mut Vec<f64>) {
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.biases.iter());
    }
}

/// Inverse of [`flatten_params`]; returns the number of values consumed.
pub fn unflatten_params(layers: &mut [DenseLayer], flat: &[f64]) -> usize {
    let mut at = 0;
    for l in layers {
        for w in l.weights.iter_mut() {
            *w = flat[at];
            at += 1;
        }
        for b in l.biases.iter_mut() {
            *b = flat[at];
            at += 1;
        }
    }
    at
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input() {
        let layer =
            DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, 9.0]];
        let acts = forward(&[layer], &x).unwrap();
        assert_eq!(acts[0], x);
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let layer =
            DenseLayer::new(Array2::zeros((2, 3)), Array1::zeros(2), Activation::Tanh).unwrap();
        let x = array![[1.0, -2.0, 3.0]];
        assert!(forward(&[layer], &x).unwrap()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_shape_contract() {
        let net = vec![
            xavier_init(5, 4, Activation::Tanh, 1),
            xavier_init(4, 2, Activation::Identity, 2),
        ];
        let x = Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - j as f64) * 0.1);
        let acts = forward(&net, &x).unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[1].dim(), (7, 2));
        assert!(forward(&net, &Array2::zeros((3, 4))).is_err());
    }

    #[test]
    fn identity_sum_loss_gradient() {
        // loss = sum(output) → dW = onesᵀ·x, db = m·ones
        let layer = DenseLayer::new(
            array![[0.3, -0.2], [0.1, 0.5], [1.0, 2.0]],
            array![0.1, 0.2, 0.3],
            Activation::Identity,
        )
        .unwrap();
        let x = array![[1.0, 2.0], [3.0, -4.0], [0.5, 0.25], [2.0, 1.0]];
        let acts = forward(std::slice::from_ref(&layer), &x).unwrap();
        let g = backward(&[layer], &x, &acts, &Array2::ones((4, 3))).unwrap();
        let col_sums = x.sum_axis(Axis(0));
        for r in 0..3 {
            for c in 0..2 {
                assert!((g.layers[0].weights[[r, c]] - col_sums[c]).abs() < 1e-12);
            }
            assert_eq!(g.layers[0].biases[r], 4.0);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = vec![
            xavier_init(3, 3, Activation::Tanh, 4),
            xavier_init(3, 2, Activation::Identity, 5),
        ];
        let x = Array2::from_elem((4, 3), 0.7);
        let acts = forward(&net, &x).unwrap();
        let g = backward(&net, &x, &acts, &Array2::zeros((4, 2))).unwrap();
        assert_eq!(g, Gradients::zeros_like(&net));
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let l = xavier_init(8, 2, Activation::Tanh, 11);
        let bound = (6.0f64 / 10.0).sqrt();
        assert!((bound - 0.7746).abs() < 1e-4);
        assert!(l.weights.iter().all(|w| w.abs() <= bound));
        assert!(l.biases.iter().all(|&b| b == 0.0));
        assert_eq!(l, xavier_init(8, 2, Activation::Tanh, 11));
        let one = xavier_init(1, 1, Activation::Identity, 3);
        assert!(one.weights[[0, 0]].abs() <= 3f64.sqrt());
    }

    #[test]
    fn flatten_roundtrip() {
        let mut net = vec![
            xavier_init(3, 2, Activation::Tanh, 1),
            xavier_init(2, 1, Activation::Identity, 2),
        ];
        let mut flat = Vec::new();
        flatten_params(&net, &mut flat);
        assert_eq!(flat.len(), n_params(&net));
        let orig = net.clone();
        let bumped: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        unflatten_params(&mut net, &bumped);
        assert_eq!(net[1].biases[0], orig[1].biases[0] + 1.0);
        unflatten_params(&mut net, &flat);
        assert_eq!(net, orig);
    }
}
