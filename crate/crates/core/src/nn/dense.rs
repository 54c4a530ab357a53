use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, NnError, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, NnError> {
        check_len("weights", inputs * outputs, weights.len())?;
        check_len("bias", outputs, bias.len())?;
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// `act(W x + b)`.
    pub fn forward(&self, input: &[f64], activation: Activation) -> Result<Vec<f64>, NnError> {
        check_len("layer input", self.inputs, input.len())?;
        let mut out = vec![0.0; self.outputs];
        self.forward_into(input, activation, &mut out);
        Ok(out)
    }

    pub(crate) fn forward_into(&self, input: &[f64], activation: Activation, out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs))
            .zip(&self.bias)
        {
            let s: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            *o = activation.apply(s + b);
        }
    }

    /// Accumulates parameter gradients into `grad` and writes the input
    /// gradient into `input_grad`. `upstream` is dL/d(output).
    pub(crate) fn backward_into(
        &self,
        input: &[f64],
        output: &[f64],
        activation: Activation,
        upstream: &[f64],
        grad: &mut LayerGrad,
        input_grad: &mut [f64],
    ) {
        input_grad.fill(0.0);
        for o in 0..self.outputs {
            let delta = upstream[o] * activation.derivative_from_output(output[o]);
            if delta == 0.0 {
                continue;
            }
            grad.bias[o] += delta;
            let row = o * self.inputs;
            let w_row = &self.weights[row..row + self.inputs];
            let g_row = &mut grad.weights[row..row + self.inputs];
            for i in 0..self.inputs {
                g_row[i] += delta * input[i];
                input_grad[i] += delta * w_row[i];
            }
        }
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

impl Parameters for LayerGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// A chain of dense layers, each followed by its own activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    activations: Vec<Activation>,
}

impl Mlp {
    pub fn new(layers: Vec<(DenseLayer, Activation)>) -> Result<Self, NnError> {
        for pair in layers.windows(2) {
            check_len("chained layer input", pair[0].0.outputs, pair[1].0.inputs)?;
        }
        let (layers, activations) = layers.into_iter().unzip();
        Ok(Self {
            layers,
            activations,
        })
    }

    /// Glorot-initialized chain through `widths`, e.g. `[20, 16, 8]`.
    pub fn glorot(widths: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        assert_eq!(widths.len(), activations.len() + 1);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activations: activations.to_vec(),
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass that records every layer's output for [`Mlp::backward`].
    pub fn forward_cached<'c>(&self, input: &[f64], cache: &'c mut ForwardCache) -> Result<&'c [f64], NnError> {
        check_len("network input", self.inputs(), input.len())?;
        cache.shape_for(self);
        cache.values[0].copy_from_slice(input);
        for (l, (layer, act)) in self.layers.iter().zip(&self.activations).enumerate() {
            let (done, rest) = cache.values.split_at_mut(l + 1);
            layer.forward_into(&done[l], *act, &mut rest[0]);
        }
        cache.valid = true;
        Ok(cache.output())
    }

    /// Accumulates dL/dparams into `grads` and returns dL/dinput.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut MlpGrad) -> Result<Vec<f64>, NnError> {
        if !cache.valid || !cache.matches(self) {
            return Err(NnError::MissingForwardState);
        }
        check_len("upstream gradient", self.outputs(), upstream.len())?;
        if grads.layers.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch { index: 0 });
        }
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut input_grad = vec![0.0; layer.inputs];
            layer.backward_into(
                &cache.values[l],
                &cache.values[l + 1],
                self.activations[l],
                &delta,
                &mut grads.layers[l],
                &mut input_grad,
            );
            delta = input_grad;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<LayerGrad>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }
}

impl Parameters for MlpGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Per-layer activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    values: Vec<Vec<f64>>,
    valid: bool,
}

impl ForwardCache {
    fn shape_for(&mut self, net: &Mlp) {
        if !self.matches(net) {
            self.values = std::iter::once(net.inputs())
                .chain(net.layers.iter().map(DenseLayer::outputs))
                .map(|n| vec![0.0; n])
                .collect();
        }
        self.valid = false;
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.values.len() == net.layers.len() + 1
            && self.values[0].len() == net.inputs()
            && net
                .layers
                .iter()
                .zip(&self.values[1..])
                .all(|(l, v)| l.outputs() == v.len())
    }

    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }

    pub fn input(&self) -> &[f64] {
        self.values.first().map_or(&[], Vec::as_slice)
    }

    pub fn clear(&mut self) {
        self.valid = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let layer = DenseLayer::new(3, 3, w, vec![0.0; 3]).unwrap();
        let x = [0.3, -7.0, 12.5];
        assert_eq!(layer.forward(&x, Activation::Identity).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_layer_gives_zero_under_tanh() {
        let layer = DenseLayer::zeros(4, 2);
        assert_eq!(layer.forward(&[1.0, 2.0, 3.0, 4.0], Activation::Tanh).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_tanh_layer() {
        let layer = DenseLayer::new(1, 1, vec![2.0], vec![0.5]).unwrap();
        let y = layer.forward(&[1.0], Activation::Tanh).unwrap()[0];
        assert_eq!(y, 2.5f64.tanh());
        assert!((y - 0.98661).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(
            layer.forward(&[1.0], Activation::Tanh),
            Err(NnError::DimensionMismatch { expected: 3, found: 1, .. })
        ));
        assert!(DenseLayer::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(Mlp::new(vec![
            (DenseLayer::zeros(2, 3), Activation::Tanh),
            (DenseLayer::zeros(4, 1), Activation::Identity),
        ])
        .is_err());
    }

    fn random_net(seed: u64, widths: &[usize]) -> Mlp {
        let mut rng = stream(seed, Domain::Init, 0);
        let mut acts = vec![Activation::Tanh; widths.len() - 2];
        acts.push(Activation::Identity);
        let mut net = Mlp::glorot(widths, &acts, &mut rng);
        // non-zero biases so their gradients are exercised
        for t in net.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        net
    }

    #[test]
    fn backward_without_forward_fails() {
        let net = random_net(1, &[3, 4, 2]);
        let mut grads = MlpGrad::zeros_like(&net);
        let cache = ForwardCache::default();
        assert_eq!(net.backward(&cache, &[1.0, 1.0], &mut grads), Err(NnError::MissingForwardState));

        let other = random_net(1, &[5, 4, 2]);
        let mut cache = ForwardCache::default();
        other.forward_cached(&[0.0; 5], &mut cache).unwrap();
        assert_eq!(net.backward(&cache, &[1.0, 1.0], &mut grads), Err(NnError::MissingForwardState));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = random_net(2, &[3, 5, 4, 2]);
        let mut cache = ForwardCache::default();
        net.forward_cached(&[0.1, -0.4, 0.9], &mut cache).unwrap();
        let mut grads = MlpGrad::zeros_like(&net);
        let dx = net.backward(&cache, &[0.0, 0.0], &mut grads).unwrap();
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)));
        assert!(dx.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient() {
        // L = |Wx + b - y|^2  =>  dL/dW = 2 r x^T, dL/db = 2 r
        let layer = DenseLayer::new(3, 2, vec![0.5, -1.0, 2.0, 0.25, 0.0, -0.75], vec![0.1, -0.2]).unwrap();
        let net = Mlp::new(vec![(layer.clone(), Activation::Identity)]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let y = [0.3, 0.6];
        let mut cache = ForwardCache::default();
        let out = net.forward_cached(&x, &mut cache).unwrap().to_vec();
        let r: Vec<f64> = out.iter().zip(&y).map(|(o, t)| o - t).collect();
        let upstream: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let mut grads = MlpGrad::zeros_like(&net);
        net.backward(&cache, &upstream, &mut grads).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let expected = 2.0 * r[o] * x[i];
                assert!((grads.layers[0].weights[o * 3 + i] - expected).abs() < 1e-14);
            }
            assert!((grads.layers[0].bias[o] - 2.0 * r[o]).abs() < 1e-14);
        }
    }

    /// Central finite differences of `L = sum(c_i * out_i)` for a fixed `c`.
    fn check_gradients(net: &Mlp, x: &[f64], coeffs: &[f64]) -> f64 {
        let loss = |n: &Mlp, input: &[f64]| -> f64 {
            n.forward(input).unwrap().iter().zip(coeffs).map(|(o, c)| o * c).sum()
        };
        let mut cache = ForwardCache::default();
        net.forward_cached(x, &mut cache).unwrap();
        let mut grads = MlpGrad::zeros_like(net);
        let dx = net.backward(&cache, coeffs, &mut grads).unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-6);
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let mut probe = net.clone();
        for (ti, g) in analytic.iter().enumerate() {
            for k in 0..g.len() {
                let orig = probe.tensors()[ti][k];
                probe.tensors_mut()[ti][k] = orig + h;
                let up = loss(&probe, x);
                probe.tensors_mut()[ti][k] = orig - h;
                let down = loss(&probe, x);
                probe.tensors_mut()[ti][k] = orig;
                worst = worst.max(rel(g[k], (up - down) / (2.0 * h)));
            }
        }
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let up = loss(net, &xp);
            xp[i] -= 2.0 * h;
            let down = loss(net, &xp);
            worst = worst.max(rel(dx[i], (up - down) / (2.0 * h)));
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradients_match_finite_differences(
            seed in any::<u64>(),
            x in prop::collection::vec(-1.5f64..1.5, 4),
            coeffs in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let net = random_net(seed, &[4, 6, 5, 3]);
            let worst = check_gradients(&net, &x, &coeffs);
            prop_assert!(worst <= 1e-4, "relative error {worst}");
        }

        #[test]
        fn tanh_outputs_are_bounded(seed in any::<u64>(), x in prop::collection::vec(-100.0f64..100.0, 4)) {
            let net = random_net(seed, &[4, 6, 3]);
            let hidden = net.layers()[0].forward(&x, Activation::Tanh).unwrap();
            prop_assert!(hidden.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
