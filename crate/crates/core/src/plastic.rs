//! Self-modifying layers: slow weights plus a neuromodulated Hebbian trace.
//!
//! A layer computes `x_t = phi((w + alpha * H) x_prev + bias)` where `*` is
//! the elementwise product, and afterwards accumulates
//! `H <- clip(H + m * outer(x_t, x_prev), -omega, omega)` with the scalar
//! modulation `m = tanh(mod_w . x_t + mod_b)`. The forward pass reads the
//! trace from the previous timestep, so the update for step `t` only takes
//! effect at step `t + 1`.
//!
//! # Genome layout (version 1)
//!
//! Layers are laid out in order. Within a layer:
//!
//! | block   | length            | present when |
//! |---------|-------------------|--------------|
//! | `w`     | `out * in`        | always       |
//! | `alpha` | `out * in`        | plastic      |
//! | `bias`  | `out`             | bias enabled |
//! | `mod_w` | `out`             | plastic      |
//! | `mod_b` | `1`               | plastic      |
//!
//! Matrices are row-major with rows indexed by the post-synaptic neuron.
//! The trace and `omega` are runtime state and never part of the genome.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Version of the flat parameter layout documented above.
pub const GENOME_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// Structural options shared by every layer of a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerOptions {
    /// Static layers carry no `alpha` or modulator parameters.
    pub plastic: bool,
    pub bias: bool,
    /// Trace clip bound.
    pub omega: f64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            plastic: true,
            bias: true,
            omega: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticLayer<T> {
    in_dim: usize,
    out_dim: usize,
    w: Vec<T>,
    alpha: Vec<T>,
    bias: Vec<T>,
    mod_w: Vec<T>,
    mod_b: T,
    trace: Vec<T>,
    omega: T,
    plastic: bool,
    use_bias: bool,
}

impl<T: Scalar> PlasticLayer<T> {
    /// All-zero layer.
    pub fn zeros(in_dim: usize, out_dim: usize, options: LayerOptions) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be positive, got {in_dim}x{out_dim}"
            )));
        }
        if !(options.omega > 0.0) || !options.omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega must be positive and finite, got {}",
                options.omega
            )));
        }
        let n = in_dim * out_dim;
        Ok(PlasticLayer {
            in_dim,
            out_dim,
            w: vec![T::zero(); n],
            alpha: vec![T::zero(); n],
            bias: vec![T::zero(); out_dim],
            mod_w: vec![T::zero(); out_dim],
            mod_b: T::zero(),
            trace: vec![T::zero(); n],
            omega: T::lit(options.omega),
            plastic: options.plastic,
            use_bias: options.bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn is_plastic(&self) -> bool {
        self.plastic
    }

    pub fn has_bias(&self) -> bool {
        self.use_bias
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn weights(&self) -> &[T] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.w
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// Plasticity coefficients. Writes are ignored by the genome when the
    /// layer is static, but they still take part in the forward pass.
    pub fn alpha_mut(&mut self) -> &mut [T] {
        &mut self.alpha
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn modulator_weights(&self) -> &[T] {
        &self.mod_w
    }

    pub fn modulator_weights_mut(&mut self) -> &mut [T] {
        &mut self.mod_w
    }

    pub fn modulator_bias(&self) -> T {
        self.mod_b
    }

    pub fn set_modulator_bias(&mut self, b: T) {
        self.mod_b = b;
    }

    pub fn trace(&self) -> &[T] {
        &self.trace
    }

    /// Overwrites the trace, clipping every entry into `[-omega, omega]`.
    pub fn set_trace(&mut self, trace: &[T]) -> Result<()> {
        check_len("set_trace", self.trace.len(), trace.len())?;
        let (lo, hi) = (-self.omega, self.omega);
        for (h, &v) in self.trace.iter_mut().zip(trace) {
            *h = v.max(lo).min(hi);
        }
        Ok(())
    }

    pub fn reset_trace(&mut self) {
        self.trace.iter_mut().for_each(|h| *h = T::zero());
    }

    /// Number of evolved parameters in this layer.
    pub fn genome_len(&self) -> usize {
        let n = self.in_dim * self.out_dim;
        let mut len = n;
        if self.use_bias {
            len += self.out_dim;
        }
        if self.plastic {
            len += n + self.out_dim + 1;
        }
        len
    }

    /// Plastic forward pass. Does not touch the trace.
    pub fn forward(&self, x_prev: &[T], act: Activation) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.out_dim];
        self.forward_into(x_prev, act, &mut out)?;
        Ok(out)
    }

    pub fn forward_into(&self, x_prev: &[T], act: Activation, out: &mut [T]) -> Result<()> {
        check_len("forward input", self.in_dim, x_prev.len())?;
        check_len("forward output", self.out_dim, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            let row = i * self.in_dim..(i + 1) * self.in_dim;
            let mut acc = self.bias[i];
            for ((&w, (&a, &h)), &x) in self.w[row.clone()]
                .iter()
                .zip(self.alpha[row.clone()].iter().zip(&self.trace[row]))
                .zip(x_prev)
            {
                acc = acc + (w + a * h) * x;
            }
            *o = act.apply(acc);
        }
        Ok(())
    }

    /// Neuromodulatory signal computed from the layer's own output.
    pub fn modulation(&self, x_t: &[T]) -> Result<T> {
        check_len("modulation input", self.out_dim, x_t.len())?;
        let z = self
            .mod_w
            .iter()
            .zip(x_t)
            .fold(self.mod_b, |acc, (&m, &x)| acc + m * x);
        Ok(z.tanh())
    }

    /// Hebbian trace accumulation with whole-trace clipping.
    pub fn update_trace(&mut self, x_prev: &[T], x_t: &[T]) -> Result<()> {
        check_len("trace update pre-synaptic", self.in_dim, x_prev.len())?;
        let m = self.modulation(x_t)?;
        if m == T::zero() {
            return Ok(());
        }
        let (lo, hi) = (-self.omega, self.omega);
        for (i, &post) in x_t.iter().enumerate() {
            let scaled = m * post;
            let row = &mut self.trace[i * self.in_dim..(i + 1) * self.in_dim];
            for (h, &pre) in row.iter_mut().zip(x_prev) {
                *h = (*h + scaled * pre).max(lo).min(hi);
            }
        }
        Ok(())
    }

    fn write_genome(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.w);
        if self.plastic {
            out.extend_from_slice(&self.alpha);
        }
        if self.use_bias {
            out.extend_from_slice(&self.bias);
        }
        if self.plastic {
            out.extend_from_slice(&self.mod_w);
            out.push(self.mod_b);
        }
    }

    /// Reads this layer's block from the front of `src`, returning the rest.
    fn read_genome<'a>(&mut self, src: &'a [T]) -> &'a [T] {
        fn take<'b, T: Copy>(dst: &mut [T], src: &'b [T]) -> &'b [T] {
            let (head, tail) = src.split_at(dst.len());
            dst.copy_from_slice(head);
            tail
        }
        let mut rest = take(&mut self.w, src);
        if self.plastic {
            rest = take(&mut self.alpha, rest);
        }
        if self.use_bias {
            rest = take(&mut self.bias, rest);
        }
        if self.plastic {
            rest = take(&mut self.mod_w, rest);
            self.mod_b = rest[0];
            rest = &rest[1..];
        }
        rest
    }
}

/// Feedforward stack of plastic layers; its flat parameter vector is the
/// genome optimized by the evolution strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticNetwork<T> {
    layers: Vec<PlasticLayer<T>>,
    activation: Activation,
}

impl<T: Scalar> PlasticNetwork<T> {
    /// Builds an all-zero network. `sizes` lists every layer width including
    /// input and output, e.g. `[4, 8, 3]`.
    pub fn zeros(sizes: &[usize], activation: Activation, options: LayerOptions) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output size".into(),
            ));
        }
        let layers = sizes
            .windows(2)
            .map(|p| PlasticLayer::zeros(p[0], p[1], options))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlasticNetwork { layers, activation })
    }

    /// Assembles a network from existing layers; adjacent dims must chain.
    pub fn from_layers(layers: Vec<PlasticLayer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "a network needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(PlasticNetwork { layers, activation })
    }

    pub fn layers(&self) -> &[PlasticLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [PlasticLayer<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn genome_len(&self) -> usize {
        self.layers.iter().map(PlasticLayer::genome_len).sum()
    }

    /// One control timestep: forward then trace update, layer by layer.
    pub fn step(&mut self, obs: &[T]) -> Result<Vec<T>> {
        check_len("network input", self.input_dim(), obs.len())?;
        let act = self.activation;
        let mut x_prev = obs.to_vec();
        for layer in &mut self.layers {
            let mut x_t = vec![T::zero(); layer.out_dim];
            layer.forward_into(&x_prev, act, &mut x_t)?;
            if layer.plastic {
                layer.update_trace(&x_prev, &x_t)?;
            }
            x_prev = x_t;
        }
        Ok(x_prev)
    }

    /// Zeroes every Hebbian trace. Parameters are untouched.
    pub fn reset_state(&mut self) {
        self.layers.iter_mut().for_each(PlasticLayer::reset_trace);
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.genome_len());
        for layer in &self.layers {
            layer.write_genome(&mut out);
        }
        out
    }

    /// A copy of `self` carrying the parameters in `theta` and zero traces.
    pub fn from_flat(&self, theta: &[T]) -> Result<Self> {
        check_len("genome", self.genome_len(), theta.len())?;
        let mut net = self.clone();
        let mut rest = theta;
        for layer in &mut net.layers {
            rest = layer.read_genome(rest);
        }
        debug_assert!(rest.is_empty());
        net.reset_state();
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts(plastic: bool) -> LayerOptions {
        LayerOptions {
            plastic,
            bias: true,
            omega: 1.0,
        }
    }

    fn scalar_layer(w: f64, alpha: f64, trace: f64) -> PlasticLayer<f64> {
        let mut l = PlasticLayer::zeros(1, 1, opts(true)).unwrap();
        l.weights_mut()[0] = w;
        l.alpha_mut()[0] = alpha;
        l.set_trace(&[trace]).unwrap();
        l
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut l = PlasticLayer::<f64>::zeros(3, 3, opts(true)).unwrap();
        for i in 0..3 {
            l.weights_mut()[i * 3 + i] = 1.0;
        }
        l.set_trace(&[0.3, -0.2, 0.9, 0.1, 0.0, -1.0, 0.5, 0.5, 0.5])
            .unwrap();
        assert_eq!(
            l.forward(&[0.0; 3], Activation::Tanh).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn zero_alpha_ignores_trace() {
        let mut l = PlasticLayer::<f64>::zeros(2, 2, opts(true)).unwrap();
        l.weights_mut().copy_from_slice(&[0.5, -1.0, 2.0, 0.25]);
        l.bias_mut().copy_from_slice(&[0.1, -0.1]);
        let x = [0.7, -0.3];
        let base = l.forward(&x, Activation::Tanh).unwrap();
        l.set_trace(&[1.0, -1.0, 0.4, 0.2]).unwrap();
        assert_eq!(l.forward(&x, Activation::Tanh).unwrap(), base);
        assert_relative_eq!(base[0], (0.5f64 * 0.7 + 0.3 + 0.1).tanh());
    }

    #[test]
    fn plastic_forward_hand_value() {
        let l = scalar_layer(0.5, 1.0, 0.25);
        let y = l.forward(&[2.0], Activation::Identity).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn forward_rejects_wrong_input_len() {
        let l = scalar_layer(0.5, 1.0, 0.0);
        assert!(matches!(
            l.forward(&[1.0, 2.0], Activation::Tanh),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn modulation_values() {
        let mut l = scalar_layer(0.0, 0.0, 0.0);
        assert_eq!(l.modulation(&[0.8]).unwrap(), 0.0);
        l.modulator_weights_mut()[0] = 1.0;
        assert_eq!(l.modulation(&[0.0]).unwrap(), 0.0);
        l.modulator_weights_mut()[0] = 2.0;
        l.set_modulator_bias(-1.0);
        assert_relative_eq!(
            l.modulation(&[1.0]).unwrap(),
            0.761_594_155_955_764_9,
            epsilon = 1e-15
        );
        assert!(l.modulation(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_modulator_freezes_trace() {
        let mut l = scalar_layer(0.3, 1.0, 0.4);
        l.update_trace(&[1.0], &[1.0]).unwrap();
        assert_eq!(l.trace(), &[0.4]);
    }

    #[test]
    fn trace_is_clipped_to_omega() {
        let mut l = scalar_layer(0.0, 0.0, 0.9);
        // tanh(50) rounds to 1.0 in f64
        l.set_modulator_bias(50.0);
        assert_eq!(l.modulation(&[1.0]).unwrap(), 1.0);
        l.update_trace(&[1.0], &[1.0]).unwrap();
        assert_eq!(l.trace(), &[1.0]);
        l.set_modulator_bias(-50.0);
        for _ in 0..3 {
            l.update_trace(&[1.0], &[1.0]).unwrap();
        }
        assert_eq!(l.trace(), &[-1.0]);
    }

    #[test]
    fn trace_increment_hand_value() {
        let mut l = scalar_layer(0.0, 0.0, 0.0);
        l.set_modulator_bias(0.5f64.atanh());
        l.update_trace(&[1.0], &[1.0]).unwrap();
        assert_relative_eq!(l.trace()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn trace_update_is_post_by_pre_outer_product() {
        let mut l = PlasticLayer::<f64>::zeros(3, 2, opts(true)).unwrap();
        l.set_modulator_bias(0.5f64.atanh());
        l.update_trace(&[1.0, -0.5, 0.25], &[0.4, -0.8]).unwrap();
        let m = 0.5;
        let expected = [
            m * 0.4 * 1.0,
            m * 0.4 * -0.5,
            m * 0.4 * 0.25,
            m * -0.8 * 1.0,
            m * -0.8 * -0.5,
            m * -0.8 * 0.25,
        ];
        for (a, b) in l.trace().iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn genome_length_matches_layout() {
        let net = PlasticNetwork::<f64>::zeros(&[4, 8, 3], Activation::Tanh, opts(true)).unwrap();
        assert_eq!(net.genome_len(), 136);
        assert_eq!(net.to_flat().len(), 136);
        let stat = PlasticNetwork::<f64>::zeros(&[4, 8, 3], Activation::Tanh, opts(false)).unwrap();
        assert_eq!(stat.genome_len(), (32 + 8) + (24 + 3));
        let no_bias = LayerOptions {
            plastic: true,
            bias: false,
            omega: 1.0,
        };
        let nb = PlasticNetwork::<f64>::zeros(&[4, 8, 3], Activation::Tanh, no_bias).unwrap();
        assert_eq!(nb.genome_len(), 136 - 11);
    }

    #[test]
    fn flat_layout_order() {
        let template = PlasticNetwork::<f64>::zeros(&[2, 1], Activation::Tanh, opts(true)).unwrap();
        // w(2) alpha(2) bias(1) mod_w(1) mod_b(1)
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let net = template.from_flat(&theta).unwrap();
        let l = &net.layers()[0];
        assert_eq!(l.weights(), &[1.0, 2.0]);
        assert_eq!(l.alpha(), &[3.0, 4.0]);
        assert_eq!(l.bias(), &[5.0]);
        assert_eq!(l.modulator_weights(), &[6.0]);
        assert_eq!(l.modulator_bias(), 7.0);
        assert_eq!(net.to_flat(), theta.to_vec());
    }

    #[test]
    fn from_flat_rejects_wrong_length() {
        let template = PlasticNetwork::<f64>::zeros(&[2, 1], Activation::Tanh, opts(true)).unwrap();
        assert!(template.from_flat(&[0.0; 6]).is_err());
    }

    #[test]
    fn zero_genome_outputs_zero() {
        let mut net =
            PlasticNetwork::<f64>::zeros(&[3, 5, 2], Activation::Tanh, opts(true)).unwrap();
        assert_eq!(net.step(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_restores_fresh_behavior() {
        let template =
            PlasticNetwork::<f64>::zeros(&[2, 3, 2], Activation::Tanh, opts(true)).unwrap();
        let theta: Vec<f64> = (0..template.genome_len())
            .map(|i| ((i as f64) * 0.37).sin())
            .collect();
        let mut net = template.from_flat(&theta).unwrap();
        let fresh_out = template
            .from_flat(&theta)
            .unwrap()
            .step(&[0.3, -0.6])
            .unwrap();
        for k in 0..20 {
            net.step(&[k as f64 * 0.1, 1.0]).unwrap();
        }
        let before = net.to_flat();
        net.reset_state();
        net.reset_state();
        assert_eq!(net.to_flat(), before);
        assert!(net
            .layers()
            .iter()
            .all(|l| l.trace().iter().all(|&h| h == 0.0)));
        assert_eq!(net.step(&[0.3, -0.6]).unwrap(), fresh_out);
    }

    #[test]
    fn plastic_network_is_stateful() {
        let template = PlasticNetwork::<f64>::zeros(&[2, 2], Activation::Tanh, opts(true)).unwrap();
        let theta: Vec<f64> = vec![
            0.5, -0.2, 0.1, 0.3, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.5,
        ];
        let mut net = template.from_flat(&theta).unwrap();
        let a = net.step(&[1.0, 1.0]).unwrap();
        let b = net.step(&[1.0, 1.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn static_network_is_pure() {
        let template =
            PlasticNetwork::<f64>::zeros(&[2, 3, 2], Activation::Tanh, opts(false)).unwrap();
        let theta: Vec<f64> = (0..template.genome_len())
            .map(|i| (i as f64).cos())
            .collect();
        let mut net = template.from_flat(&theta).unwrap();
        let a = net.step(&[0.2, 0.9]).unwrap();
        net.step(&[-1.0, 3.0]).unwrap();
        assert_eq!(net.step(&[0.2, 0.9]).unwrap(), a);
    }

    #[test]
    fn works_in_single_precision() {
        let template =
            PlasticNetwork::<f32>::zeros(&[1, 1], Activation::Identity, opts(true)).unwrap();
        let mut net = template.from_flat(&[0.5, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.step(&[2.0]).unwrap(), vec![1.0f32]);
    }
}
