//! Fully-connected networks with explicit forward and backward passes.
//!
//! The layer set is deliberately small (affine + tanh/elu/identity), which is
//! what makes the exact second-order pass in [`NetParams::input_gradient_backward`]
//! tractable without a general autodiff engine.

mod adam;
mod io;

pub use adam::Adam;
pub use io::{read_net, write_net, NET_MAGIC};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input width {got} does not match network input width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("gradient shape {got:?} does not match cached output shape {expected:?}")]
    StaleCache {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("operation requires a scalar-output network, output width is {0}")]
    NotScalar(usize),
    #[error("non-finite gradient, update rejected")]
    NonFiniteGradient,
    #[error("parameter shapes are not congruent")]
    ShapeMismatch,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }

    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 0.0,
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Elu => {
                if z > 0.0 {
                    0.0
                } else {
                    z.exp()
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Elu => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Elu),
            _ => None,
        }
    }
}

/// Layer widths including input and output, plus one activation per hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetSpec {
    pub widths: Vec<usize>,
    pub hidden: Vec<Activation>,
    pub output: Activation,
}

impl NetSpec {
    /// `input -> hidden.. -> output` with the same activation on every hidden layer.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, act: Activation) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        NetSpec {
            widths,
            hidden: vec![act; hidden.len()],
            output: Activation::Identity,
        }
    }

    pub fn with_output(mut self, act: Activation) -> Self {
        self.output = act;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.widths.len() < 2 {
            return Err(NetError::InvalidSpec("need at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(NetError::InvalidSpec("layer widths must be positive".into()));
        }
        if self.hidden.len() != self.widths.len() - 2 {
            return Err(NetError::InvalidSpec(format!(
                "{} hidden activations for {} hidden layers",
                self.hidden.len(),
                self.widths.len() - 2
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden[layer]
        }
    }
}

/// Weight matrix (out x in) and bias for one affine layer. Also used for
/// gradients and optimizer moments, which share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn zeros(input: usize, output: usize) -> Self {
        Layer {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub spec: NetSpec,
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass; `pre[l]` is the pre-activation of
/// layer `l`, `post[l]` its input (`post[0]` is the network input).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().unwrap()
    }
}

/// Per-parameter gradients, shape-congruent with [`NetParams`], plus the
/// gradient with respect to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    pub layers: Vec<Layer>,
    pub input: Array2<f64>,
}

impl GradTape {
    pub fn zeros_like(params: &NetParams) -> Self {
        GradTape {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.w.ncols(), l.w.nrows()))
                .collect(),
            input: Array2::zeros((0, params.spec.input_width())),
        }
    }

    /// `self += scale * other` over parameter gradients.
    pub fn accumulate(&mut self, other: &GradTape, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|g| g.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Intermediate values of the reverse sweep that computes `d output / d input`.
#[derive(Debug, Clone)]
pub struct InputGradCache {
    forward: ForwardCache,
    /// `delta[l]`: derivative of the scalar output w.r.t. `pre[l]`.
    delta: Vec<Array2<f64>>,
    /// `e[l] = delta[l] * W_l`: derivative w.r.t. the input of layer `l`.
    e: Vec<Array2<f64>>,
}

impl InputGradCache {
    pub fn input_gradient(&self) -> &Array2<f64> {
        &self.e[0]
    }

    pub fn output(&self) -> &Array2<f64> {
        self.forward.output()
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter().copied());
        out.extend(l.b.iter().copied());
    }
    out
}

fn map_pre(z: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    z.mapv(f)
}

impl NetParams {
    pub fn zeros(spec: NetSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(NetParams { spec, layers })
    }

    /// Gaussian init scaled by `1/sqrt(fan_in)`; the last layer is further
    /// multiplied by `output_gain`.
    pub fn init<R: Rng + ?Sized>(
        spec: NetSpec,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let mut p = Self::zeros(spec)?;
        let n = p.layers.len();
        for (i, layer) in p.layers.iter_mut().enumerate() {
            let fan_in = layer.w.ncols() as f64;
            let gain = if i + 1 == n { output_gain } else { 1.0 };
            let std = gain / fan_in.sqrt();
            layer.w.mapv_inplace(|_| {
                let s: f64 = StandardNormal.sample(rng);
                s * std
            });
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), NetError> {
        if values.len() != self.num_params() {
            return Err(NetError::ShapeMismatch);
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in l.b.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NetError> {
        let expected = self.spec.input_width();
        if x.ncols() != expected {
            return Err(NetError::WidthMismatch {
                expected,
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache, NetError> {
        self.check_input(&x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = post[l].dot(&layer.w.t()) + &layer.b;
            let act = self.spec.activation(l);
            let a = map_pre(&z, |v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache { pre, post })
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.spec.activation(l);
            let mut z = a.dot(&layer.w.t()) + &layer.b;
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        Ok(a)
    }

    /// Gradients of `sum(output_grad ⊙ output)` w.r.t. parameters and input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<GradTape, NetError> {
        let out = cache.output();
        if out.dim() != output_grad.dim() || cache.pre.len() != self.layers.len() {
            return Err(NetError::StaleCache {
                expected: out.dim(),
                got: output_grad.dim(),
            });
        }
        let injections: Vec<Option<Array2<f64>>> = vec![None; self.layers.len()];
        Ok(self.backward_with_injections(cache, Some(output_grad), &injections))
    }

    /// Reverse pass where `pre_grads[l]` is added directly to the gradient of
    /// pre-activation `l`.
    fn backward_with_injections(
        &self,
        cache: &ForwardCache,
        output_grad: Option<ArrayView2<f64>>,
        pre_grads: &[Option<Array2<f64>>],
    ) -> GradTape {
        let n = cache.post[0].nrows();
        let mut layers: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut upstream: Option<Array2<f64>> = output_grad.map(|g| g.to_owned());
        for l in (0..self.layers.len()).rev() {
            let act = self.spec.activation(l);
            let z = &cache.pre[l];
            let mut dz = match upstream.take() {
                Some(da) => {
                    let mut d = map_pre(z, |v| act.derivative(v));
                    d *= &da;
                    d
                }
                None => Array2::zeros(z.dim()),
            };
            if let Some(extra) = &pre_grads[l] {
                dz += extra;
            }
            let w_grad = dz.t().dot(&cache.post[l]);
            let b_grad = dz.sum_axis(Axis(0));
            upstream = Some(dz.dot(&self.layers[l].w));
            layers.push(Layer {
                w: w_grad,
                b: b_grad,
            });
        }
        layers.reverse();
        let input = upstream.unwrap_or_else(|| Array2::zeros((n, self.spec.input_width())));
        GradTape { layers, input }
    }

    fn require_scalar(&self) -> Result<(), NetError> {
        let w = self.spec.output_width();
        if w != 1 {
            return Err(NetError::NotScalar(w));
        }
        Ok(())
    }

    /// `∇_x f(x)` for each row of a scalar-output network.
    pub fn input_gradient(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.input_gradient_cached(x)?.e.swap_remove(0))
    }

    /// Computes `∇_x f(x)` and keeps what [`Self::input_gradient_backward`] needs.
    pub fn input_gradient_cached(&self, x: ArrayView2<f64>) -> Result<InputGradCache, NetError> {
        self.require_scalar()?;
        let forward = self.forward(x)?;
        let depth = self.layers.len();
        let mut delta = vec![Array2::zeros((0, 0)); depth];
        let mut e = vec![Array2::zeros((0, 0)); depth];
        let last = depth - 1;
        let out_act = self.spec.activation(last);
        delta[last] = map_pre(&forward.pre[last], |v| out_act.derivative(v));
        for l in (0..depth).rev() {
            e[l] = delta[l].dot(&self.layers[l].w);
            if l > 0 {
                let act = self.spec.activation(l - 1);
                let mut d = map_pre(&forward.pre[l - 1], |v| act.derivative(v));
                d *= &e[l];
                delta[l - 1] = d;
            }
        }
        Ok(InputGradCache { forward, delta, e })
    }

    /// Parameter gradients of `Σ_rows ⟨input_grad_adjoint, ∇_x f(x)⟩`, i.e. the
    /// reverse-over-reverse pass needed by gradient-norm penalties.
    pub fn input_gradient_backward(
        &self,
        cache: &InputGradCache,
        input_grad_adjoint: ArrayView2<f64>,
    ) -> Result<GradTape, NetError> {
        let depth = self.layers.len();
        if input_grad_adjoint.dim() != cache.e[0].dim() {
            return Err(NetError::StaleCache {
                expected: cache.e[0].dim(),
                got: input_grad_adjoint.dim(),
            });
        }
        let mut w_extra: Vec<Array2<f64>> = Vec::with_capacity(depth);
        let mut pre_grads: Vec<Option<Array2<f64>>> = vec![None; depth];
        let mut e_bar = input_grad_adjoint.to_owned();
        for l in 0..depth {
            // e_l = delta_l W_l
            w_extra.push(cache.delta[l].t().dot(&e_bar));
            let delta_bar = e_bar.dot(&self.layers[l].w.t());
            let act = self.spec.activation(l);
            let z = &cache.forward.pre[l];
            if l + 1 < depth {
                // delta_l = f'(z_l) ⊙ e_{l+1}
                let mut zb = map_pre(z, |v| act.second_derivative(v));
                zb *= &cache.e[l + 1];
                zb *= &delta_bar;
                pre_grads[l] = Some(zb);
                let mut next = map_pre(z, |v| act.derivative(v));
                next *= &delta_bar;
                e_bar = next;
            } else {
                // delta_L = f'(z_L)
                let mut zb = map_pre(z, |v| act.second_derivative(v));
                zb *= &delta_bar;
                pre_grads[l] = Some(zb);
            }
        }
        let mut tape = self.backward_with_injections(&cache.forward, None, &pre_grads);
        for (layer, extra) in tape.layers.iter_mut().zip(w_extra) {
            layer.w += &extra;
        }
        Ok(tape)
    }

    /// Single-precision copy for inference-only rollouts.
    pub fn to_inference(&self) -> InferenceNet {
        InferenceNet {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| InferenceLayer {
                    rows: l.w.nrows(),
                    cols: l.w.ncols(),
                    w: l.w.iter().map(|&v| v as f32).collect(),
                    b: l.b.iter().map(|&v| v as f32).collect(),
                    act: self.spec.activation(i),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct InferenceLayer {
    rows: usize,
    cols: usize,
    w: Vec<f32>,
    b: Vec<f32>,
    act: Activation,
}

/// 32-bit read-only snapshot of a network.
#[derive(Debug, Clone)]
pub struct InferenceNet {
    layers: Vec<InferenceLayer>,
}

impl InferenceNet {
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut a = x.to_vec();
        for l in &self.layers {
            debug_assert_eq!(a.len(), l.cols);
            let mut out = l.b.clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &l.w[r * l.cols..(r + 1) * l.cols];
                *o += row.iter().zip(&a).map(|(w, x)| w * x).sum::<f32>();
                *o = l.act.apply(*o as f64) as f32;
            }
            debug_assert_eq!(out.len(), l.rows);
            a = out;
        }
        a
    }
}
