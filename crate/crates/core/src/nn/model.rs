use rand::{Rng as _, SeedableRng};

use super::activation::AfTriple;
use super::real::Real;
use super::spec::{Architecture, LayerPlan, NetworkSpec};
use super::tensor::Tensor;
use crate::afprims::Mode;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// A network with its parameters. Weights of a linear layer are stored
/// `[out, in]`; conv weights are `[out_channels, in_channels * k * k]`.
#[derive(Debug, Clone)]
pub struct Model<T: Real = f32> {
    spec: NetworkSpec,
    plan: Vec<LayerPlan>,
    /// Per layer, the index of its weight tensor in `params` (bias follows).
    param_index: Vec<Option<usize>>,
    params: Vec<Tensor<T>>,
    rng: Rng,
    mode: Mode,
}

/// What the backward pass needs from one forward pass.
#[derive(Debug)]
pub struct ForwardCache<T: Real = f32> {
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug)]
enum LayerCache<T> {
    /// Input of a linear or conv layer.
    Input(Vec<T>),
    /// Flat argmax position (within the sample) of every pooled output.
    Argmax(Vec<u32>),
    /// f'(pre-activation).
    Derivative(Vec<T>),
    /// Dropout scale per element (0 or 1/(1-p)).
    Mask(Vec<T>),
    /// Identity in backward (eval-mode dropout).
    Nothing,
}

/// Builds a model with every weight and bias drawn from U(-sqrt(k), sqrt(k)),
/// k = 1/fan_in.
pub fn build_model<T: Real, R: rand::Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Model<T>> {
    Model::new(spec, rng)
}

impl<T: Real> Model<T> {
    pub fn new<R: rand::Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let plan = spec.plan()?;
        let mut params = Vec::new();
        let mut param_index = Vec::with_capacity(plan.len());
        for layer in &plan {
            let (w_shape, fan_in, n_out) = match *layer {
                LayerPlan::Linear { inputs, outputs } => (vec![outputs, inputs], inputs, outputs),
                LayerPlan::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    (vec![out_channels, fan_in], fan_in, out_channels)
                }
                _ => {
                    param_index.push(None);
                    continue;
                }
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            let mut draw = |shape: Vec<usize>| {
                let n = shape.iter().product();
                let data = (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect();
                Tensor::new(shape, data).expect("shape and data agree")
            };
            param_index.push(Some(params.len()));
            params.push(draw(w_shape));
            params.push(draw(vec![n_out]));
        }
        let model_rng = Rng::seed_from_u64(rng.random());
        Ok(Self {
            spec,
            plan,
            param_index,
            params,
            rng: model_rng,
            mode: Mode::Train,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn af_triple(&self) -> &AfTriple {
        &self.spec.af_triple
    }

    pub fn plan(&self) -> &[LayerPlan] {
        &self.plan
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Reseeds the stream used for dropout masks and stochastic activations.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = Rng::seed_from_u64(seed);
    }

    /// Elements per input sample.
    pub fn input_len(&self) -> usize {
        self.spec.input_dims.iter().product()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    /// Zero tensors shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    /// Forward pass on a `[B, C, H, W]` batch (or `[B, D]` for the FCN).
    /// Returns `[B, classes]` logits and the cache for [`Model::backward`].
    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let b = self.check_batch(batch)?;
        let (logits, cache) = self.forward_flat(batch.data().to_vec(), b, true, None);
        let logits = Tensor::new(vec![b, self.spec.n_classes], logits)?;
        Ok((logits, cache))
    }

    /// Forward pass without keeping anything for backward.
    pub fn predict(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_batch(batch)?;
        let (logits, _) = self.forward_flat(batch.data().to_vec(), b, false, None);
        Tensor::new(vec![b, self.spec.n_classes], logits)
    }

    /// The input of every layer (in plan order) followed by the logits, for
    /// inspecting pre-activation ranges.
    pub fn layer_inputs(&mut self, batch: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let b = self.check_batch(batch)?;
        let mut trace = Vec::with_capacity(self.plan.len() + 1);
        let (logits, _) = self.forward_flat(batch.data().to_vec(), b, false, Some(&mut trace));
        trace.push(logits);
        Ok(trace)
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let shape = batch.shape();
        let [c, h, w] = self.spec.input_dims;
        let ok = match (&self.spec.arch, shape) {
            (_, [_, cc, hh, ww]) => [*cc, *hh, *ww] == [c, h, w],
            (Architecture::Fcn { .. }, [_, d]) => *d == c * h * w,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "batch shape {shape:?} does not match input dims {:?} of the {} network",
                self.spec.input_dims,
                self.spec.arch.kind()
            )));
        }
        Ok(shape[0])
    }

    /// Forward on `b` samples stored contiguously in `x`.
    pub(crate) fn forward_flat(
        &mut self,
        mut x: Vec<T>,
        b: usize,
        keep_cache: bool,
        mut trace: Option<&mut Vec<Vec<T>>>,
    ) -> (Vec<T>, ForwardCache<T>) {
        debug_assert_eq!(x.len(), b * self.input_len());
        let mut caches = Vec::with_capacity(if keep_cache { self.plan.len() } else { 0 });
        let mode = self.mode;
        for (li, layer) in self.plan.iter().enumerate() {
            if let Some(t) = trace.as_deref_mut() {
                t.push(x.clone());
            }
            let (y, cache) = match *layer {
                LayerPlan::Linear { inputs, outputs } => {
                    let pi = self.param_index[li].expect("linear layer has parameters");
                    let y = linear_forward(&x, b, inputs, outputs, &self.params[pi], &self.params[pi + 1]);
                    (y, LayerCache::Input(x))
                }
                LayerPlan::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    in_hw,
                } => {
                    let pi = self.param_index[li].expect("conv layer has parameters");
                    let geo = ConvGeometry::new(in_channels, out_channels, kernel, in_hw);
                    let y = conv_forward(&x, b, &geo, &self.params[pi], &self.params[pi + 1]);
                    (y, LayerCache::Input(x))
                }
                LayerPlan::MaxPool {
                    channels,
                    in_hw,
                    size,
                    stride,
                } => {
                    let (y, arg) = maxpool_forward(&x, b, channels, in_hw, size, stride);
                    (y, LayerCache::Argmax(arg))
                }
                LayerPlan::Activation(role) => {
                    let af = self.spec.af_triple.get(role);
                    if keep_cache {
                        let mut d = vec![T::zero(); x.len()];
                        af.apply(&mut x, Some(&mut d), mode, &mut self.rng);
                        (x, LayerCache::Derivative(d))
                    } else {
                        af.apply(&mut x, None, mode, &mut self.rng);
                        (x, LayerCache::Nothing)
                    }
                }
                LayerPlan::Dropout { p } => {
                    if mode == Mode::Train && p > 0.0 {
                        let keep = T::of(1.0 / (1.0 - p));
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| if self.rng.random::<f64>() < p { T::zero() } else { keep })
                            .collect();
                        for (v, m) in x.iter_mut().zip(&mask) {
                            *v *= *m;
                        }
                        (x, LayerCache::Mask(mask))
                    } else {
                        (x, LayerCache::Nothing)
                    }
                }
            };
            if keep_cache {
                caches.push(cache);
            }
            x = y;
        }
        (x, ForwardCache { batch: b, layers: caches })
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// gradient with respect to the logits. Non-finite values are passed
    /// through unchanged.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if dlogits.shape() != [cache.batch, self.spec.n_classes] {
            return Err(Error::Shape(format!(
                "dlogits shape {:?}, expected [{}, {}]",
                dlogits.shape(),
                cache.batch,
                self.spec.n_classes
            )));
        }
        let mut grads = self.zero_grads();
        self.backward_into(cache, dlogits.data().to_vec(), &mut grads);
        Ok(grads)
    }

    /// Adds this batch's parameter gradients into `grads`.
    pub(crate) fn backward_into(&self, cache: &ForwardCache<T>, mut dy: Vec<T>, grads: &mut [Tensor<T>]) {
        assert_eq!(cache.layers.len(), self.plan.len(), "forward cache was not kept");
        let b = cache.batch;
        for li in (0..self.plan.len()).rev() {
            let need_dx = li > 0;
            dy = match (self.plan[li], &cache.layers[li]) {
                (LayerPlan::Linear { inputs, outputs }, LayerCache::Input(x)) => {
                    let pi = self.param_index[li].expect("linear layer has parameters");
                    let (gw, gb) = pair_mut(grads, pi);
                    linear_backward(x, &dy, b, inputs, outputs, &self.params[pi], gw, gb, need_dx)
                }
                (
                    LayerPlan::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        in_hw,
                    },
                    LayerCache::Input(x),
                ) => {
                    let pi = self.param_index[li].expect("conv layer has parameters");
                    let geo = ConvGeometry::new(in_channels, out_channels, kernel, in_hw);
                    let (gw, gb) = pair_mut(grads, pi);
                    conv_backward(x, &dy, b, &geo, &self.params[pi], gw, gb, need_dx)
                }
                (
                    LayerPlan::MaxPool {
                        channels, in_hw: [h, w], ..
                    },
                    LayerCache::Argmax(arg),
                ) => {
                    let in_len = channels * h * w;
                    let out_len = arg.len() / b;
                    let mut dx = vec![T::zero(); b * in_len];
                    for s in 0..b {
                        let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                        for (g, &a) in dy[s * out_len..(s + 1) * out_len].iter().zip(&arg[s * out_len..]) {
                            dxs[a as usize] += *g;
                        }
                    }
                    dx
                }
                (LayerPlan::Activation(_), LayerCache::Derivative(d)) => {
                    for (g, dv) in dy.iter_mut().zip(d) {
                        *g *= *dv;
                    }
                    dy
                }
                (LayerPlan::Dropout { .. }, LayerCache::Mask(m)) => {
                    for (g, mv) in dy.iter_mut().zip(m) {
                        *g *= *mv;
                    }
                    dy
                }
                (LayerPlan::Dropout { .. }, LayerCache::Nothing) => dy,
                (layer, _) => unreachable!("cache does not match layer {layer:?}"),
            };
        }
    }
}

fn pair_mut<T>(v: &mut [T], i: usize) -> (&mut T, &mut T) {
    let (a, b) = v.split_at_mut(i + 1);
    (&mut a[i], &mut b[0])
}

fn linear_forward<T: Real>(x: &[T], b: usize, inputs: usize, outputs: usize, w: &Tensor<T>, bias: &Tensor<T>) -> Vec<T> {
    let mut y = vec![T::zero(); b * outputs];
    T::gemm(b, inputs, outputs, x, (inputs, 1), w.data(), (1, inputs), &mut y, (outputs, 1), false);
    for row in y.chunks_exact_mut(outputs) {
        for (v, bv) in row.iter_mut().zip(bias.data()) {
            *v += *bv;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    b: usize,
    inputs: usize,
    outputs: usize,
    w: &Tensor<T>,
    gw: &mut Tensor<T>,
    gb: &mut Tensor<T>,
    need_dx: bool,
) -> Vec<T> {
    T::gemm(outputs, b, inputs, dy, (1, outputs), x, (inputs, 1), gw.data_mut(), (inputs, 1), true);
    let gbd = gb.data_mut();
    for row in dy.chunks_exact(outputs) {
        for (g, v) in gbd.iter_mut().zip(row) {
            *g += *v;
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); b * inputs];
    T::gemm(b, outputs, inputs, dy, (outputs, 1), w.data(), (inputs, 1), &mut dx, (inputs, 1), false);
    dx
}

/// Valid (unpadded) stride-1 convolution sizes.
struct ConvGeometry {
    in_c: usize,
    out_c: usize,
    k: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new(in_c: usize, out_c: usize, k: usize, [h, w]: [usize; 2]) -> Self {
        Self {
            in_c,
            out_c,
            k,
            h,
            w,
            oh: h - k + 1,
            ow: w - k + 1,
        }
    }

    fn in_len(&self) -> usize {
        self.in_c * self.h * self.w
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    /// `cols[(c, ki, kj), (oy, ox)] = x[c, oy + ki, ox + kj]`.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let src = (c * self.h + oy + ki) * self.w + kj;
                        dst[oy * self.ow..(oy + 1) * self.ow].copy_from_slice(&x[src..src + self.ow]);
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: accumulates `cols` into `dx`.
    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let dst = (c * self.h + oy + ki) * self.w + kj;
                        for (d, s) in dx[dst..dst + self.ow].iter_mut().zip(&src[oy * self.ow..(oy + 1) * self.ow]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Real>(x: &[T], b: usize, g: &ConvGeometry, w: &Tensor<T>, bias: &Tensor<T>) -> Vec<T> {
    let (p, patch, in_len) = (g.positions(), g.patch(), g.in_len());
    let out_len = g.out_c * p;
    let mut y = vec![T::zero(); b * out_len];
    let mut cols = vec![T::zero(); patch * p];
    for s in 0..b {
        g.im2col(&x[s * in_len..(s + 1) * in_len], &mut cols);
        let ys = &mut y[s * out_len..(s + 1) * out_len];
        T::gemm(g.out_c, patch, p, w.data(), (patch, 1), &cols, (p, 1), ys, (p, 1), false);
        for (row, bv) in ys.chunks_exact_mut(p).zip(bias.data()) {
            for v in row {
                *v += *bv;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    x: &[T],
    dy: &[T],
    b: usize,
    g: &ConvGeometry,
    w: &Tensor<T>,
    gw: &mut Tensor<T>,
    gb: &mut Tensor<T>,
    need_dx: bool,
) -> Vec<T> {
    let (p, patch, in_len) = (g.positions(), g.patch(), g.in_len());
    let out_len = g.out_c * p;
    let mut cols = vec![T::zero(); patch * p];
    let mut dcols = if need_dx { vec![T::zero(); patch * p] } else { Vec::new() };
    let mut dx = if need_dx { vec![T::zero(); b * in_len] } else { Vec::new() };
    for s in 0..b {
        let dys = &dy[s * out_len..(s + 1) * out_len];
        g.im2col(&x[s * in_len..(s + 1) * in_len], &mut cols);
        T::gemm(g.out_c, p, patch, dys, (p, 1), &cols, (1, p), gw.data_mut(), (patch, 1), true);
        for (gbv, row) in gb.data_mut().iter_mut().zip(dys.chunks_exact(p)) {
            *gbv += row.iter().copied().sum::<T>();
        }
        if need_dx {
            T::gemm(patch, g.out_c, p, w.data(), (1, patch), dys, (p, 1), &mut dcols, (p, 1), false);
            g.col2im(&dcols, &mut dx[s * in_len..(s + 1) * in_len]);
        }
    }
    dx
}

/// Max pooling without padding. Ties go to the first position in row-major
/// window order; a NaN in the window wins so that it propagates.
fn maxpool_forward<T: Real>(x: &[T], b: usize, ch: usize, [h, w]: [usize; 2], size: usize, stride: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
    let (in_len, out_len) = (ch * h * w, ch * oh * ow);
    let mut y = Vec::with_capacity(b * out_len);
    let mut arg = Vec::with_capacity(b * out_len);
    for s in 0..b {
        let xs = &x[s * in_len..(s + 1) * in_len];
        for c in 0..ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_i = (c * h + oy * stride) * w + ox * stride;
                    let mut best = xs[best_i];
                    for ky in 0..size {
                        for kx in 0..size {
                            let i = (c * h + oy * stride + ky) * w + ox * stride + kx;
                            let v = xs[i];
                            if !best.is_nan() && (v.is_nan() || v > best) {
                                best = v;
                                best_i = i;
                            }
                        }
                    }
                    y.push(best);
                    arg.push(best_i as u32);
                }
            }
        }
    }
    (y, arg)
}
