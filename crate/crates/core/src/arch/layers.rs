//! Layer descriptors with paired forward/backward passes.
//!
//! Layers hold no tensors; parameters are looked up by name in a
//! [`ParamStore`], which makes sharing a matter of aliasing names.

use super::params::ParamStore;
use crate::tensor::{
    add, add_assign, concat_channels, conv2d, conv2d_backward, conv2d_macs, pixel_shuffle,
    pixel_unshuffle, relu, relu_backward, split_channels, ConvParams, Real, Shape, Tensor,
};
use crate::Result;

/// Per-pass bookkeeping.
#[derive(Debug, Default)]
pub(crate) struct Ctx {
    /// Multiply-accumulates executed so far.
    pub macs: u64,
    /// Keep activations for a backward pass.
    pub retain: bool,
    /// Fail on the first layer producing a non-finite value.
    pub check_finite: bool,
}

impl Ctx {
    fn keep<T: Real>(&self, t: &Tensor<T>) -> Tensor<T> {
        if self.retain {
            t.clone()
        } else {
            Tensor::zeros(Shape::new(0, 0, 0, 0))
        }
    }
}

pub(crate) trait Module {
    type Cache<T: Real>;

    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, Self::Cache<T>)>;

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: Self::Cache<T>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub groups: usize,
}

impl ConvLayer {
    pub fn new(
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        kernel: usize,
        groups: usize,
    ) -> Self {
        ConvLayer {
            name: name.into(),
            in_channels: cin,
            out_channels: cout,
            kernel,
            groups,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        )
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(self.out_channels, 1, 1, 1)
    }

    pub fn params<'a, T: Real>(&self, store: &'a ParamStore<T>) -> Result<ConvParams<'a, T>> {
        Ok(ConvParams::new(
            store.param(&self.weight_name())?,
            store.param(&self.bias_name())?.data(),
            self.groups,
        ))
    }
}

impl Module for ConvLayer {
    type Cache<T: Real> = Tensor<T>;

    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let p = self.params(store)?;
        let y = conv2d(x, &p)?;
        ctx.macs += conv2d_macs(x.shape(), &p);
        if ctx.check_finite {
            y.check_finite(&self.name)?;
        }
        Ok((y, ctx.keep(x)))
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        input: Tensor<T>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        self.backward_from(store, &input, grad, grads)
    }
}

impl ConvLayer {
    fn backward_from<T: Real>(
        &self,
        store: &ParamStore<T>,
        input: &Tensor<T>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let g = conv2d_backward(input, &self.params(store)?, &grad)?;
        grads.accumulate(&self.weight_name(), &g.weight)?;
        let gb = Tensor::from_vec(self.bias_shape(), g.bias)?;
        grads.accumulate(&self.bias_name(), &gb)?;
        Ok(g.input)
    }
}

/// Residual unit: `relu(f(x) + x)`, where `f` is either two 3x3 convolutions
/// with a ReLU between, or the residual-E stack (grouped 3x3, ReLU,
/// grouped 3x3, ReLU, pointwise).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub convs: Vec<ConvLayer>,
}

pub(crate) struct UnitCache<T: Real> {
    convs: Vec<Tensor<T>>,
    /// Output after the final ReLU; its positive support equals the
    /// pre-activation sum's.
    out: Tensor<T>,
}

impl Module for Unit {
    type Cache<T: Real> = UnitCache<T>;

    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, UnitCache<T>)> {
        let mut caches = Vec::with_capacity(self.convs.len());
        let last = self.convs.len() - 1;
        let mut h: Option<Tensor<T>> = None;
        for (i, conv) in self.convs.iter().enumerate() {
            let input = h.as_ref().unwrap_or(x);
            let (y, c) = conv.forward(store, input, ctx)?;
            caches.push(c);
            h = Some(if i < last { relu(&y) } else { y });
        }
        let out = relu(&add(&h.expect("unit has convolutions"), x)?);
        Ok((
            out.clone(),
            UnitCache {
                convs: caches,
                out: ctx.keep(&out),
            },
        ))
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: UnitCache<T>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let g_sum = relu_backward(&cache.out, &grad)?;
        let mut g = g_sum.clone();
        for (i, (conv, input)) in self.convs.iter().zip(&cache.convs).enumerate().rev() {
            g = conv.backward_from(store, input, g, grads)?;
            if i > 0 {
                // `input` is the ReLU output feeding this conv.
                g = relu_backward(input, &g)?;
            }
        }
        add_assign(&mut g, &g_sum)?;
        Ok(g)
    }
}

/// Cascading over a sequence of stages.
///
/// With fusion enabled, stage `k` sees state `S[k-1]` and the next state is
/// `fuse_k([S[0], ..., S[k-1], stage_k(S[k-1])])`; without fusion the stages
/// simply chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cascade<S> {
    pub stages: Vec<S>,
    pub fusions: Option<Vec<ConvLayer>>,
}

pub(crate) struct CascadeCache<C, T: Real> {
    stages: Vec<C>,
    fusions: Vec<Tensor<T>>,
    channels: Vec<usize>,
}

impl<S: Module> Module for Cascade<S> {
    type Cache<T: Real> = CascadeCache<S::Cache<T>, T>;

    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, Self::Cache<T>)> {
        let mut states = vec![x.clone()];
        let mut cache = CascadeCache {
            stages: Vec::with_capacity(self.stages.len()),
            fusions: Vec::new(),
            channels: vec![x.shape().c],
        };
        for (k, stage) in self.stages.iter().enumerate() {
            let (r, c) = stage.forward(store, states.last().expect("non-empty"), ctx)?;
            cache.stages.push(c);
            let next = match &self.fusions {
                Some(fusions) => {
                    let mut parts: Vec<&Tensor<T>> = states.iter().collect();
                    parts.push(&r);
                    let cat = concat_channels(&parts)?;
                    let (y, fc) = fusions[k].forward(store, &cat, ctx)?;
                    cache.fusions.push(fc);
                    y
                }
                None => r,
            };
            cache.channels.push(next.shape().c);
            if self.fusions.is_some() {
                states.push(next);
            } else {
                states = vec![next];
            }
        }
        let out = states.pop().expect("non-empty");
        Ok((out, cache))
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: Self::Cache<T>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let n = self.stages.len();
        let mut state_grads: Vec<Option<Tensor<T>>> = (0..=n).map(|_| None).collect();
        state_grads[n] = Some(grad);
        let mut fusion_inputs = cache.fusions;
        let mut stage_caches = cache.stages;
        for k in (0..n).rev() {
            let g_next = state_grads[k + 1]
                .take()
                .expect("gradient flows to every state");
            let g_stage = match &self.fusions {
                Some(fusions) => {
                    let input = fusion_inputs.pop().expect("fusion cache");
                    let g_cat = fusions[k].backward(store, input, g_next, grads)?;
                    let mut widths = cache.channels[..=k].to_vec();
                    let stage_out = g_cat.shape().c - widths.iter().sum::<usize>();
                    widths.push(stage_out);
                    let mut pieces = split_channels(&g_cat, &widths)?;
                    let g_r = pieces.pop().expect("stage slice");
                    for (j, piece) in pieces.into_iter().enumerate() {
                        accumulate(&mut state_grads[j], piece)?;
                    }
                    g_r
                }
                None => g_next,
            };
            let c = stage_caches.pop().expect("stage cache");
            let g_in = self.stages[k].backward(store, c, g_stage, grads)?;
            accumulate(&mut state_grads[k], g_in)?;
        }
        Ok(state_grads[0].take().expect("input gradient"))
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => add_assign(acc, &g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Upsampling head: each stage is a convolution followed by a pixel shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub scale: u32,
    pub stages: Vec<(ConvLayer, usize)>,
}

impl Module for Head {
    type Cache<T: Real> = Vec<Tensor<T>>;

    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut h = x.clone();
        for (conv, r) in &self.stages {
            let (y, c) = conv.forward(store, &h, ctx)?;
            caches.push(c);
            h = pixel_shuffle(&y, *r)?;
        }
        Ok((h, caches))
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: Vec<Tensor<T>>,
        grad: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let mut g = grad;
        for ((conv, r), input) in self.stages.iter().zip(cache).rev() {
            g = conv.backward(store, input, pixel_unshuffle(&g, *r)?, grads)?;
        }
        Ok(g)
    }
}
