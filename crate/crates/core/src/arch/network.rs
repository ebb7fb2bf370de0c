use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Cascade, CascadeCache, ConvLayer, Ctx, Head, Module, Unit, UnitCache};
use super::params::ParamStore;
use super::spec::{NetworkSpec, UnitKind};
use crate::tensor::{Real, Tensor};
use crate::{Error, Result};

type Block = Cascade<Unit>;
type Body = Cascade<Block>;

/// A built network: layer inventory plus the spec it came from.
///
/// The network is immutable and holds no tensors; all parameters live in a
/// [`ParamStore`] passed to each call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    spec: NetworkSpec,
    entry: ConvLayer,
    body: Body,
    heads: BTreeMap<u32, Head>,
    exit: ConvLayer,
}

/// Output of a forward pass, with activations retained for [`Network::backward`].
pub struct ForwardPass<T: Real> {
    pub output: Tensor<T>,
    /// Multiply-accumulates executed by convolutions (padded taps included).
    pub macs: u64,
    scale: u32,
    cache: Option<NetCache<T>>,
}

struct NetCache<T: Real> {
    entry: Tensor<T>,
    body: CascadeCache<CascadeCache<UnitCache<T>, T>, T>,
    head: Vec<Tensor<T>>,
    exit: Tensor<T>,
}

impl Network {
    /// Layer inventory for `spec`; does not allocate parameters.
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        let g = spec.group_size;

        let unit = |prefix: &str| -> Unit {
            let convs = match spec.unit {
                UnitKind::Residual => vec![
                    ConvLayer::new(format!("{prefix}.conv1"), c, c, 3, g),
                    ConvLayer::new(format!("{prefix}.conv2"), c, c, 3, g),
                ],
                UnitKind::Efficient => vec![
                    ConvLayer::new(format!("{prefix}.conv1"), c, c, 3, g),
                    ConvLayer::new(format!("{prefix}.conv2"), c, c, 3, g),
                    ConvLayer::new(format!("{prefix}.pw"), c, c, 1, 1),
                ],
            };
            Unit { convs }
        };
        let fusions = |prefix: &str, n: usize| -> Vec<ConvLayer> {
            (1..=n)
                .map(|k| ConvLayer::new(format!("{prefix}fuse{k}"), c * (k + 1), c, 1, 1))
                .collect()
        };

        let blocks = (1..=spec.blocks)
            .map(|b| Cascade {
                stages: (1..=spec.units_per_block)
                    .map(|u| unit(&format!("body.b{b}.u{u}")))
                    .collect(),
                fusions: spec
                    .local_cascading
                    .then(|| fusions(&format!("body.b{b}."), spec.units_per_block)),
            })
            .collect();
        let body = Cascade {
            stages: blocks,
            fusions: spec.global_cascading.then(|| fusions("body.", spec.blocks)),
        };

        let heads = spec
            .scales
            .iter()
            .map(|&s| {
                let factors: &[usize] = match s {
                    2 => &[2],
                    3 => &[3],
                    4 => &[2, 2],
                    _ => unreachable!("validated"),
                };
                let stages = factors
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| {
                        let name = format!("head.x{s}.s{}", i + 1);
                        (ConvLayer::new(name, c, c * r * r, 3, g), r)
                    })
                    .collect();
                (s, Head { scale: s, stages })
            })
            .collect();

        Ok(Network {
            spec: spec.clone(),
            entry: ConvLayer::new("entry", 3, c, 3, 1),
            body,
            heads,
            exit: ConvLayer::new("exit", c, 3, 3, 1),
        })
    }

    /// Builds the network and a freshly initialized parameter store.
    pub fn build<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<(Self, ParamStore<T>)> {
        let net = Network::new(spec)?;
        let mut store = net.zero_store()?;
        net.init_weights(&mut store, seed);
        Ok((net, store))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Every convolution in execution order, all heads included.
    pub fn conv_layers(&self) -> Vec<&ConvLayer> {
        let mut out = vec![&self.entry];
        for (b, block) in self.body.stages.iter().enumerate() {
            for (u, unit) in block.stages.iter().enumerate() {
                out.extend(unit.convs.iter());
                if let Some(f) = &block.fusions {
                    out.push(&f[u]);
                }
            }
            if let Some(f) = &self.body.fusions {
                out.push(&f[b]);
            }
        }
        for head in self.heads.values() {
            out.extend(head.stages.iter().map(|(c, _)| c));
        }
        out.push(&self.exit);
        out
    }

    /// For a shared layer, the canonical layer name it resolves to.
    fn canonical_layer(&self, name: &str) -> Option<String> {
        if !self.spec.recursive {
            return None;
        }
        let rest = name.strip_prefix("body.b")?;
        let (block, tail) = rest.split_once('.')?;
        if block == "1" || !tail.starts_with('u') {
            return None;
        }
        Some(format!("body.b1.{tail}"))
    }

    /// All-zero store with the canonical entries and sharing aliases.
    pub fn zero_store<T: Real>(&self) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        let mut aliases = Vec::new();
        for conv in self.conv_layers() {
            match self.canonical_layer(&conv.name) {
                Some(canonical) => {
                    aliases.push((conv.weight_name(), format!("{canonical}.weight")));
                    aliases.push((conv.bias_name(), format!("{canonical}.bias")));
                }
                None => {
                    store.insert(conv.weight_name(), Tensor::zeros(conv.weight_shape()));
                    store.insert(conv.bias_name(), Tensor::zeros(conv.bias_shape()));
                }
            }
        }
        for (alias, canonical) in aliases {
            store.alias(alias, canonical)?;
        }
        Ok(store)
    }

    /// Input channel count of the layer owning each canonical parameter.
    fn fan_in(&self) -> HashMap<String, usize> {
        let mut map = HashMap::new();
        for conv in self.conv_layers() {
            map.insert(conv.weight_name(), conv.in_channels);
            map.insert(conv.bias_name(), conv.in_channels);
        }
        map
    }

    /// Samples every canonical weight and bias i.i.d. from `U(-k, k)` with
    /// `k = 1/sqrt(c_in)`, `c_in` being the layer's full input channel count.
    pub fn init_weights<T: Real>(&self, store: &mut ParamStore<T>, seed: u64) {
        let fan_in = self.fan_in();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, tensor) in store.iter_mut() {
            let cin = fan_in.get(name).copied().unwrap_or(1);
            fill_uniform(tensor, 1.0 / (cin as f64).sqrt(), &mut rng);
        }
    }

    /// Checks that `store` has exactly this network's layout.
    pub fn check_store<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        let expected = self.zero_store::<T>()?;
        let mismatch = |msg: String| Err(Error::Checkpoint(msg));
        if store.len() != expected.len() {
            return mismatch(format!(
                "expected {} canonical entries, found {}",
                expected.len(),
                store.len()
            ));
        }
        for (name, t) in expected.iter() {
            match store.iter().find(|(n, _)| *n == name) {
                Some((_, have)) if have.shape() == t.shape() => {}
                Some((_, have)) => {
                    return mismatch(format!(
                        "`{name}` has shape {}, expected {}",
                        have.shape(),
                        t.shape()
                    ))
                }
                None => return mismatch(format!("missing entry `{name}`")),
            }
        }
        for (alias, canonical) in expected.aliases() {
            if store.resolve(alias) != canonical {
                return mismatch(format!("`{alias}` must alias `{canonical}`"));
            }
        }
        Ok(())
    }

    fn head(&self, scale: u32) -> Result<&Head> {
        self.heads.get(&scale).ok_or(Error::UnsupportedScale(scale))
    }

    fn run<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        scale: u32,
        mut ctx: Ctx,
    ) -> Result<ForwardPass<T>> {
        let head = self.head(scale)?;
        let xs = x.shape();
        if xs.c != 3 {
            return Err(Error::shape("forward", "input channels", 3, xs.c));
        }
        let (h0, entry) = self.entry.forward(store, x, &mut ctx)?;
        let (hb, body) = self.body.forward(store, &h0, &mut ctx)?;
        let (up, head_cache) = head.forward(store, &hb, &mut ctx)?;
        let (output, exit) = self.exit.forward(store, &up, &mut ctx)?;
        let cache = ctx.retain.then_some(NetCache {
            entry,
            body,
            head: head_cache,
            exit,
        });
        Ok(ForwardPass {
            output,
            macs: ctx.macs,
            scale,
            cache,
        })
    }

    /// Forward pass retaining activations for [`Network::backward`].
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        scale: u32,
    ) -> Result<ForwardPass<T>> {
        let ctx = Ctx {
            retain: true,
            ..Ctx::default()
        };
        self.run(store, x, scale, ctx)
    }

    /// Forward pass that keeps no activations.
    pub fn infer<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        scale: u32,
    ) -> Result<Tensor<T>> {
        Ok(self.run(store, x, scale, Ctx::default())?.output)
    }

    /// Like [`Network::infer`] but also returns the executed MAC count.
    pub fn count_macs<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        scale: u32,
    ) -> Result<u64> {
        Ok(self.run(store, x, scale, Ctx::default())?.macs)
    }

    /// Forward pass failing with [`Error::NonFinite`] naming the first
    /// convolution whose output is not finite.
    pub fn forward_checked<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        scale: u32,
    ) -> Result<Tensor<T>> {
        x.check_finite("input")?;
        let ctx = Ctx {
            check_finite: true,
            ..Ctx::default()
        };
        Ok(self.run(store, x, scale, ctx)?.output)
    }

    /// Gradients of `Σ grad_out · output` with respect to every canonical
    /// parameter. Shared parameters receive the sum over all their uses.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        pass: ForwardPass<T>,
        grad_out: Tensor<T>,
    ) -> Result<ParamStore<T>> {
        let (grads, _) = self.backward_with_input(store, pass, grad_out)?;
        Ok(grads)
    }

    /// As [`Network::backward`], also returning the gradient with respect to
    /// the input image.
    pub fn backward_with_input<T: Real>(
        &self,
        store: &ParamStore<T>,
        pass: ForwardPass<T>,
        grad_out: Tensor<T>,
    ) -> Result<(ParamStore<T>, Tensor<T>)> {
        let cache = pass
            .cache
            .ok_or_else(|| Error::Spec("forward pass did not retain activations".into()))?;
        if grad_out.shape() != pass.output.shape() {
            return Err(Error::shape(
                "backward",
                "gradient numel",
                pass.output.numel(),
                grad_out.numel(),
            ));
        }
        let mut grads = store.zeros_like();
        let g = self
            .exit
            .backward(store, cache.exit, grad_out, &mut grads)?;
        let g = self
            .head(pass.scale)?
            .backward(store, cache.head, g, &mut grads)?;
        let g = self.body.backward(store, cache.body, g, &mut grads)?;
        let g = self.entry.backward(store, cache.entry, g, &mut grads)?;
        Ok((grads, g))
    }
}

fn fill_uniform<T: Real>(t: &mut Tensor<T>, k: f64, rng: &mut ChaCha8Rng) {
    let bound = T::from_f64(k);
    for v in t.data_mut() {
        // Open interval: reject draws that round onto the bound.
        *v = loop {
            let s = T::from_f64(rng.gen_range(-k..k));
            if s.abs() < bound {
                break s;
            }
        };
    }
}
