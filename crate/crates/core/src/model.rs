//! A trained network paired with its parameters.

use std::path::Path;

use crate::arch::{checkpoint, Network, NetworkSpec, ParamStore};
use crate::metrics::{ImageU8, Upscaler};
use crate::Result;

#[derive(Debug, Clone)]
pub struct Model {
    net: Network,
    store: ParamStore<f32>,
}

impl Model {
    pub fn new(spec: &NetworkSpec, store: ParamStore<f32>) -> Result<Self> {
        let net = Network::new(spec)?;
        net.check_store(&store)?;
        Ok(Model { net, store })
    }

    /// Loads a checkpoint, recovering the architecture from its layout.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let store = checkpoint::load(path)?;
        let spec = checkpoint::infer_spec(&store)?;
        Model::new(&spec, store)
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.net.spec()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }
}

impl Upscaler for Model {
    fn upscale(&self, lr: &ImageU8, scale: u32) -> Result<ImageU8> {
        let out = self
            .net
            .forward_checked(&self.store, &lr.to_tensor(), scale)?;
        ImageU8::from_tensor(&out, 0)
    }
}
