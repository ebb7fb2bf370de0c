//! Patch-based multi-scale training with L1 loss and Adam.
//!
//! Every step draws its randomness from a ChaCha8 stream keyed by the run
//! seed and the step index, so a run resumed from a saved state continues
//! exactly as an uninterrupted one would.

mod data;
mod optim;

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{checkpoint, Network, NetworkSpec, ParamStore};
use crate::{Error, Result};

pub use data::{cut_batch, sample_batch, Augment, PatchSpec, ScaleSet, TrainingSet};
pub use optim::{adam_step, l1_loss, AdamConfig, AdamState};

pub const MODEL_FILE: &str = "model.crnk";
pub const OPTIMIZER_FILE: &str = "optimizer.crnk";
pub const STATE_FILE: &str = "state.txt";
pub const LOG_FILE: &str = "log.csv";
pub const LOG_HEADER: &str = "step,scale,loss,lr,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// LR patch side.
    pub patch_size: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub halve_every: u64,
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub scales: Vec<u32>,
    pub seed: u64,
    /// Steps between saved states when training into a directory; 0 saves
    /// only at the end.
    pub checkpoint_every: u64,
    /// Random flips and quarter turns.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            patch_size: 64,
            batch_size: 64,
            lr0: adam.lr0,
            halve_every: adam.halve_every,
            total_steps: 600_000,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            scales: vec![2, 3, 4],
            seed: 0,
            checkpoint_every: 0,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr0: self.lr0,
            halve_every: self.halve_every,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.batch_size == 0 {
            return bad("patch_size and batch_size must be positive".into());
        }
        if self.halve_every == 0 {
            return bad("halve_every must be positive".into());
        }
        for (k, v) in [("lr0", self.lr0), ("epsilon", self.epsilon)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1), got {v}"));
            }
        }
        if self.scales.is_empty() {
            return bad("no training scales".into());
        }
        if let Some(s) = self.scales.iter().find(|s| ![2, 3, 4].contains(*s)) {
            return bad(format!("unsupported training scale x{s}"));
        }
        Ok(())
    }

    /// Checks the config against a network and the data it will train on.
    pub fn validate_for(&self, spec: &NetworkSpec, set: &TrainingSet) -> Result<()> {
        self.validate()?;
        for &s in &self.scales {
            if !spec.supports(s) {
                return Err(Error::Config(format!("network has no x{s} head")));
            }
            let side = set.min_lr_side(s)?;
            if side < self.patch_size {
                return Err(Error::Config(format!(
                    "patch {} x{s} needs HR images of at least {} pixels, smallest is {}",
                    self.patch_size,
                    self.patch_size * s as usize,
                    side * s as usize
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub scale: u32,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.step, self.scale, self.loss, self.lr, self.seconds
        )
    }
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.csv());
    }
    out
}

/// Owns the parameters and optimizer state of one training run.
pub struct Trainer {
    net: Network,
    store: ParamStore<f32>,
    adam: AdamState<f32>,
    cfg: TrainConfig,
    set: TrainingSet,
    log: Vec<LogRow>,
    started: Instant,
    elapsed_before: f64,
}

impl Trainer {
    /// Fresh run with weights initialized from `cfg.seed`.
    pub fn new(spec: &NetworkSpec, set: TrainingSet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate_for(spec, &set)?;
        let (net, store) = Network::build(spec, cfg.seed)?;
        let adam = AdamState::new(&store);
        Ok(Self::assemble(net, store, adam, cfg, set, 0.0))
    }

    /// Continues from explicit parameters and optimizer state.
    pub fn from_state(
        spec: &NetworkSpec,
        store: ParamStore<f32>,
        adam: AdamState<f32>,
        set: TrainingSet,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate_for(spec, &set)?;
        let net = Network::new(spec)?;
        net.check_store(&store)?;
        net.check_store(&adam.m)?;
        net.check_store(&adam.v)?;
        Ok(Self::assemble(net, store, adam, cfg, set, 0.0))
    }

    fn assemble(
        net: Network,
        store: ParamStore<f32>,
        adam: AdamState<f32>,
        cfg: TrainConfig,
        set: TrainingSet,
        elapsed_before: f64,
    ) -> Self {
        Trainer {
            net,
            store,
            adam,
            cfg,
            set,
            log: Vec::new(),
            started: Instant::now(),
            elapsed_before,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn into_store(self) -> ParamStore<f32> {
        self.store
    }

    pub fn optimizer(&self) -> &AdamState<f32> {
        &self.adam
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Completed steps.
    pub fn step_count(&self) -> u64 {
        self.adam.t
    }

    /// Rows produced by this trainer instance.
    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    /// Generator for step `step` (0-based); stream 0 is left to weight init.
    pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step + 1);
        rng
    }

    /// One optimization step on a batch at a uniformly drawn scale.
    pub fn step(&mut self) -> Result<LogRow> {
        let t = self.adam.t;
        let mut rng = Self::step_rng(self.cfg.seed, t);
        let scale = self.cfg.scales[rng.gen_range(0..self.cfg.scales.len())];
        let (lr, hr) = sample_batch::<f32>(
            &self.set,
            scale,
            self.cfg.patch_size,
            self.cfg.batch_size,
            self.cfg.augment,
            &mut rng,
        )?;
        let pass = self.net.forward(&self.store, &lr, scale)?;
        let (loss, grad) = l1_loss(&pass.output, &hr)?;
        if !loss.is_finite() {
            self.net.forward_checked(&self.store, &lr, scale)?;
            return Err(Error::NonFinite(format!("loss at step {}", t + 1)));
        }
        let grads = self.net.backward(&self.store, pass, grad)?;
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            // ReLU masks NaN activations, so the loss can stay finite.
            self.net.forward_checked(&self.store, &lr, scale)?;
            return Err(Error::NonFinite(format!(
                "gradient of {name} at step {}",
                t + 1
            )));
        }
        let rate = adam_step(&mut self.store, &grads, &mut self.adam, &self.cfg.adam())?;
        let row = LogRow {
            step: self.adam.t,
            scale,
            loss,
            lr: rate,
            seconds: self.elapsed_before + self.started.elapsed().as_secs_f64(),
        };
        self.log.push(row);
        Ok(row)
    }

    /// Steps until `total_steps` are completed.
    pub fn run(&mut self) -> Result<()> {
        while self.adam.t < self.cfg.total_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Like [`Trainer::run`], appending log rows to `dir/log.csv` and saving
    /// the state every `checkpoint_every` steps and at the end.
    pub fn run_in(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let log_path = dir.join(LOG_FILE);
        let fresh = !log_path.exists();
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        if fresh {
            writeln!(log, "{LOG_HEADER}")?;
        }
        while self.adam.t < self.cfg.total_steps {
            let row = self.step()?;
            writeln!(log, "{}", row.csv())?;
            if self.cfg.checkpoint_every > 0 && row.step % self.cfg.checkpoint_every == 0 {
                log.flush()?;
                self.save(dir)?;
            }
        }
        log.flush()?;
        self.save(dir)
    }

    /// Writes parameters, optimizer moments and the step counter.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        checkpoint::save(&self.store, dir.join(MODEL_FILE))?;
        let mut moments = ParamStore::<f32>::new();
        for (name, m) in self.adam.m.iter() {
            moments.insert(format!("m.{name}"), m.clone());
        }
        for (name, v) in self.adam.v.iter() {
            moments.insert(format!("v.{name}"), v.clone());
        }
        checkpoint::save(&moments, dir.join(OPTIMIZER_FILE))?;
        let seconds = self.elapsed_before + self.started.elapsed().as_secs_f64();
        fs::write(
            dir.join(STATE_FILE),
            format!("step={}\nseconds={seconds:.3}\n", self.adam.t),
        )?;
        Ok(())
    }

    /// Reopens a run saved by [`Trainer::save`]; `cfg` may extend
    /// `total_steps`.
    pub fn resume(dir: &Path, set: TrainingSet, cfg: TrainConfig) -> Result<Self> {
        let store = checkpoint::load::<f32>(dir.join(MODEL_FILE))?;
        let spec = checkpoint::infer_spec(&store)?;
        let moments = checkpoint::load::<f32>(dir.join(OPTIMIZER_FILE))?;
        let mut adam = AdamState::new(&store);
        for (name, slot) in adam.m.iter_mut() {
            *slot = moments.param(&format!("m.{name}"))?.clone();
        }
        for (name, slot) in adam.v.iter_mut() {
            *slot = moments.param(&format!("v.{name}"))?.clone();
        }
        let state = fs::read_to_string(dir.join(STATE_FILE))?;
        let field = |key: &str| {
            state
                .lines()
                .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
                .ok_or_else(|| Error::Checkpoint(format!("{STATE_FILE} lacks `{key}`")))
        };
        adam.t = field("step")?
            .trim()
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad step in {STATE_FILE}")))?;
        let seconds = field("seconds")?.trim().parse().unwrap_or(0.0);
        let mut trainer = Trainer::from_state(&spec, store, adam, set, cfg)?;
        trainer.elapsed_before = seconds;
        Ok(trainer)
    }
}

/// Trains `spec` from scratch for `cfg.total_steps` steps.
pub fn train(
    spec: &NetworkSpec,
    set: TrainingSet,
    cfg: TrainConfig,
) -> Result<(ParamStore<f32>, Vec<LogRow>)> {
    let mut trainer = Trainer::new(spec, set, cfg)?;
    trainer.run()?;
    let log = trainer.log.clone();
    Ok((trainer.into_store(), log))
}
