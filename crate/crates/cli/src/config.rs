//! `key = value` run configuration with command-line overrides.

use std::path::{Path, PathBuf};

use srkit::train::TrainConfig;
use srkit::{Error, NetworkSpec, Result, UnitKind, Variant};

/// Recognized keys, in the order they are documented.
pub const KEYS: &[&str] = &[
    "variant",
    "channels",
    "blocks",
    "units",
    "group_size",
    "unit",
    "recursive",
    "local_cascading",
    "global_cascading",
    "scales",
    "patch_size",
    "batch_size",
    "lr0",
    "halve_every",
    "total_steps",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "checkpoint_every",
    "augment",
    "dataset",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: NetworkSpec,
    pub train: TrainConfig,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec: NetworkSpec::preset(Variant::Carn),
            train: TrainConfig::default(),
            dataset: None,
            out: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

pub fn parse_scales(value: &str) -> Result<Vec<u32>> {
    let scales = value
        .split(',')
        .map(|s| parse_num::<u32>("scales", s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if scales.is_empty() {
        return Err(config_err("`scales` is empty"));
    }
    Ok(scales)
}

/// Splits `key=value` lines, dropping blank lines and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            config_err(format!("line {}: expected key=value, got `{line}`", i + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    /// Applies `pairs` in order over `base`. The variant is applied first so
    /// that the other keys refine its preset.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        for (k, _) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(config_err(format!("unknown key `{k}`")));
            }
        }
        let mut cfg = RunConfig::default();
        if let Some((_, v)) = pairs.iter().rev().find(|(k, _)| k == "variant") {
            let variant: Variant = v.parse()?;
            cfg.spec = NetworkSpec::preset(variant);
        }
        let mut scales = None;
        for (k, v) in pairs {
            let (spec, train) = (&mut cfg.spec, &mut cfg.train);
            match k.as_str() {
                "variant" => {}
                "channels" => spec.channels = parse_num(k, v)?,
                "blocks" => spec.blocks = parse_num(k, v)?,
                "units" => spec.units_per_block = parse_num(k, v)?,
                "group_size" => spec.group_size = parse_num(k, v)?,
                "unit" => spec.unit = v.parse::<UnitKind>()?,
                "recursive" => spec.recursive = parse_bool(k, v)?,
                "local_cascading" => spec.local_cascading = parse_bool(k, v)?,
                "global_cascading" => spec.global_cascading = parse_bool(k, v)?,
                "scales" => scales = Some(parse_scales(v)?),
                "patch_size" => train.patch_size = parse_num(k, v)?,
                "batch_size" => train.batch_size = parse_num(k, v)?,
                "lr0" => train.lr0 = parse_num(k, v)?,
                "halve_every" => train.halve_every = parse_num(k, v)?,
                "total_steps" => train.total_steps = parse_num(k, v)?,
                "beta1" => train.beta1 = parse_num(k, v)?,
                "beta2" => train.beta2 = parse_num(k, v)?,
                "epsilon" => train.epsilon = parse_num(k, v)?,
                "seed" => train.seed = parse_num(k, v)?,
                "checkpoint_every" => train.checkpoint_every = parse_num(k, v)?,
                "augment" => train.augment = parse_bool(k, v)?,
                "dataset" => cfg.dataset = Some(PathBuf::from(v)),
                "out" => cfg.out = Some(PathBuf::from(v)),
                _ => unreachable!("checked above"),
            }
        }
        if let Some(scales) = scales {
            cfg.spec = cfg.spec.with_scales(&scales);
            cfg.train.scales = cfg.spec.scales.clone();
        }
        cfg.spec.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `overrides` (`key=value`) after it.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut pairs = parse_pairs(&text)?;
        for o in overrides {
            pairs.extend(parse_pairs(o)?);
        }
        let mut cfg = Self::from_pairs(&pairs)?;
        // Relative paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
