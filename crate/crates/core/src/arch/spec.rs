use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

pub const SUPPORTED_SCALES: [u32; 3] = [2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain ResNet chain, no cascading.
    Baseline,
    /// Global cascading only.
    CarnNl,
    /// Local cascading only.
    CarnNg,
    Carn,
    /// Residual-E units with group 4, units shared across blocks.
    CarnM,
    Custom,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Baseline,
        Variant::CarnNl,
        Variant::CarnNg,
        Variant::Carn,
        Variant::CarnM,
        Variant::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::CarnNl => "carn-nl",
            Variant::CarnNg => "carn-ng",
            Variant::Carn => "carn",
            Variant::CarnM => "carn-m",
            Variant::Custom => "custom",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown variant `{s}`")))
    }
}

/// Residual unit flavour inside a cascading block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitKind {
    /// Two 3x3 convolutions.
    Residual,
    /// Two grouped 3x3 convolutions and a pointwise convolution.
    Efficient,
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" | "plain" => Ok(UnitKind::Residual),
            "efficient" | "residual-e" => Ok(UnitKind::Efficient),
            _ => Err(Error::Spec(format!("unknown unit kind `{s}`"))),
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Residual => "residual",
            UnitKind::Efficient => "efficient",
        })
    }
}

/// Declarative description of one network variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub blocks: usize,
    pub units_per_block: usize,
    pub channels: usize,
    /// Group count of every 3x3 convolution inside units and upsample heads.
    pub group_size: usize,
    pub unit: UnitKind,
    /// Share the residual units of block 1 with every later block.
    pub recursive: bool,
    pub scales: Vec<u32>,
    pub local_cascading: bool,
    pub global_cascading: bool,
}

impl NetworkSpec {
    /// Preset for a named variant with 3 blocks of 3 units, 64 channels and
    /// heads for x2, x3 and x4.
    pub fn preset(variant: Variant) -> Self {
        let mut spec = NetworkSpec {
            variant,
            blocks: 3,
            units_per_block: 3,
            channels: 64,
            group_size: 1,
            unit: UnitKind::Residual,
            recursive: false,
            scales: SUPPORTED_SCALES.to_vec(),
            local_cascading: true,
            global_cascading: true,
        };
        match variant {
            Variant::Baseline => {
                spec.local_cascading = false;
                spec.global_cascading = false;
            }
            Variant::CarnNl => spec.local_cascading = false,
            Variant::CarnNg => spec.global_cascading = false,
            Variant::Carn | Variant::Custom => {}
            Variant::CarnM => {
                spec.group_size = 4;
                spec.unit = UnitKind::Efficient;
                spec.recursive = true;
            }
        }
        spec
    }

    pub fn with_scales(mut self, scales: &[u32]) -> Self {
        self.scales = scales.to_vec();
        self.scales.sort_unstable();
        self.scales.dedup();
        self
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn supports(&self, scale: u32) -> bool {
        self.scales.contains(&scale)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(msg));
        if self.blocks == 0 || self.units_per_block == 0 || self.channels == 0 {
            return fail("blocks, units_per_block and channels must be positive".into());
        }
        if self.group_size == 0 || !self.channels.is_multiple_of(self.group_size) {
            return fail(format!(
                "channels ({}) must be divisible by group_size ({})",
                self.channels, self.group_size
            ));
        }
        if self.scales.is_empty() {
            return fail("at least one scale is required".into());
        }
        if let Some(s) = self.scales.iter().find(|s| !SUPPORTED_SCALES.contains(s)) {
            return fail(format!("unsupported scale x{s} (supported: 2, 3, 4)"));
        }
        if self.variant != Variant::Custom {
            let preset = NetworkSpec::preset(self.variant);
            let pinned = [
                (
                    "local_cascading",
                    self.local_cascading == preset.local_cascading,
                ),
                (
                    "global_cascading",
                    self.global_cascading == preset.global_cascading,
                ),
                ("group_size", self.group_size == preset.group_size),
                ("recursive", self.recursive == preset.recursive),
                ("unit", self.unit == preset.unit),
            ];
            if let Some((key, _)) = pinned.iter().find(|(_, ok)| !ok) {
                return fail(format!(
                    "variant {} pins `{key}`; use variant=custom to change it",
                    self.variant
                ));
            }
        }
        Ok(())
    }
}
