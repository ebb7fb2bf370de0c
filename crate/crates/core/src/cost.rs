//! Execution-free parameter and Mult-Adds accounting.
//!
//! A convolution costs `K² · (C_in / G) · C_out · H_out · W_out`
//! multiply-accumulates. Bias adds, activations, residual additions,
//! concatenation and pixel shuffle are free. Body layers run at
//! `hr / scale` (kept fractional when the HR size is not a multiple of the
//! scale), upsample convolutions at their stage input size, and the exit
//! convolution at HR.

use std::fmt::Write as _;

use crate::arch::{Network, NetworkSpec, UnitKind};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    /// Zero for a layer reusing shared parameters.
    pub params: u64,
    /// Zero for an inactive upsample head.
    pub mult_adds: f64,
    pub out_w: f64,
    pub out_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub per_layer: Vec<LayerCost>,
    pub total_params: u64,
    pub total_mult_adds: f64,
    pub hr_resolution: (u32, u32),
    pub scale: u32,
}

struct Conv {
    k: u64,
    cin: u64,
    cout: u64,
    groups: u64,
}

impl Conv {
    fn new(k: usize, cin: usize, cout: usize, groups: usize) -> Self {
        Conv {
            k: k as u64,
            cin: cin as u64,
            cout: cout as u64,
            groups: groups as u64,
        }
    }

    fn params(&self) -> u64 {
        self.k * self.k * (self.cin / self.groups) * self.cout + self.cout
    }

    fn macs_per_pixel(&self) -> u64 {
        self.k * self.k * (self.cin / self.groups) * self.cout
    }
}

/// Parameter count and Mult-Adds of `spec` producing an `hr_w x hr_h` image
/// at `scale`. Parameters include every upsample head; Mult-Adds only the
/// active one.
pub fn count(spec: &NetworkSpec, hr_w: u32, hr_h: u32, scale: u32) -> Result<CostReport> {
    spec.validate()?;
    if !spec.supports(scale) {
        return Err(Error::UnsupportedScale(scale));
    }
    if hr_w == 0 || hr_h == 0 {
        return Err(Error::Spec("HR resolution must be positive".into()));
    }
    let c = spec.channels;
    let g = spec.group_size;
    let hr_pixels = hr_w as f64 * hr_h as f64;
    // Resolution after dividing HR by `f` in each dimension.
    let at = |f: u32| {
        (
            hr_w as f64 / f as f64,
            hr_h as f64 / f as f64,
            hr_pixels / (f * f) as f64,
        )
    };

    let mut rows = Vec::new();
    let mut push = |name: String, conv: Conv, res: Option<(f64, f64, f64)>, owns_params: bool| {
        let (out_w, out_h, pixels) = res.unwrap_or((0.0, 0.0, 0.0));
        rows.push(LayerCost {
            name,
            params: if owns_params { conv.params() } else { 0 },
            mult_adds: if res.is_some() {
                conv.macs_per_pixel() as f64 * pixels
            } else {
                0.0
            },
            out_w,
            out_h,
        });
    };

    let lr = Some(at(scale));
    push("entry".into(), Conv::new(3, 3, c, 1), lr, true);
    for b in 1..=spec.blocks {
        let owns = !spec.recursive || b == 1;
        for u in 1..=spec.units_per_block {
            let p = format!("body.b{b}.u{u}");
            push(format!("{p}.conv1"), Conv::new(3, c, c, g), lr, owns);
            push(format!("{p}.conv2"), Conv::new(3, c, c, g), lr, owns);
            if spec.unit == UnitKind::Efficient {
                push(format!("{p}.pw"), Conv::new(1, c, c, 1), lr, owns);
            }
            if spec.local_cascading {
                push(
                    format!("body.b{b}.fuse{u}"),
                    Conv::new(1, c * (u + 1), c, 1),
                    lr,
                    true,
                );
            }
        }
        if spec.global_cascading {
            push(
                format!("body.fuse{b}"),
                Conv::new(1, c * (b + 1), c, 1),
                lr,
                true,
            );
        }
    }
    for &s in &spec.scales {
        let factors: &[u32] = if s == 4 {
            &[2, 2]
        } else {
            std::slice::from_ref(&s)
        };
        let mut divisor = s;
        for (i, &r) in factors.iter().enumerate() {
            let res = (s == scale).then(|| at(divisor));
            let cout = c * (r * r) as usize;
            push(
                format!("head.x{s}.s{}", i + 1),
                Conv::new(3, c, cout, g),
                res,
                true,
            );
            divisor /= r;
        }
    }
    push("exit".into(), Conv::new(3, c, 3, 1), Some(at(1)), true);

    let total_params = rows.iter().map(|r| r.params).sum();
    let total_mult_adds = rows.iter().map(|r| r.mult_adds).sum();
    Ok(CostReport {
        per_layer: rows,
        total_params,
        total_mult_adds,
        hr_resolution: (hr_w, hr_h),
        scale,
    })
}

/// Cost of a residual-E unit relative to a plain residual unit:
/// `1/G + 1/(2K²)`.
pub fn residual_e_ratio(groups: u32, kernel: u32) -> f64 {
    let k2 = (kernel * kernel) as f64;
    1.0 / groups as f64 + 1.0 / (2.0 * k2)
}

/// Checks the analytic counts against a built network: canonical parameter
/// count of its store and the MAC counter of an executed forward pass, for
/// every supported scale.
pub fn verify_against_built(spec: &NetworkSpec) -> Result<()> {
    let net = Network::new(spec)?;
    let store = net.zero_store::<f32>()?;
    let (lr_h, lr_w) = (4usize, 5usize);
    let x = Tensor::<f32>::zeros(Shape::new(1, 3, lr_h, lr_w));
    for &s in &spec.scales {
        let (hr_w, hr_h) = (lr_w as u32 * s, lr_h as u32 * s);
        let report = count(spec, hr_w, hr_h, s)?;
        if report.total_params != store.num_params() as u64 {
            return Err(Error::CostMismatch(format!(
                "{} x{s}: analytic params {} != built {}",
                spec.variant,
                report.total_params,
                store.num_params()
            )));
        }
        let macs = net.count_macs(&store, &x, s)?;
        if report.total_mult_adds != macs as f64 {
            return Err(Error::CostMismatch(format!(
                "{} x{s}: analytic Mult-Adds {} != executed {macs}",
                spec.variant, report.total_mult_adds
            )));
        }
    }
    Ok(())
}

impl CostReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,name,params,mult_adds,out_w,out_h\n");
        for (i, r) in self.per_layer.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                r.name, r.params, r.mult_adds, r.out_w, r.out_h
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>10} {:>14} {:>20}",
            "layer", "params", "mult-adds", "output"
        );
        for r in &self.per_layer {
            let res = if r.mult_adds > 0.0 {
                format!("{}x{}", trim(r.out_w), trim(r.out_h))
            } else {
                "-".into()
            };
            let _ = writeln!(
                out,
                "{:<22} {:>10} {:>13.3}G {:>20}",
                r.name,
                r.params,
                r.mult_adds / 1e9,
                res
            );
        }
        let _ = writeln!(
            out,
            "total: {} params ({:.0}K), {:.1}G Mult-Adds at {}x{} (x{})",
            self.total_params,
            self.total_params as f64 / 1e3,
            self.total_mult_adds / 1e9,
            self.hr_resolution.0,
            self.hr_resolution.1,
            self.scale
        );
        out
    }
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v}")
    } else {
        format!("{v:.2}")
    }
}

/// One point of a group-size / recursion sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub groups: usize,
    pub recursive: bool,
    pub params: u64,
    /// Parameters before the upsample heads (entry conv and cascading body).
    pub body_params: u64,
    pub mult_adds: f64,
}

/// Residual-E CARN with the given group size, optionally recursive.
pub fn sweep_spec(base: &NetworkSpec, groups: usize, recursive: bool) -> NetworkSpec {
    let mut spec = base.clone();
    spec.variant = crate::arch::Variant::Custom;
    spec.unit = UnitKind::Efficient;
    spec.group_size = groups;
    spec.recursive = recursive;
    spec.local_cascading = true;
    spec.global_cascading = true;
    spec
}

pub fn sweep_point(spec: &NetworkSpec, hr_w: u32, hr_h: u32, scale: u32) -> Result<SweepPoint> {
    let report = count(spec, hr_w, hr_h, scale)?;
    let body_params = report
        .per_layer
        .iter()
        .filter(|r| !r.name.starts_with("head.") && r.name != "exit")
        .map(|r| r.params)
        .sum();
    Ok(SweepPoint {
        groups: spec.group_size,
        recursive: spec.recursive,
        params: report.total_params,
        body_params,
        mult_adds: report.total_mult_adds,
    })
}
