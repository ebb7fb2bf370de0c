use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use srkit::cost::{self, sweep_point, sweep_spec};
use srkit::io::{load_dataset, read_png, write_png};
use srkit::metrics::{evaluate, Bicubic, EvalReport, ImageU8};
use srkit::train::{Trainer, TrainingSet, STATE_FILE};
use srkit::{Error, Model, NetworkSpec, Variant};

use crate::config::{parse_scales, RunConfig};
use crate::{Recursion, SpecArgs};

pub const THREADS_VAR: &str = "SRKIT_THREADS";

/// 0 success, 1 usage, 2 data, 3 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Spec(_) | Error::UnsupportedScale(_)) => 1,
        Some(Error::NonFinite(_) | Error::CostMismatch(_)) => 3,
        Some(_) => 2,
        None => 2,
    }
}

/// Caps the worker pool at `SRKIT_THREADS` when set.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "{THREADS_VAR} must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn parse_resolution(s: &str) -> srkit::Result<(u32, u32)> {
    let bad = || Error::Config(format!("resolution must look like 1280x720, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w = w.trim().parse().map_err(|_| bad())?;
    let h = h.trim().parse().map_err(|_| bad())?;
    Ok((w, h))
}

fn build_spec(args: &SpecArgs) -> srkit::Result<NetworkSpec> {
    let variant: Variant = args.variant.parse()?;
    let mut spec = NetworkSpec::preset(variant);
    if let Some(c) = args.channels {
        spec.channels = c;
    }
    if let Some(b) = args.blocks {
        spec.blocks = b;
    }
    if let Some(u) = args.units {
        spec.units_per_block = u;
    }
    if let Some(g) = args.group_size {
        spec.group_size = g;
    }
    if let Some(s) = &args.scales {
        spec = spec.with_scales(&parse_scales(s)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(Error::from)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn analyze(args: &SpecArgs, hr: &str, scale: u32, out: Option<&Path>) -> anyhow::Result<()> {
    let spec = build_spec(args)?;
    let (w, h) = parse_resolution(hr)?;
    let report = cost::count(&spec, w, h, scale)?;
    println!(
        "{} ({} channels, {}x{} blocks)",
        spec.variant, spec.channels, spec.blocks, spec.units_per_block
    );
    print!("{}", report.table());
    if let Some(path) = out {
        write_or_print(Some(path), &report.to_csv())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    groups: &[usize],
    recursive: Recursion,
    channels: usize,
    hr: &str,
    scale: u32,
    train: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let (w, h) = parse_resolution(hr)?;
    let run = train.map(|p| RunConfig::load(p, &[])).transpose()?;
    let base = match &run {
        Some(r) => r.spec.clone(),
        None => NetworkSpec::preset(Variant::Carn).with_channels(channels),
    };
    let modes: &[bool] = match recursive {
        Recursion::No => &[false],
        Recursion::Yes => &[true],
        Recursion::Both => &[false, true],
    };
    let dataset = match &run {
        Some(r) => Some(load_training_images(r)?),
        None => None,
    };

    let mut csv = String::from("groups,recursive,params,body_params,mult_adds");
    csv.push_str(if run.is_some() { ",psnr_db\n" } else { "\n" });
    for &g in groups {
        for &rec in modes {
            let spec = sweep_spec(&base, g, rec);
            spec.validate()?;
            let p = sweep_point(&spec, w, h, scale)?;
            let _ = write!(
                csv,
                "{},{},{},{},{}",
                p.groups, p.recursive, p.params, p.body_params, p.mult_adds
            );
            if let (Some(r), Some(images)) = (&run, &dataset) {
                let psnr = train_and_score(&spec, r, images)?;
                let _ = write!(csv, ",{psnr:.6}");
                eprintln!("G={g} recursive={rec}: {psnr:.3} dB");
            }
            csv.push('\n');
        }
    }
    write_or_print(out, &csv)
}

fn load_training_images(run: &RunConfig) -> anyhow::Result<Vec<(String, ImageU8)>> {
    let dir = run
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `dataset`".into()))?;
    Ok(load_dataset(dir)?)
}

/// Desk-scale training-set PSNR of `spec` at the first training scale.
fn train_and_score(
    spec: &NetworkSpec,
    run: &RunConfig,
    images: &[(String, ImageU8)],
) -> anyhow::Result<f64> {
    let hr: Vec<ImageU8> = images.iter().map(|(_, i)| i.clone()).collect();
    let set = TrainingSet::new(&hr, &run.train.scales)?;
    let mut trainer = Trainer::new(spec, set, run.train.clone())?;
    trainer.run()?;
    let model = Model::new(spec, trainer.into_store())?;
    Ok(evaluate(&model, images, run.train.scales[0])?.mean_psnr_db)
}

pub fn train(
    config: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
    resume: bool,
) -> anyhow::Result<()> {
    let mut run = RunConfig::load(config, overrides)?;
    if out.is_some() {
        run.out = out;
    }
    let out = run
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory (`out` or --out)".into()))?;
    let images: Vec<ImageU8> = load_training_images(&run)?
        .into_iter()
        .map(|(_, i)| i)
        .collect();
    let set = TrainingSet::new(&images, &run.train.scales)?;

    let mut trainer = if resume {
        let trainer = Trainer::resume(&out, set, run.train.clone())?;
        let mut saved = trainer.network().spec().clone();
        saved.variant = run.spec.variant;
        if saved != run.spec {
            return Err(Error::Config(format!(
                "{} holds a different architecture than the config describes",
                out.display()
            ))
            .into());
        }
        trainer
    } else {
        if out.join(STATE_FILE).exists() {
            return Err(Error::Config(format!(
                "{} already holds a run; pass --resume to continue it",
                out.display()
            ))
            .into());
        }
        Trainer::new(&run.spec, set, run.train.clone())?
    };
    let start = trainer.step_count();
    trainer.run_in(&out)?;
    match trainer.log().last() {
        Some(last) => println!(
            "trained steps {}..{} of {}, final loss {:.6}, state in {}",
            start + 1,
            last.step,
            run.train.total_steps,
            last.loss,
            out.display()
        ),
        None => println!("nothing to do: {} steps already completed", start),
    }
    Ok(())
}

pub fn upscale(input: &Path, out: &Path, scale: u32, ckpt: &Path) -> anyhow::Result<()> {
    let model = Model::load(ckpt)?;
    if !model.spec().supports(scale) {
        return Err(Error::UnsupportedScale(scale).into());
    }
    let lr = read_png(input)?;
    let sr = srkit::metrics::Upscaler::upscale(&model, &lr, scale)?;
    write_png(&sr, out)?;
    println!(
        "{}x{} -> {}x{}",
        lr.width(),
        lr.height(),
        sr.width(),
        sr.height()
    );
    Ok(())
}

pub fn eval(
    dataset: &Path,
    scale: u32,
    ckpt: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if !srkit::arch::SUPPORTED_SCALES.contains(&scale) {
        return Err(Error::UnsupportedScale(scale).into());
    }
    let model = ckpt.map(Model::load).transpose()?;
    if let Some(m) = &model {
        if !m.spec().supports(scale) {
            return Err(Error::UnsupportedScale(scale).into());
        }
    }
    let images = load_dataset(dataset)?;
    let bicubic = evaluate(&Bicubic, &images, scale)?;
    let mut csv = format!(
        "{}\n{}",
        EvalReport::CSV_HEADER,
        bicubic.csv_rows("bicubic:")
    );
    eprintln!(
        "bicubic: {:.3} dB / {:.4}",
        bicubic.mean_psnr_db, bicubic.mean_ssim
    );
    if let Some(m) = &model {
        let report = evaluate(m, &images, scale)?;
        csv.push_str(&report.csv_rows(""));
        eprintln!(
            "model:   {:.3} dB / {:.4}",
            report.mean_psnr_db, report.mean_ssim
        );
    }
    write_or_print(out, &csv)
}
