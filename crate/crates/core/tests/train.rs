use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srkit::arch::checkpoint;
use srkit::metrics::ImageU8;
use srkit::tensor::gradcheck::{central_differences, relative_error};
use srkit::train::{
    adam_step, cut_batch, l1_loss, sample_batch, AdamConfig, AdamState, Augment, PatchSpec,
    TrainConfig, Trainer, TrainingSet,
};
use srkit::{Error, Network, NetworkSpec, ParamStore, Shape, Tensor, Variant};

fn textured(w: usize, h: usize, k: usize) -> ImageU8 {
    ImageU8::from_fn(w, h, |x, y| {
        let v = ((x * (3 + k) + y * (5 + 2 * k)) % 97) as f64 / 96.0;
        let s = (((x as f64) * 0.7).sin() * ((y as f64) * 0.4 + k as f64).cos() + 1.0) / 2.0;
        [
            (v * 255.0) as u8,
            (s * 255.0) as u8,
            ((x * y + k * 31) % 256) as u8,
        ]
    })
}

fn tiny_spec(variant: Variant) -> NetworkSpec {
    let mut spec = NetworkSpec::preset(variant).with_channels(8);
    spec.blocks = 2;
    spec.units_per_block = 2;
    spec
}

fn tiny_config(scales: &[u32]) -> TrainConfig {
    TrainConfig {
        patch_size: 6,
        batch_size: 2,
        lr0: 1e-3,
        total_steps: 4,
        scales: scales.to_vec(),
        seed: 11,
        ..TrainConfig::default()
    }
}

fn corpus() -> Vec<ImageU8> {
    (0..3).map(|k| textured(24, 24, k)).collect()
}

#[test]
fn crops_are_deterministic_and_aligned() {
    let set = TrainingSet::new(&corpus(), &[3]).unwrap();
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        sample_batch::<f32>(&set, 3, 5, 4, false, &mut rng).unwrap()
    };
    let (lr_a, hr_a) = draw();
    let (lr_b, hr_b) = draw();
    assert_eq!((&lr_a, &hr_a), (&lr_b, &hr_b));
    assert_eq!(lr_a.shape(), Shape::new(4, 3, 5, 5));
    assert_eq!(hr_a.shape(), Shape::new(4, 3, 15, 15));

    let pairs = &set.scale(3).unwrap().pairs;
    let spec = PatchSpec {
        image: 1,
        lr_y: 2,
        lr_x: 1,
        augment: Augment::default(),
    };
    let (lr, hr) = cut_batch::<f64>(&set, 3, 5, &[spec]).unwrap();
    let (hr_img, lr_img) = &pairs[1];
    for y in 0..15 {
        for x in 0..15 {
            let p = hr_img.get(3 + x, 6 + y);
            assert_eq!(hr.at(0, 0, y, x), p[0] as f64 / 255.0);
        }
    }
    assert_eq!(lr.at(0, 2, 0, 0), lr_img.get(1, 2)[2] as f64 / 255.0);
}

#[test]
fn augmentation_is_shared_by_both_members() {
    let set = TrainingSet::new(&corpus(), &[2]).unwrap();
    let base = PatchSpec {
        image: 0,
        lr_y: 3,
        lr_x: 4,
        augment: Augment::default(),
    };
    let (lr0, hr0) = cut_batch::<f32>(&set, 2, 5, &[base]).unwrap();
    for aug in Augment::ALL {
        let (lr, hr) = cut_batch::<f32>(
            &set,
            2,
            5,
            &[PatchSpec {
                augment: aug,
                ..base
            }],
        )
        .unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let (sy, sx) = aug.source(y, x, 5);
                assert_eq!(lr.at(0, 0, y, x), lr0.at(0, 0, sy, sx));
                // Every HR pixel of the LR cell comes from the same source cell.
                for i in 0..2 {
                    for j in 0..2 {
                        let (hy, hx) = aug.source(2 * y + i, 2 * x + j, 10);
                        assert_eq!((hy / 2, hx / 2), (sy, sx));
                        assert_eq!(hr.at(0, 1, 2 * y + i, 2 * x + j), hr0.at(0, 1, hy, hx));
                    }
                }
            }
        }
    }
}

#[test]
fn augmentations_are_uniform() {
    // A 2x2 LR image with distinct pixels identifies the applied symmetry.
    let hr = ImageU8::from_fn(4, 4, |x, y| [(x * 60 + y * 15) as u8, 0, 0]);
    let set = TrainingSet::new(&[hr], &[2]).unwrap();
    let (plain, _) = cut_batch::<f32>(
        &set,
        2,
        2,
        &[PatchSpec {
            image: 0,
            lr_y: 0,
            lr_x: 0,
            augment: Augment::default(),
        }],
    )
    .unwrap();
    let variants: Vec<Vec<f32>> = Augment::ALL
        .iter()
        .map(|a| {
            (0..4)
                .map(|i| {
                    let (sy, sx) = a.source(i / 2, i % 2, 2);
                    plain.at(0, 0, sy, sx)
                })
                .collect()
        })
        .collect();
    for (i, v) in variants.iter().enumerate() {
        assert!(
            variants.iter().skip(i + 1).all(|o| o != v),
            "ambiguous probe image"
        );
    }

    let draws = 10_000;
    let mut counts = [0usize; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..draws {
        let (lr, _) = sample_batch::<f32>(&set, 2, 2, 1, true, &mut rng).unwrap();
        let got: Vec<f32> = lr.data()[..4].to_vec();
        let idx = variants.iter().position(|v| *v == got).unwrap();
        counts[idx] += 1;
    }
    let p = 1.0 / 8.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in &counts {
        assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
        chi2 += (c as f64 - mean).powi(2) / mean;
    }
    // 99.9th percentile of chi-square with 7 degrees of freedom.
    assert!(chi2 < 24.322, "chi2 = {chi2}");
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    let shape = Shape::new(2, 3, 2, 2);
    let pred = Tensor::<f64>::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let target = Tensor::<f64>::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let (_, grad) = l1_loss(&pred, &target).unwrap();
    let coords: Vec<usize> = (0..pred.numel()).collect();
    let numeric = central_differences(&pred, &coords, 1e-6, |p| l1_loss(p, &target).unwrap().0);
    for (&i, n) in coords.iter().zip(numeric) {
        assert!(relative_error(grad.data()[i], n) < 1e-6);
    }
    // Shape mismatch.
    let other = Tensor::<f64>::zeros(Shape::new(1, 3, 2, 2));
    assert!(l1_loss(&pred, &other).is_err());
}

#[test]
fn adam_step_ignores_gradient_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    use rand::Rng;
    let shape = Shape::new(4, 3, 1, 1);
    let mut params = ParamStore::<f64>::new();
    params.insert("p", Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)));
    let mut grads = params.zeros_like();
    *grads.get_mut("p").unwrap() = Tensor::from_fn(shape, |_| {
        let m: f64 = rng.gen_range(0.01..1.0);
        if rng.gen() {
            m
        } else {
            -m
        }
    });
    let scaled = {
        let mut g = grads.zeros_like();
        *g.get_mut("p").unwrap() = grads.get("p").unwrap().scale(10.0);
        g
    };
    let cfg = AdamConfig::default();
    let update = |g: &ParamStore<f64>| {
        let mut p = params.clone();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, g, &mut state, &cfg).unwrap();
        let before = params.get("p").unwrap().data();
        p.get("p")
            .unwrap()
            .data()
            .iter()
            .zip(before)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>()
    };
    let (u1, u10) = (update(&grads), update(&scaled));
    for (a, b) in u1.iter().zip(&u10) {
        assert!((a - b).abs() / a.abs() < 1e-5);
    }
}

#[test]
fn recursive_training_matches_unshared_clone() {
    let spec = tiny_spec(Variant::CarnM);
    let cfg = tiny_config(&[2, 3, 4]);
    let set = TrainingSet::new(&corpus(), &cfg.scales).unwrap();
    let (shared_net, mut shared) = Network::build::<f64>(&spec, 21).unwrap();

    let mut open = spec.clone();
    open.variant = Variant::Custom;
    open.recursive = false;
    let open_net = Network::new(&open).unwrap();
    let mut clone = open_net.zero_store::<f64>().unwrap();
    for (name, t) in clone.iter_mut() {
        *t = shared.param(name).unwrap().clone();
    }

    let adam = cfg.adam();
    let (mut s_state, mut c_state) = (AdamState::new(&shared), AdamState::new(&clone));
    for step in 0..3u64 {
        let scale = cfg.scales[step as usize % 3];
        let mut rng = ChaCha8Rng::seed_from_u64(step);
        let (lr, hr) = sample_batch::<f64>(&set, scale, 5, 2, true, &mut rng).unwrap();

        let pass = shared_net.forward(&shared, &lr, scale).unwrap();
        let out_shared = pass.output.clone();
        let (_, g) = l1_loss(&pass.output, &hr).unwrap();
        let grads = shared_net.backward(&shared, pass, g).unwrap();
        adam_step(&mut shared, &grads, &mut s_state, &adam).unwrap();

        let pass = open_net.forward(&clone, &lr, scale).unwrap();
        let rel = out_shared.max_abs_diff(&pass.output).unwrap();
        assert!(rel < 1e-12, "forward differs by {rel}");
        let (_, g) = l1_loss(&pass.output, &hr).unwrap();
        let mut cgrads = open_net.backward(&clone, pass, g).unwrap();
        // Sum gradients of tied copies and hand the sum to every copy.
        let mut totals = std::collections::HashMap::new();
        for (name, g) in cgrads.iter() {
            let canonical = shared.resolve(name).to_string();
            let total = totals
                .entry(canonical)
                .or_insert_with(|| Tensor::<f64>::zeros(g.shape()));
            srkit::tensor::add_assign(total, g).unwrap();
        }
        for (name, g) in cgrads.iter_mut() {
            *g = totals[shared.resolve(name)].clone();
        }
        adam_step(&mut clone, &cgrads, &mut c_state, &adam).unwrap();
        // Re-tie: every copy must already equal its canonical parameter.
        for (name, t) in clone.iter() {
            let s = shared.param(name).unwrap();
            let scale = s
                .data()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1e-12);
            assert!(
                t.max_abs_diff(s).unwrap() / scale < 1e-6,
                "{name} after step {step}"
            );
        }
    }
}

#[test]
fn single_scale_training_leaves_other_heads_alone() {
    let spec = tiny_spec(Variant::Carn);
    let cfg = tiny_config(&[3]);
    let set = TrainingSet::new(&corpus(), &[3]).unwrap();
    let mut trainer = Trainer::new(&spec, set, cfg.clone()).unwrap();
    let (_, initial) = Network::build::<f32>(&spec, cfg.seed).unwrap();
    trainer.run().unwrap();
    for (name, t) in trainer.store().iter() {
        let before = initial.param(name).unwrap();
        if name.starts_with("head.x2") || name.starts_with("head.x4") {
            assert_eq!(t, before, "{name} moved");
        } else {
            assert_ne!(t, before, "{name} did not move");
        }
    }
    assert!(trainer.log().iter().all(|r| r.scale == 3));
}

fn checkpoint_bytes(store: &ParamStore<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    checkpoint::write(store, &mut buf).unwrap();
    buf
}

fn without_seconds(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn seeded_runs_are_identical_and_resume_continues_exactly() {
    let spec = tiny_spec(Variant::CarnM);
    let cfg = tiny_config(&[2, 3, 4]);
    let set = TrainingSet::new(&corpus(), &cfg.scales).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let straight = dir.path().join("straight");
    let mut a = Trainer::new(&spec, set.clone(), cfg.clone()).unwrap();
    a.run_in(&straight).unwrap();
    let mut b = Trainer::new(&spec, set.clone(), cfg.clone()).unwrap();
    b.run().unwrap();
    assert_eq!(checkpoint_bytes(a.store()), checkpoint_bytes(b.store()));
    let scales: Vec<u32> = a.log().iter().map(|r| r.scale).collect();
    assert!(scales.iter().any(|&s| s != scales[0]), "{scales:?}");

    let split = dir.path().join("split");
    let half = TrainConfig {
        total_steps: 2,
        ..cfg.clone()
    };
    Trainer::new(&spec, set.clone(), half)
        .unwrap()
        .run_in(&split)
        .unwrap();
    let mut resumed = Trainer::resume(&split, set, cfg).unwrap();
    assert_eq!(resumed.step_count(), 2);
    resumed.run_in(&split).unwrap();

    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&straight, "model.crnk"), read(&split, "model.crnk"));
    assert_eq!(
        read(&straight, "optimizer.crnk"),
        read(&split, "optimizer.crnk")
    );
    let log = |d: &std::path::Path| std::fs::read_to_string(d.join("log.csv")).unwrap();
    assert_eq!(
        without_seconds(&log(&straight)),
        without_seconds(&log(&split))
    );
    assert_eq!(log(&split).lines().count(), 5);
}

#[test]
fn nan_parameter_aborts_naming_the_layer() {
    let spec = tiny_spec(Variant::Carn);
    let cfg = tiny_config(&[2]);
    let set = TrainingSet::new(&corpus(), &[2]).unwrap();
    let (_, mut store) = Network::build::<f32>(&spec, 1).unwrap();
    store.get_mut("body.b1.u2.conv2.weight").unwrap().data_mut()[5] = f32::NAN;
    let adam = AdamState::new(&store);
    let mut trainer = Trainer::from_state(&spec, store, adam, set, cfg).unwrap();
    match trainer.step() {
        Err(Error::NonFinite(layer)) => assert_eq!(layer, "body.b1.u2.conv2"),
        other => panic!(
            "expected a non-finite error, got {:?}",
            other.map(|r| r.loss)
        ),
    }
}

#[test]
fn loss_trends_down_on_a_tiny_corpus() {
    let spec = tiny_spec(Variant::Carn);
    let cfg = TrainConfig {
        total_steps: 60,
        lr0: 2e-3,
        ..tiny_config(&[2])
    };
    let set = TrainingSet::new(&corpus(), &[2]).unwrap();
    let mut trainer = Trainer::new(&spec, set, cfg).unwrap();
    trainer.run().unwrap();
    let losses: Vec<f64> = trainer.log().iter().map(|r| r.loss).collect();
    let head: f64 = losses[..15].iter().sum::<f64>() / 15.0;
    let tail: f64 = losses[45..].iter().sum::<f64>() / 15.0;
    assert!(tail < 0.8 * head, "{head} -> {tail}");
}

#[test]
fn config_validation() {
    let spec = tiny_spec(Variant::Carn).with_scales(&[2]);
    let set = TrainingSet::new(&corpus(), &[2, 3]).unwrap();
    let ok = tiny_config(&[2]);
    assert!(ok.validate_for(&spec, &set).is_ok());
    let too_big = TrainConfig {
        patch_size: 13,
        ..ok.clone()
    };
    assert!(matches!(
        too_big.validate_for(&spec, &set),
        Err(Error::Config(_))
    ));
    let no_head = tiny_config(&[3]);
    assert!(no_head.validate_for(&spec, &set).is_err());
    let bad_beta = TrainConfig { beta2: 1.0, ..ok };
    assert!(bad_beta.validate().is_err());
    assert!(TrainingSet::new(&[], &[2]).is_err());
}
