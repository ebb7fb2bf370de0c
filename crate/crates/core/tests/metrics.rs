use proptest::prelude::*;
use srkit::metrics::{bicubic_resize, psnr, resize_weights, ssim, ImageU8, SsimWindow};

/// Windowed SSIM computed position by position with an explicit 2-D window.
fn ssim_oracle(a: &[f64], b: &[f64], w: usize, h: usize, size: usize, sigma: f64) -> f64 {
    let r = (size as f64 - 1.0) / 2.0;
    let mut win = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            win[i * size + j] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));

    let mut acc = 0.0;
    let mut n = 0;
    for y0 in 0..=h - size {
        for x0 in 0..=w - size {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let p = (y0 + i) * w + x0 + j;
                    ma += win[i * size + j] * a[p];
                    mb += win[i * size + j] * b[p];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let p = (y0 + i) * w + x0 + j;
                    let wt = win[i * size + j];
                    va += wt * (a[p] - ma) * (a[p] - ma);
                    vb += wt * (b[p] - mb) * (b[p] - mb);
                    cov += wt * (a[p] - ma) * (b[p] - mb);
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    acc / n as f64
}

fn pair_8x8(seed: u32) -> (ImageU8, ImageU8) {
    let mut s = seed.wrapping_mul(2_654_435_761).wrapping_add(1);
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 17;
        s ^= s << 5;
        (s % 256) as u8
    };
    let a = ImageU8::from_fn(8, 8, |_, _| [next(), next(), next()]);
    let b = ImageU8::from_fn(8, 8, |x, y| {
        let p = a.get(x, y);
        [
            p[0].saturating_add(next() % 40),
            p[1] / 2 + next() % 20,
            255 - p[2],
        ]
    });
    (a, b)
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    for seed in 0..6 {
        let (a, b) = pair_8x8(seed);
        for (size, sigma) in [(3, 1.5), (5, 1.5), (7, 1.5), (8, 1.5), (5, 0.8)] {
            let window = SsimWindow { size, sigma };
            let y = ssim(&a, &b, window, true).unwrap();
            let y_ref = ssim_oracle(&a.luma(), &b.luma(), 8, 8, size, sigma);
            assert!(
                (y - y_ref).abs() < 1e-9,
                "luma {size} {sigma}: {y} vs {y_ref}"
            );
            let rgb = ssim(&a, &b, window, false).unwrap();
            let rgb_ref = (0..3)
                .map(|c| ssim_oracle(&a.channel(c), &b.channel(c), 8, 8, size, sigma))
                .sum::<f64>()
                / 3.0;
            assert!((rgb - rgb_ref).abs() < 1e-9);
        }
    }
}

#[test]
fn ssim_default_window_on_larger_image() {
    let a = ImageU8::from_fn(16, 14, |x, y| {
        [(x * 15) as u8, (y * 17) as u8, ((x + y) * 7) as u8]
    });
    let b = ImageU8::from_fn(16, 14, |x, y| {
        [(x * 14) as u8, (y * 18) as u8, ((x * y) % 200) as u8]
    });
    let s = ssim(&a, &b, SsimWindow::default(), true).unwrap();
    let r = ssim_oracle(&a.luma(), &b.luma(), 16, 14, 11, 1.5);
    assert!((s - r).abs() < 1e-9);
}

#[test]
fn downscale_matches_direct_kernel_sum() {
    let grad = ImageU8::from_fn(4, 4, |x, y| {
        let v = (10 + 20 * x + 50 * y) as u8;
        [v, 255 - v, 77]
    });
    let out = bicubic_resize(&grad, 2, 2).unwrap();
    // Direct 2-D evaluation of the stretched kernel with edge clamping:
    // 46.367, 85.586 / 144.414, 183.633.
    let expected = [[46u8, 86], [144, 184]];
    for (y, row) in expected.iter().enumerate() {
        for (x, &e) in row.iter().enumerate() {
            assert_eq!(out.get(x, y), [e, 255 - e, 77], "({x}, {y})");
        }
    }
}

#[test]
fn upscale_of_constant_is_constant() {
    let img = ImageU8::filled(5, 3, [33, 66, 99]);
    assert_eq!(
        bicubic_resize(&img, 10, 6).unwrap(),
        ImageU8::filled(10, 6, [33, 66, 99])
    );
}

fn image_strategy() -> impl Strategy<Value = ImageU8> {
    (2usize..12, 2usize..12).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3)
            .prop_map(move |px| ImageU8::new(w, h, px).unwrap())
    })
}

proptest! {
    #[test]
    fn resize_weights_partition_unity(a in 1usize..80, b in 1usize..80) {
        for taps in resize_weights(a, b) {
            let s: f64 = taps.iter().map(|t| t.1).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_symmetric(a in image_strategy(), seed in any::<u8>()) {
        let b = ImageU8::from_fn(a.width(), a.height(), |x, y| {
            let p = a.get(x, y);
            [p[0] ^ seed, p[1], p[2].wrapping_add(seed)]
        });
        prop_assert_eq!(psnr(&a, &b, 0, false).unwrap(), psnr(&b, &a, 0, false).unwrap());
        prop_assert_eq!(psnr(&a, &a, 0, true).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_self_is_one(a in image_strategy()) {
        let window = SsimWindow { size: 2, sigma: 1.0 };
        prop_assert_eq!(ssim(&a, &a, window, false).unwrap(), 1.0);
        prop_assert_eq!(ssim(&a, &a, window, true).unwrap(), 1.0);
    }
}
