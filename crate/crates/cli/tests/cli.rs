use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use srkit::io::{read_png, write_png};
use srkit::metrics::ImageU8;

fn srkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srkit"))
        .args(args)
        .output()
        .expect("failed to launch srkit")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn image(k: usize, n: usize) -> ImageU8 {
    ImageU8::from_fn(n, n, |x, y| {
        let ring = (((x * x + y * y) / (9 + k)) % 2) as u8 * 150 + 40;
        [
            ring,
            ((x * 13 + y * 7 * (k + 1)) % 256) as u8,
            ((x / 3 + y / 5) % 2) as u8 * 200 + 20,
        ]
    })
}

fn write_dataset(dir: &Path, count: usize, size: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for k in 0..count {
        write_png(&image(k, size), dir.join(format!("img{k}.png"))).unwrap();
    }
}

fn write_config(path: &Path, dataset: &Path, extra: &str) {
    let text = format!(
        "# smoke run\nvariant = carn-m\nchannels = 8\nblocks = 2\nunits = 2\nscales = 2,3\n\
         patch_size = 6\nbatch_size = 2\ntotal_steps = 4\nlr0 = 1e-3\nseed = 5\n\
         dataset = {}\n{extra}",
        dataset.display()
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn analyze_reports_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("carn.csv");
    let start = Instant::now();
    let out = srkit(&[
        "analyze",
        "--variant",
        "carn",
        "--scale",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1591939 params"), "{stdout}");
    assert!(
        stdout.contains("90.9G Mult-Adds at 1280x720 (x4)"),
        "{stdout}"
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("layer,name,params,mult_adds,out_w,out_h\n0,entry,"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&srkit(&["analyze", "--variant", "carn-xl"])), 1);
    assert_eq!(code(&srkit(&["analyze", "--hr", "720p"])), 1);
    assert_eq!(
        code(&srkit(&[
            "analyze",
            "--variant",
            "carn",
            "--group-size",
            "2"
        ])),
        1
    );
    assert_eq!(code(&srkit(&["frobnicate"])), 1);
    assert_eq!(code(&srkit(&["eval", "--dataset", "x", "--scale", "5"])), 1);
    assert_eq!(code(&srkit(&["--help"])), 0);
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_srkit"))
        .args(["analyze"])
        .env("SRKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 1);
}

#[test]
fn sweep_emits_both_recursion_modes() {
    let out = srkit(&["sweep", "--groups", "1,4,64", "--recursive", "both"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(
        text.lines().next(),
        Some("groups,recursive,params,body_params,mult_adds")
    );
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][1], "false");
        assert_eq!(pair[1][1], "true");
        assert_eq!(pair[0][4], pair[1][4]);
        let p: Vec<u64> = pair.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(p[1] < p[0]);
    }
}

#[test]
fn eval_always_reports_bicubic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hr");
    write_dataset(&data, 2, 26);
    let csv = dir.path().join("eval.csv");
    let out = srkit(&[
        "eval",
        "--dataset",
        data.to_str().unwrap(),
        "--scale",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image,scale,psnr_db,ssim");
    assert!(lines[1].starts_with("bicubic:img0,2,"));
    assert!(lines[2].starts_with("bicubic:img1,2,"));
    assert!(lines[3].starts_with("bicubic:mean,2,"));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = srkit(&["eval", "--dataset", empty.to_str().unwrap(), "--scale", "2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_upscale_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hr");
    write_dataset(&data, 3, 24);
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, &data, "checkpoint_every = 2\n");

    let run_a = dir.path().join("a");
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        run_a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run_b = dir.path().join("b");
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        run_b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let model = |d: &Path| std::fs::read(d.join("model.crnk")).unwrap();
    assert_eq!(model(&run_a), model(&run_b));

    // Refuses to silently overwrite.
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        run_a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);

    // Resume: 2 steps, then continue to 4.
    let run_c = dir.path().join("c");
    let c = run_c.to_str().unwrap();
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        c,
        "--set",
        "total_steps=2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = srkit(&["train", cfg.to_str().unwrap(), "--out", c, "--resume"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(model(&run_a), model(&run_c));

    let ckpt = run_a.join("model.crnk");
    let lr = dir.path().join("lr.png");
    write_png(&image(1, 9), &lr).unwrap();
    let sr1 = dir.path().join("sr1.png");
    let sr2 = dir.path().join("sr2.png");
    for sr in [&sr1, &sr2] {
        let out = srkit(&[
            "upscale",
            "--in",
            lr.to_str().unwrap(),
            "--out",
            sr.to_str().unwrap(),
            "--scale",
            "3",
            "--ckpt",
            ckpt.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let img = read_png(&sr1).unwrap();
    assert_eq!((img.width(), img.height()), (27, 27));
    assert_eq!(std::fs::read(&sr1).unwrap(), std::fs::read(&sr2).unwrap());
    let out = srkit(&[
        "upscale",
        "--in",
        lr.to_str().unwrap(),
        "--out",
        sr1.to_str().unwrap(),
        "--scale",
        "4",
        "--ckpt",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);

    let out = srkit(&[
        "eval",
        "--dataset",
        data.to_str().unwrap(),
        "--scale",
        "2",
        "--ckpt",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 + 4);
    assert!(text.lines().last().unwrap().starts_with("mean,2,"));
}

#[test]
fn train_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, &empty, "");
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no PNG images"), "{}", stderr(&out));

    write_config(&cfg, &empty, "learning_rate = 3\n");
    let out = srkit(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown key `learning_rate`"));
}
