use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regex::Regex;

fn tonguenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonguenet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().display().to_string(), fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

fn synth(dir: &Path, count: &str, size: &str) {
    let o = tonguenet(&[
        "synth", "--out", dir.to_str().unwrap(), "--count", count, "--seed", "1",
        "--width", size, "--height", size, "--n-points", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = tonguenet(&["synth", "--out", d.to_str().unwrap(), "--count", "10", "--seed", "1"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("\"seed\":1"), "resolved config missing: {}", stderr(&o));
    }
    let (da, db) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(da.len(), 12);
    assert_eq!(da, db);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let o = tonguenet(&["train", "--out", "x.tnet"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--data"), "{}", stderr(&o));
    let o = tonguenet(&["train", "--data", "d", "--out", "x", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = tonguenet(&["sweep", "--n", "4,10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--n"), "{}", stderr(&o));
}

#[test]
fn unreadable_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tonguenet(&["train", "--data", tmp.path().join("nope").to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"), "{}", stderr(&o));

    let ckpt = tmp.path().join("junk.tnet");
    fs::write(&ckpt, b"definitely not a model").unwrap();
    let o = tonguenet(&["infer", "--ckpt", ckpt.to_str().unwrap(), "--image", "x.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a checkpoint"), "{}", stderr(&o));
}

#[test]
fn train_eval_infer_overlay_bench_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "40", "32");
    let ckpt = tmp.path().join("m.tnet");
    let last = tmp.path().join("last.tnet");
    let o = tonguenet(&[
        "train", "--data", data.to_str().unwrap(), "--out", ckpt.to_str().unwrap(),
        "--save-last", last.to_str().unwrap(), "--batch-size", "8", "--epochs", "2",
        "--val-ratio", "0.1", "--test-ratio", "0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Regex::new(r"^steps=8 train_loss=\S+ best_val_msd_px=\S+\n$").unwrap().is_match(&stdout(&o)), "{}", stdout(&o));
    assert!(stderr(&o).contains("\"lr\":0.0005"));

    let o = tonguenet(&[
        "eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--val-ratio", "0.1", "--test-ratio", "0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record = Regex::new(r"^msd_mean_px=\d+\.\d+ msd_median_px=\d+\.\d+ msd_p95_px=\d+\.\d+ n=4\n$").unwrap();
    assert!(record.is_match(&stdout(&o)), "{}", stdout(&o));

    let frame = data.join("images").join("00000.pgm");
    let o = tonguenet(&["infer", "--ckpt", ckpt.to_str().unwrap(), "--image", frame.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().split(',').count(), 10);

    let out = tmp.path().join("overlay.pgm");
    let o = tonguenet(&[
        "overlay", "--ckpt", ckpt.to_str().unwrap(), "--image", frame.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = tonguenet::dataset::read_pgm(&frame).unwrap();
    let b = tonguenet::dataset::read_pgm(&out).unwrap();
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    assert_ne!(a, b);

    let o = tonguenet(&[
        "bench", "--ckpt", last.to_str().unwrap(), "--frames", data.join("images").to_str().unwrap(),
        "--warmup", "5", "--count", "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Regex::new(r"^fps=\d+\.\d+ frames=20 ").unwrap().is_match(&stdout(&o)), "{}", stdout(&o));

    let wrong = tmp.path().join("big");
    synth(&wrong, "1", "64");
    let o = tonguenet(&[
        "infer", "--ckpt", ckpt.to_str().unwrap(), "--image",
        wrong.join("images").join("00000.pgm").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn annotate_converts_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let masks = tmp.path().join("masks");
    fs::create_dir(&masks).unwrap();
    let mut img = tonguenet::dataset::ImageGray::zeros(64, 64);
    for x in 5..60 {
        let y = 30 + (x as f64 / 10.0).sin().mul_add(5.0, 0.0) as usize;
        img.set(x, y, 1.0);
        img.set(x, y + 1, 1.0);
    }
    tonguenet::dataset::write_pgm(&masks.join("m1.pgm"), &img).unwrap();
    let csv = tmp.path().join("l.csv");
    let o = tonguenet(&[
        "annotate", "--masks", masks.to_str().unwrap(), "--out", csv.to_str().unwrap(),
        "--n-points", "6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = tonguenet::annotation::read_landmarks_csv(&csv).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].filename, "m1.pgm");
    assert_eq!(recs[0].landmarks.len(), 6);
}
