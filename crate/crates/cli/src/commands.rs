use std::fmt;
use std::fs;
use std::path::Path;

use tonguenet::annotation::{
    annotate, contour_from_mask, write_landmarks_csv, ContourMask, LandmarkRecord, SpacingPolicy,
};
use tonguenet::dataset::{
    list_pgm_files, load_dataset, read_pgm, save_dataset, split_dataset, synth_dataset,
    write_pgm, AugmentConfig, DatasetMeta, ImageGray, Sample, SynthConfig, GENERATOR_VERSION,
};
use tonguenet::net::{init_params, ModelState, NetworkConfig};
use tonguenet::training::{
    benchmark_framerate, evaluate, load_checkpoint, point_count_sweep, save_checkpoint, sweep_csv,
    train, LandmarkPredictor, SweepConfig, TrainConfig,
};
use tonguenet::Error;

use crate::{
    AnnotateArgs, BenchArgs, Command, EvalArgs, InferArgs, OverlayArgs, Part, SplitArgs,
    SweepArgs, SynthArgs, TrainArgs,
};

/// A failure with the process exit code it maps to.
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

/// 1: bad flag values; 2: unreadable or malformed input; 3: anything that
/// fails while running.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) => 1,
            Error::Io { .. }
            | Error::Malformed { .. }
            | Error::UnsupportedFormat { .. }
            | Error::NotACheckpoint { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Corrupt { .. }
            | Error::InvalidMask(_)
            | Error::Contract(_) => 2,
            _ => 3,
        };
        Self { code, msg: e.to_string() }
    }
}

pub fn exit_code(f: &Failure) -> u8 {
    f.code
}

pub fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Annotate(a) => annotate_masks(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => bench(a),
        Command::Overlay(a) => overlay(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        width: a.width,
        height: a.height,
        band_sigma: a.band_sigma,
        speckle_scale: a.speckle_scale,
        noise_sigma: a.noise_sigma,
        n_points: a.n_points,
        spacing: a.spacing,
        ..SynthConfig::default()
    };
    let samples = synth_dataset(&cfg, a.count, a.seed)?;
    let meta = DatasetMeta {
        width: a.width,
        height: a.height,
        n_points: a.n_points,
        seed: a.seed,
        generator_version: GENERATOR_VERSION.into(),
    };
    save_dataset(&a.out, &samples, &meta)?;
    println!("samples={} out={}", samples.len(), a.out.display());
    Ok(())
}

fn annotate_masks(a: AnnotateArgs) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in list_pgm_files(&a.masks)? {
        let img = read_pgm(&path)?;
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let with_file = |e: Error| Failure { msg: format!("{name}: {e}"), ..Failure::from(e) };
        let contour = contour_from_mask(&ContourMask::from_gray(&img)).map_err(with_file)?;
        let policy = match a.spacing {
            tonguenet::annotation::SpacingKind::Equal => SpacingPolicy::equal(a.n_points),
            tonguenet::annotation::SpacingKind::Random => {
                SpacingPolicy::random(a.n_points, img.width(), tonguenet::seed::stream_seed(a.seed, records.len() as u64, 0))
            }
        };
        let landmarks = annotate(&contour, &policy, img.width()).map_err(with_file)?;
        records.push(LandmarkRecord { filename: name, landmarks });
    }
    if records.is_empty() {
        return Err(Failure::data(format!("--masks {}: no .pgm files", a.masks.display())));
    }
    write_landmarks_csv(&a.out, &records)?;
    println!("annotated={} out={}", records.len(), a.out.display());
    Ok(())
}

type Parts = (Vec<Sample>, Vec<Sample>, Vec<Sample>);

fn split(samples: Vec<Sample>, s: &SplitArgs) -> Result<Parts, Failure> {
    let ratios = (1.0 - s.val_ratio - s.test_ratio, s.val_ratio, s.test_ratio);
    Ok(split_dataset(samples, ratios, s.split_seed)?)
}

fn network_for(samples: &[Sample], data: &Path) -> Result<NetworkConfig, Failure> {
    let first = samples
        .first()
        .ok_or_else(|| Failure::data(format!("--data {}: empty dataset", data.display())))?;
    Ok(NetworkConfig {
        input: (1, first.image.height(), first.image.width()),
        ..NetworkConfig::new(first.landmarks.len())
    })
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let samples = load_dataset(&a.data)?;
    let net = network_for(&samples, &a.data)?;
    let (train_set, val_set, _) = split(samples, &a.split)?;
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        max_iterations: a.max_iterations,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        seed: a.seed,
        augment: if a.no_augment { AugmentConfig::disabled() } else { AugmentConfig::default() },
    };
    let model = init_params::<f32>(&net, a.init_seed)?;
    let out = train(model, &train_set, &val_set, &cfg)?;
    for (i, (l, m)) in out.val_loss.iter().zip(&out.val_msd).enumerate() {
        eprintln!("epoch={} val_loss={l:.6} val_msd_px={m:.6}", i + 1);
    }
    save_checkpoint(&a.out, &out.best, None)?;
    if let Some(path) = &a.save_last {
        save_checkpoint(path, &out.model, Some(&out.adam))?;
    }
    let last = out.train_loss.last().copied().unwrap_or(f64::NAN);
    match out.best_val_msd {
        Some(v) => println!("steps={} train_loss={last:.6} best_val_msd_px={v:.6}", out.steps),
        None => println!("steps={} train_loss={last:.6}", out.steps),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelState<f32>, Failure> {
    Ok(load_checkpoint(path)?.0)
}

fn check_frame(model: &ModelState<f32>, img: &ImageGray, path: &Path) -> Result<(), Failure> {
    let (_, h, w) = model.config.input;
    if (img.width(), img.height()) != (w, h) {
        return Err(Failure::data(format!(
            "{}: frame is {}x{}, the checkpoint expects {w}x{h}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let model = load_model(&a.ckpt)?;
    let samples = load_dataset(&a.data)?;
    if let Some(s) = samples.first() {
        check_frame(&model, &s.image, &a.data)?;
        if s.landmarks.len() != model.config.n_points {
            return Err(Failure::data(format!(
                "--data {}: {} landmarks per sample, the checkpoint predicts {}",
                a.data.display(),
                s.landmarks.len(),
                model.config.n_points
            )));
        }
    }
    let set = match a.part {
        Part::All => samples,
        part => {
            let (tr, va, te) = split(samples, &a.split)?;
            match part {
                Part::Train => tr,
                Part::Val => va,
                _ => te,
            }
        }
    };
    let report = evaluate(&model, &set)?;
    if let Some(path) = &a.csv {
        let ids: Vec<String> = set.iter().map(|s| s.id.clone()).collect();
        fs::write(path, report.to_csv(&ids)).map_err(|e| Failure::from(Error::Io { path: path.clone(), source: e }))?;
    }
    println!("{report}");
    Ok(())
}

fn infer(a: InferArgs) -> Result<(), Failure> {
    let model = load_model(&a.ckpt)?;
    let img = read_pgm(&a.image)?;
    check_frame(&model, &img, &a.image)?;
    let l = model.predict_landmarks(&img)?;
    let coords: Vec<String> = l
        .points()
        .iter()
        .flat_map(|p| [format!("{:.4}", p.x), format!("{:.4}", p.y)])
        .collect();
    println!("{}", coords.join(","));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let model = load_model(&a.ckpt)?;
    let paths = list_pgm_files(&a.frames)?;
    if paths.is_empty() {
        return Err(Failure::data(format!("--frames {}: no .pgm files", a.frames.display())));
    }
    let images = paths
        .iter()
        .map(|p| {
            let img = read_pgm(p)?;
            check_frame(&model, &img, p)?;
            Ok(img)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let total = a.warmup + a.count.unwrap_or(images.len().saturating_sub(a.warmup));
    let frames: Vec<ImageGray> = images.iter().cycle().take(total).cloned().collect();
    let r = benchmark_framerate(&model, &frames, a.warmup).map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::usage(format!("--warmup/--count: {m}")),
        e => e.into(),
    })?;
    println!("fps={:.3} frames={} seconds={:.6}", r.fps, r.frames, r.elapsed.as_secs_f64());
    Ok(())
}

fn overlay(a: OverlayArgs) -> Result<(), Failure> {
    let model = load_model(&a.ckpt)?;
    let img = read_pgm(&a.image)?;
    check_frame(&model, &img, &a.image)?;
    let l = model.predict_landmarks(&img)?;
    let out = crate::overlay::draw(&img, &l)?;
    write_pgm(&a.out, &out)?;
    println!("out={}", a.out.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    if let Some(n) = a.n.iter().find(|&&n| !(5..=100).contains(&n)) {
        return Err(Failure::usage(format!("--n: point count {n} is outside [5, 100]")));
    }
    let cfg = SweepConfig {
        synth: SynthConfig {
            width: a.width,
            height: a.height,
            spacing: a.spacing,
            ..SynthConfig::default()
        },
        count: a.count,
        data_seed: a.seed,
        init_seed: a.seed,
        train: TrainConfig {
            lr: a.lr,
            batch_size: a.batch_size,
            epochs: a.epochs,
            max_iterations: a.max_iterations,
            seed: a.seed,
            augment: if a.no_augment { AugmentConfig::disabled() } else { AugmentConfig::default() },
            ..TrainConfig::default()
        },
        bench_frames: a.bench_frames,
        ..SweepConfig::default()
    };
    let rows = point_count_sweep(&a.n, &cfg)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
