use serde::{Deserialize, Serialize};

use super::bench::benchmark_framerate;
use super::eval::evaluate;
use super::trainer::{train, TrainConfig};
use crate::dataset::{split_dataset, synth_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::net::{init_params, NetworkConfig};

pub const SWEEP_RANGE: (usize, usize) = (5, 100);

/// Everything a sweep needs besides the list of point counts. The spacing arm
/// (equal or random) is `synth.spacing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub synth: SynthConfig,
    pub count: usize,
    pub ratios: (f64, f64, f64),
    pub data_seed: u64,
    pub init_seed: u64,
    pub train: TrainConfig,
    /// Test frames timed for the frame-rate column (after 5 warm-up frames).
    pub bench_frames: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            count: 2000,
            ratios: (0.9, 0.05, 0.05),
            data_seed: 0,
            init_seed: 0,
            train: TrainConfig::default(),
            bench_frames: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_points: usize,
    pub msd_mean: f64,
    pub fps: f64,
}

/// Trains and evaluates one freshly initialized network per point count, each
/// on data generated from the same seed. Mean MSD is deterministic per
/// config; the frame rate is a wall-clock measurement.
pub fn point_count_sweep(n_list: &[usize], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("empty point-count list".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| !(SWEEP_RANGE.0..=SWEEP_RANGE.1).contains(&n)) {
        return Err(Error::InvalidArgument(format!(
            "point count {n} is outside [{}, {}]",
            SWEEP_RANGE.0, SWEEP_RANGE.1
        )));
    }
    n_list
        .iter()
        .map(|&n| {
            let synth = SynthConfig { n_points: n, ..cfg.synth.clone() };
            let data = synth_dataset(&synth, cfg.count, cfg.data_seed)?;
            let (train_set, val_set, test_set) = split_dataset(data, cfg.ratios, cfg.data_seed)?;
            let net = NetworkConfig {
                input: (1, synth.height, synth.width),
                ..NetworkConfig::new(n)
            };
            let model = init_params(&net, cfg.init_seed)?;
            let out = train(model, &train_set, &val_set, &cfg.train)?;
            let report = evaluate(&out.best, &test_set)?;
            let frames: Vec<_> = test_set
                .iter()
                .cycle()
                .take(cfg.bench_frames.max(1) + 5)
                .map(|s| s.image.clone())
                .collect();
            let fps = benchmark_framerate(&out.best, &frames, 5)?.fps;
            Ok(SweepRow { n_points: n, msd_mean: report.mean, fps })
        })
        .collect()
}

/// `n_points,msd_mean_px,fps` with a header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n_points,msd_mean_px,fps\n");
    for r in rows {
        out.push_str(&format!("{},{:.6},{:.2}\n", r.n_points, r.msd_mean, r.fps));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_counts() {
        let cfg = SweepConfig::default();
        for bad in [&[4][..], &[101], &[10, 200], &[]] {
            assert!(matches!(point_count_sweep(bad, &cfg), Err(Error::InvalidArgument(_))));
        }
    }
}
