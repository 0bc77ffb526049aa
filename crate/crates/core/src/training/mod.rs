//! Optimizer, training loop, evaluation, checkpoints and benchmarks.

pub mod adam;
pub mod bench;
pub mod checkpoint;
pub mod eval;
pub mod sweep;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bench::{benchmark_framerate, FrameRate};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use eval::{
    evaluate, image_tensor, landmark_msd, percentile, CenterLinePredictor, EvalReport,
    LandmarkPredictor, MSD_SAMPLES,
};
pub use sweep::{point_count_sweep, sweep_csv, SweepConfig, SweepRow};
pub use trainer::{evaluate_outcome, make_batch, mean_loss, train, TrainConfig, TrainOutcome};
