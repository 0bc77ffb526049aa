use std::time::{Duration, Instant};

use super::eval::LandmarkPredictor;
use crate::dataset::ImageGray;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameRate {
    /// Frames timed (warm-up excluded).
    pub frames: usize,
    pub elapsed: Duration,
    pub fps: f64,
}

impl FrameRate {
    pub fn from_elapsed(frames: usize, elapsed: Duration) -> Self {
        Self {
            frames,
            elapsed,
            fps: frames as f64 / elapsed.as_secs_f64(),
        }
    }
}

/// Frame-by-frame inference throughput. The first `warmup` frames run
/// untimed; the remaining frames are timed end to end, including input
/// conversion and landmark denormalization.
pub fn benchmark_framerate(
    model: &impl LandmarkPredictor,
    frames: &[ImageGray],
    warmup: usize,
) -> Result<FrameRate> {
    if frames.len() <= warmup {
        return Err(Error::InvalidArgument(format!(
            "{} frames leave nothing to time after {warmup} warm-up frames",
            frames.len()
        )));
    }
    for f in &frames[..warmup] {
        std::hint::black_box(model.predict_landmarks(f)?);
    }
    let timed = &frames[warmup..];
    let start = Instant::now();
    for f in timed {
        std::hint::black_box(model.predict_landmarks(f)?);
    }
    Ok(FrameRate::from_elapsed(timed.len(), start.elapsed()))
}
