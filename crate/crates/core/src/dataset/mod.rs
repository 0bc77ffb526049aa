//! Frames, annotated samples, dataset splits and the conversion to network
//! inputs and targets.

mod augment;
mod io;
mod synth;

pub use augment::{augment, warp_affine, AugmentConfig, AugmentParams};
pub use io::{
    list_pgm_files, load_dataset, load_meta, read_pgm, save_dataset, write_pgm, DatasetMeta,
    GENERATOR_VERSION,
};
pub use synth::{synth_dataset, synth_frame, synth_generate, SynthConfig, SynthFrame};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{LandmarkSet, Point2};

/// Single-channel frame with intensities in `[0, 1]`, stored row-major with
/// the origin at the top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sets a pixel, clamping the value into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Bilinear sample at a sub-pixel location; pixels outside the frame
    /// read as 0.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let px = |xi: i64, yi: i64| -> f32 {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                0.0
            } else {
                self.data[yi as usize * self.width + xi as usize]
            }
        };
        let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
        let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// An annotated frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: ImageGray,
    pub landmarks: LandmarkSet,
    pub id: String,
}

impl Sample {
    pub fn new(image: ImageGray, landmarks: LandmarkSet, id: impl Into<String>) -> Result<Self> {
        if !landmarks.within(image.width(), image.height()) {
            return Err(Error::Contract(
                "landmark outside the image bounds".into(),
            ));
        }
        Ok(Self {
            image,
            landmarks,
            id: id.into(),
        })
    }
}

/// Network input (intensities as stored) and target vector
/// `(x1, y1, ..., xN, yN)` scaled by `1 / (W-1)` and `1 / (H-1)`.
pub fn normalize(s: &Sample) -> Result<(Vec<f32>, Vec<f64>)> {
    let (w, h) = (s.image.width(), s.image.height());
    if !s.landmarks.within(w, h) {
        return Err(Error::Contract(format!(
            "sample `{}` has a landmark outside its {w}x{h} frame",
            s.id
        )));
    }
    let (sx, sy) = ((w - 1) as f64, (h - 1) as f64);
    let target = s
        .landmarks
        .points()
        .iter()
        .flat_map(|p| [p.x / sx, p.y / sy])
        .collect();
    Ok((s.image.data().to_vec(), target))
}

/// Inverse of the target scaling in [`normalize`].
pub fn denormalize(target: &[f64], width: usize, height: usize) -> Result<LandmarkSet> {
    if target.is_empty() || !target.len().is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "target length {} is not a positive even number",
            target.len()
        )));
    }
    let (sx, sy) = ((width - 1) as f64, (height - 1) as f64);
    LandmarkSet::new(
        target
            .chunks(2)
            .map(|c| Point2::new(c[0] * sx, c[1] * sy))
            .collect(),
    )
}

/// Shuffles with `seed` and partitions into (train, val, test). Validation
/// and test sizes are `floor(ratio * n)`; the remainder goes to training.
pub fn split_dataset<T>(
    samples: Vec<T>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be in [0, 1] and sum to 1, got ({rt}, {rv}, {rs})"
        )));
    }
    let n = samples.len();
    if n < 20 {
        return Err(Error::Config(format!(
            "need at least 20 samples to split, got {n}"
        )));
    }
    let n_val = (rv * n as f64 + 1e-9).floor() as usize;
    let n_test = (rs * n as f64 + 1e-9).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<T> {
        idx.iter().map(|&i| slots[i].take().expect("index used once")).collect()
    };
    let train = take(&order[..n - n_val - n_test]);
    let val = take(&order[n - n_val - n_test..n - n_test]);
    let test = take(&order[n - n_test..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize, pts: &[(f64, f64)]) -> Sample {
        Sample::new(
            ImageGray::zeros(w, h),
            LandmarkSet::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap(),
            "s",
        )
        .unwrap()
    }

    #[test]
    fn normalize_corners_and_center() {
        let s = sample(128, 128, &[(0.0, 0.0), (127.0, 127.0), (63.5, 63.5)]);
        let (_, t) = normalize(&s).unwrap();
        assert_eq!(t, vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let s = sample(128, 96, &[(3.25, 17.75), (100.125, 94.9), (12.0, 0.3)]);
        let (_, t) = normalize(&s).unwrap();
        let back = denormalize(&t, 128, 96).unwrap();
        for (a, b) in back.points().iter().zip(s.landmarks.points()) {
            assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_bounds_landmark_is_a_contract_violation() {
        let mut s = sample(10, 10, &[(1.0, 1.0)]);
        s.landmarks = LandmarkSet::new(vec![Point2::new(10.0, 1.0)]).unwrap();
        assert!(matches!(normalize(&s), Err(Error::Contract(_))));
    }

    #[test]
    fn split_sizes() {
        let (a, b, c) = split_dataset((0..2000).collect(), (0.9, 0.05, 0.05), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1800, 100, 100));
        let (a, b, c) = split_dataset((0..20).collect(), (0.9, 0.05, 0.05), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (18, 1, 1));
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let run = || split_dataset((0..57).collect::<Vec<u32>>(), (0.9, 0.05, 0.05), 11).unwrap();
        let (a, b, c) = run();
        assert_eq!((a.clone(), b.clone(), c.clone()), run());
        let mut all: Vec<u32> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(matches!(
            split_dataset((0..100).collect::<Vec<u8>>(), (0.9, 0.05, 0.06), 0),
            Err(Error::Config(_))
        ));
        assert!(split_dataset((0..19).collect::<Vec<u8>>(), (0.9, 0.05, 0.05), 0).is_err());
    }

    #[test]
    fn bilinear_zero_fill() {
        let img = ImageGray::new(2, 1, vec![1.0, 0.5]).unwrap();
        assert_eq!(img.sample_bilinear(0.5, 0.0), 0.75);
        assert_eq!(img.sample_bilinear(-1.0, 0.0), 0.0);
        assert_eq!(img.sample_bilinear(1.5, 0.0), 0.25);
    }
}
