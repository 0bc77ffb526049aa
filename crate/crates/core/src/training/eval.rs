use std::fmt;

use crate::annotation::revert_to_contour;
use crate::dataset::{denormalize, ImageGray, Sample};
use crate::error::{Error, Result};
use crate::geometry::{msd, resample_by_arclength, LandmarkSet, Point2};
use crate::net::{ModelState, Real, Tensor};

/// Points per curve when comparing reverted contours.
pub const MSD_SAMPLES: usize = 100;

/// Anything that maps a frame to landmarks in pixel units.
pub trait LandmarkPredictor {
    fn predict_landmarks(&self, image: &ImageGray) -> Result<LandmarkSet>;
}

/// Network input tensor `(1, 1, H, W)` for one frame.
pub fn image_tensor<T: Real>(image: &ImageGray) -> Result<Tensor<T>> {
    Tensor::from_vec(
        &[1, 1, image.height(), image.width()],
        image.data().iter().map(|&v| T::from_f32(v).expect("finite")).collect(),
    )
}

impl<T: Real> LandmarkPredictor for ModelState<T> {
    /// Eval-mode prediction, denormalized and sorted by x.
    fn predict_landmarks(&self, image: &ImageGray) -> Result<LandmarkSet> {
        let out = self.predict(&image_tensor(image)?)?;
        let target: Vec<f64> = out.data().iter().map(|v| v.to_f64_lossy()).collect();
        let mut l = denormalize(&target, image.width(), image.height())?;
        l.sort_by_x();
        Ok(l)
    }
}

/// Predicts the same landmarks for every frame: `N` points on the horizontal
/// line through the image centre at `x_k = (k + 0.5) W / N`.
#[derive(Clone, Copy, Debug)]
pub struct CenterLinePredictor {
    pub n_points: usize,
}

impl LandmarkPredictor for CenterLinePredictor {
    fn predict_landmarks(&self, image: &ImageGray) -> Result<LandmarkSet> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        let n = self.n_points as f64;
        LandmarkSet::new(
            (0..self.n_points)
                .map(|k| Point2::new((k as f64 + 0.5) * w / n, (h - 1.0) / 2.0))
                .collect(),
        )
    }
}

/// Per-sample MSD and summary statistics, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn from_values(per_sample: Vec<f64>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::InvalidArgument("no samples to summarize".into()));
        }
        let mut sorted = per_sample.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        Ok(Self {
            n_samples: per_sample.len(),
            median: percentile(&sorted, 50.0),
            p95: percentile(&sorted, 95.0),
            mean,
            per_sample,
        })
    }

    /// CSV of per-sample values: `id,msd_px`.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("id,msd_px\n");
        for (id, v) in ids.iter().zip(&self.per_sample) {
            out.push_str(&format!("{id},{v}\n"));
        }
        out
    }
}

/// `msd_mean_px=<f> msd_median_px=<f> msd_p95_px=<f> n=<int>`
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "msd_mean_px={:.6} msd_median_px={:.6} msd_p95_px={:.6} n={}",
            self.mean, self.median, self.p95, self.n_samples
        )
    }
}

/// Linear-interpolation percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = (q / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// MSD between the contours reverted from two landmark sets, each resampled
/// to [`MSD_SAMPLES`] points by arc length.
pub fn landmark_msd(pred: &LandmarkSet, truth: &LandmarkSet) -> Result<f64> {
    let a = resample_by_arclength(&revert_to_contour(pred)?, MSD_SAMPLES)?;
    let b = resample_by_arclength(&revert_to_contour(truth)?, MSD_SAMPLES)?;
    msd(a.points(), b.points())
}

pub fn evaluate(model: &impl LandmarkPredictor, test_set: &[Sample]) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let values = test_set
        .iter()
        .map(|s| landmark_msd(&model.predict_landmarks(&s.image)?, &s.landmarks))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.5);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&[7.0], 95.0), 7.0);
    }

    #[test]
    fn report_record_format() {
        let r = EvalReport::from_values(vec![1.0, 3.0]).unwrap();
        assert_eq!(
            r.to_string(),
            "msd_mean_px=2.000000 msd_median_px=2.000000 msd_p95_px=2.900000 n=2"
        );
        assert!(EvalReport::from_values(vec![]).is_err());
    }

    #[test]
    fn empty_test_set_rejected() {
        assert!(matches!(
            evaluate(&CenterLinePredictor { n_points: 5 }, &[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn parallel_landmarks_msd() {
        let a = LandmarkSet::new((0..5).map(|i| Point2::new(10.0 * i as f64, 0.0)).collect()).unwrap();
        let b = LandmarkSet::new((0..5).map(|i| Point2::new(10.0 * i as f64, 4.0)).collect()).unwrap();
        assert!((landmark_msd(&a, &b).unwrap() - 4.0).abs() < 1e-9);
    }
}
