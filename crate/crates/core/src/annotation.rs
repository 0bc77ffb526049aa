//! Automatic landmark annotation: turns segmented contours into landmark sets
//! with either equal or random spacing, and reverts landmark sets back to
//! smooth contours with a B-spline.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageGray;
use crate::error::{Error, Result};
use crate::geometry::{
    default_control_count, eval_bspline, fit_bspline, LandmarkSet, Point2, Polyline,
};

/// Number of curve samples produced when reverting landmarks.
pub const REVERT_SAMPLES: usize = 100;

/// Binary occupancy mask of a segmented tongue band.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourMask {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` entries.
    pub bits: Vec<bool>,
}

impl ContourMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "{}x{} mask needs {} cells, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Any pixel brighter than half intensity is set.
    pub fn from_gray(img: &ImageGray) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.data().iter().map(|&v| v > 0.5).collect(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingKind {
    Equal,
    Random,
}

impl std::str::FromStr for SpacingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(SpacingKind::Equal),
            "random" => Ok(SpacingKind::Random),
            other => Err(Error::Config(format!(
                "spacing must be `equal` or `random`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SpacingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpacingKind::Equal => "equal",
            SpacingKind::Random => "random",
        })
    }
}

/// How landmarks are placed along a contour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingPolicy {
    pub kind: SpacingKind,
    pub n_points: usize,
    /// Minimum horizontal gap between adjacent random landmarks.
    pub min_dist_x: f64,
    pub seed: u64,
}

impl SpacingPolicy {
    pub fn equal(n_points: usize) -> Self {
        Self {
            kind: SpacingKind::Equal,
            n_points,
            min_dist_x: 1.0,
            seed: 0,
        }
    }

    /// Random spacing with the default minimum gap `width / (2 n)`.
    pub fn random(n_points: usize, width: usize, seed: u64) -> Self {
        Self {
            kind: SpacingKind::Random,
            n_points,
            min_dist_x: width as f64 / (2.0 * n_points as f64),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Config(format!(
                "need at least 2 landmarks, got {}",
                self.n_points
            )));
        }
        if !(self.min_dist_x > 0.0) || !self.min_dist_x.is_finite() {
            return Err(Error::Config(format!(
                "min_dist_x must be positive, got {}",
                self.min_dist_x
            )));
        }
        Ok(())
    }
}

/// One point per occupied column at the mean row of its set pixels.
pub fn contour_from_mask(m: &ContourMask) -> Result<Polyline> {
    let mut points = Vec::new();
    for x in 0..m.width {
        let (mut sum, mut count) = (0usize, 0usize);
        for y in 0..m.height {
            if m.get(x, y) {
                sum += y;
                count += 1;
            }
        }
        if count > 0 {
            points.push(Point2::new(x as f64, sum as f64 / count as f64));
        }
    }
    if points.len() < 2 {
        return Err(Error::InvalidMask(format!(
            "mask has {} occupied column(s), need at least 2",
            points.len()
        )));
    }
    Polyline::new(points)
}

fn require_monotone(c: &Polyline) -> Result<()> {
    if c.is_monotone_x() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "contour must have strictly increasing x".into(),
        ))
    }
}

/// Landmarks on the vertical lines `x_k = (k + 0.5) W / n`, clipped to the
/// contour's x-span, with y interpolated on the contour.
pub fn equal_spaced_landmarks(c: &Polyline, n: usize, width: usize) -> Result<LandmarkSet> {
    require_monotone(c)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 landmarks, got {n}"
        )));
    }
    let (x0, x1) = (c.first().x, c.last().x);
    let lines: Vec<f64> = (0..n)
        .map(|k| (k as f64 + 0.5) * width as f64 / n as f64)
        .collect();
    let covered = lines.iter().filter(|&&x| x >= x0 && x <= x1).count();
    if covered < 2 {
        return Err(Error::InsufficientSpan {
            covered,
            requested: n,
        });
    }
    let points = lines
        .into_iter()
        .map(|x| {
            let x = x.clamp(x0, x1);
            Ok(Point2::new(x, c.interpolate_y(x)?))
        })
        .collect::<Result<Vec<_>>>()?;
    LandmarkSet::new(points)
}

/// Landmarks at random x positions over the contour span with adjacent gaps of
/// at least `policy.min_dist_x`. Positions are drawn uniformly from the set of
/// admissible configurations: `n` uniform offsets on the slack
/// `span - (n-1) d`, sorted, then shifted by `k d`. A landmark whose y strays
/// more than 3 MAD from the median of its 5-point neighbourhood is replaced by
/// that median.
pub fn random_spaced_landmarks(c: &Polyline, policy: &SpacingPolicy) -> Result<LandmarkSet> {
    require_monotone(c)?;
    policy.validate()?;
    if policy.kind != SpacingKind::Random {
        return Err(Error::InvalidArgument(
            "random_spaced_landmarks needs a random spacing policy".into(),
        ));
    }
    let n = policy.n_points;
    let d = policy.min_dist_x;
    let (x0, x1) = (c.first().x, c.last().x);
    let span = x1 - x0;
    let slack = span - (n - 1) as f64 * d;
    if slack < 0.0 {
        return Err(Error::InfeasibleSpacing {
            n,
            min_dist: d,
            span,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut offsets: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    let xs: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(k, u)| (x0 + u + k as f64 * d).min(x1))
        .collect();
    let ys = xs
        .iter()
        .map(|&x| c.interpolate_y(x))
        .collect::<Result<Vec<_>>>()?;
    let ys = replace_outliers(&ys);
    LandmarkSet::new(xs.into_iter().zip(ys).map(|(x, y)| Point2::new(x, y)).collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// 5-point median / 3 MAD rule, evaluated against the original values.
fn replace_outliers(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let w = n.min(5);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(2).min(n - w);
            let mut window = ys[start..start + w].to_vec();
            let med = median(&mut window);
            let mut dev: Vec<f64> = window.iter().map(|v| (v - med).abs()).collect();
            let mad = median(&mut dev);
            if (ys[i] - med).abs() > 3.0 * mad {
                med
            } else {
                ys[i]
            }
        })
        .collect()
}

/// Dispatches on the policy kind.
pub fn annotate(c: &Polyline, policy: &SpacingPolicy, width: usize) -> Result<LandmarkSet> {
    match policy.kind {
        SpacingKind::Equal => equal_spaced_landmarks(c, policy.n_points, width),
        SpacingKind::Random => random_spaced_landmarks(c, policy),
    }
}

/// Fits a B-spline through the landmarks and samples it densely.
pub fn revert_to_contour(l: &LandmarkSet) -> Result<Polyline> {
    let pts = l.points();
    if pts.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 landmarks to revert, got {}",
            pts.len()
        )));
    }
    let curve = fit_bspline(pts, default_control_count(pts.len()))?;
    eval_bspline(&curve, REVERT_SAMPLES)
}

/// One row of a landmark CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkRecord {
    pub filename: String,
    pub landmarks: LandmarkSet,
}

/// Writes `filename,n,x1,y1,...,xN,yN` rows. Coordinates are written in
/// shortest round-trip form.
pub fn write_landmarks_csv(path: &Path, records: &[LandmarkRecord]) -> Result<()> {
    let n_max = records.iter().map(|r| r.landmarks.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut header = vec!["filename".to_string(), "n".to_string()];
    for k in 1..=n_max {
        header.push(format!("x{k}"));
        header.push(format!("y{k}"));
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![r.filename.clone(), r.landmarks.len().to_string()];
        for p in r.landmarks.points() {
            row.push(p.x.to_string());
            row.push(p.y.to_string());
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_landmarks_csv(path: &Path) -> Result<Vec<LandmarkRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("filename") || header.get(1) != Some("n") {
        return Err(Error::malformed(
            path,
            "header must start with `filename,n`",
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = line + 2;
        let bad = |msg: String| Error::malformed(path, format!("row {row}: {msg}"));
        let filename = rec.get(0).unwrap_or_default().to_string();
        let n: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| bad("`n` is not an integer".into()))?;
        if rec.len() != 2 + 2 * n {
            return Err(bad(format!(
                "expected {} fields for n = {n}, got {}",
                2 + 2 * n,
                rec.len()
            )));
        }
        let coords = (0..2 * n)
            .map(|i| {
                rec[2 + i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("field {} is not a number", 3 + i)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let points = coords.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
        let landmarks = LandmarkSet::new(points).map_err(|e| bad(e.to_string()))?;
        out.push(LandmarkRecord {
            filename,
            landmarks,
        });
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::malformed(path, e.to_string())
    }
}
