//! Synthetic ultrasound-like frames: a bright band along a smooth random
//! curve, multiplicative Rayleigh speckle and additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ImageGray, Sample};
use crate::annotation::{annotate, SpacingKind, SpacingPolicy};
use crate::error::{Error, Result};
use crate::geometry::{eval_bspline, fit_bspline, Point2, Polyline};
use crate::seed::stream_seed;

const BACKGROUND: f64 = 0.05;
const AMPLITUDE: (f64, f64) = (0.65, 0.9);
/// Steepest allowed |dy/dx| along a generated curve.
const MAX_SLOPE: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Standard deviation of the band's Gaussian cross-section, in pixels.
    pub band_sigma: f64,
    /// Speckle strength: 0 disables it, 1 is fully developed speckle.
    pub speckle_scale: f64,
    pub noise_sigma: f64,
    /// Interior control points of the random curve.
    pub curve_bumps: usize,
    pub n_points: usize,
    pub spacing: SpacingKind,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            band_sigma: 3.0,
            speckle_scale: 0.5,
            noise_sigma: 0.05,
            curve_bumps: 2,
            n_points: 10,
            spacing: SpacingKind::Random,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config(format!(
                "synthetic frames must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.band_sigma > 0.0) || self.speckle_scale < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Config(
                "band_sigma must be positive and noise levels non-negative".into(),
            ));
        }
        if self.curve_bumps == 0 || self.n_points < 2 {
            return Err(Error::Config(
                "curve_bumps must be positive and n_points at least 2".into(),
            ));
        }
        Ok(())
    }

    fn policy(&self, seed: u64) -> SpacingPolicy {
        match self.spacing {
            SpacingKind::Equal => SpacingPolicy::equal(self.n_points),
            SpacingKind::Random => SpacingPolicy::random(self.n_points, self.width, seed),
        }
    }
}

/// A generated sample together with the clean curve it was drawn from.
#[derive(Clone, Debug)]
pub struct SynthFrame {
    pub sample: Sample,
    pub contour: Polyline,
}

/// Random x-monotone curve through `curve_bumps + 2` control points with x in
/// `[0.1W, 0.9W]` and y in `[0.3H, 0.8H]`. The end control points sit in the
/// outer tenths of that range, so the curve always spans at least `0.6W`.
/// Draws that leave the frame or get steeper than `MAX_SLOPE` are redrawn.
fn random_curve(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Polyline> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let k = cfg.curve_bumps + 2;
    for _ in 0..100 {
        let first = rng.random_range(0.1 * w..=0.2 * w);
        let last = rng.random_range(0.8 * w..=0.9 * w);
        let gap = 0.5 * (last - first) / (k - 1) as f64;
        let slack = (last - first) - gap * k as f64;
        let mut offs: Vec<f64> = (0..k - 2).map(|_| rng.random::<f64>() * slack).collect();
        offs.sort_by(f64::total_cmp);
        let mut xs = vec![first];
        xs.extend(offs.iter().enumerate().map(|(i, u)| first + gap * (i + 1) as f64 + u));
        xs.push(last);
        let ctrl: Vec<Point2> = xs
            .into_iter()
            .map(|x| Point2::new(x, rng.random_range(0.3 * h..=0.8 * h)))
            .collect();
        let spline = fit_bspline(&ctrl, k)?;
        let n = (4.0 * (last - first)).ceil().max(8.0) as usize;
        let curve = eval_bspline(&spline, n)?;
        let inside = curve
            .points()
            .iter()
            .all(|p| p.y >= 1.0 && p.y <= h - 2.0);
        let gentle = curve
            .points()
            .windows(2)
            .all(|w| (w[1].y - w[0].y).abs() <= MAX_SLOPE * (w[1].x - w[0].x));
        if curve.is_monotone_x() && inside && gentle {
            return Ok(curve);
        }
    }
    Err(Error::Config(
        "could not draw an x-monotone curve; try fewer curve_bumps".into(),
    ))
}

/// Squared distance from `p` to segment `ab`.
fn seg_dist_sq(p: (f64, f64), a: Point2, b: Point2) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let (wx, wy) = (p.0 - a.x, p.1 - a.y);
    let len_sq = vx * vx + vy * vy;
    let t = if len_sq > 0.0 {
        ((wx * vx + wy * vy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    dx * dx + dy * dy
}

/// Clean rendering: `BACKGROUND + amplitude * exp(-d^2 / (2 sigma^2))` where
/// `d` is the distance from the pixel centre to the curve.
fn render_band(cfg: &SynthConfig, curve: &Polyline, amplitude: f64) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let reach = (6.0 * cfg.band_sigma).ceil();
    let mut dist_sq = vec![f64::INFINITY; w * h];
    for seg in curve.points().windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + reach).ceil() as usize).min(w - 1);
        let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
        let y1 = ((a.y.max(b.y) + reach).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = seg_dist_sq((x as f64, y as f64), a, b);
                let cell = &mut dist_sq[y * w + x];
                if d < *cell {
                    *cell = d;
                }
            }
        }
    }
    let inv = 1.0 / (2.0 * cfg.band_sigma * cfg.band_sigma);
    dist_sq
        .into_iter()
        .map(|d| BACKGROUND + amplitude * (-d * inv).exp())
        .collect()
}

/// Draws one frame. Deterministic per `(cfg, seed)`.
pub fn synth_frame(cfg: &SynthConfig, seed: u64) -> Result<SynthFrame> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contour = random_curve(cfg, &mut rng)?;
    let amplitude = rng.random_range(AMPLITUDE.0..=AMPLITUDE.1);
    let clean = render_band(cfg, &contour, amplitude);

    // Rayleigh(1) has mean sqrt(pi/2); the speckle factor is normalized to
    // mean 1 and blended in by speckle_scale.
    let rayleigh_mean = (std::f64::consts::PI / 2.0).sqrt();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let data = clean
        .into_iter()
        .map(|v| {
            let mut v = v;
            if cfg.speckle_scale > 0.0 {
                let u: f64 = rng.random();
                let r = (-2.0 * (1.0 - u).ln()).sqrt();
                v *= (1.0 + cfg.speckle_scale * (r / rayleigh_mean - 1.0)).max(0.0);
            }
            if cfg.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    let image = ImageGray::new(cfg.width, cfg.height, data)?;

    let policy = cfg.policy(stream_seed(seed, 1, 0));
    let landmarks = annotate(&contour, &policy, cfg.width)?;
    let sample = Sample::new(image, landmarks, format!("{seed:016x}"))?;
    Ok(SynthFrame { sample, contour })
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Sample> {
    synth_frame(cfg, seed).map(|f| f.sample)
}

/// `count` samples with ids `00000`, `00001`, ...; sample `i` uses the stream
/// seed derived from `(seed, i)`.
pub fn synth_dataset(cfg: &SynthConfig, count: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..count)
        .map(|i| {
            let mut s = synth_generate(cfg, stream_seed(seed, i as u64, 0))?;
            s.id = format!("{i:05}");
            Ok(s)
        })
        .collect()
}
