//! Online geometric augmentation. Image and landmarks go through the same
//! affine map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ImageGray, Sample};
use crate::geometry::{apply_affine, make_affine, AffineTransform, Point2};

/// Ranges are closed intervals sampled uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rot_deg: (f64, f64),
    pub translate_px: (f64, f64),
    pub scale: (f64, f64),
    pub hflip_prob: f64,
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rot_deg: (-25.0, 25.0),
            translate_px: (-30.0, 30.0),
            scale: (0.5, 2.0),
            hflip_prob: 0.5,
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// All ranges collapsed to the identity.
    pub fn identity() -> Self {
        Self {
            rot_deg: (0.0, 0.0),
            translate_px: (0.0, 0.0),
            scale: (1.0, 1.0),
            hflip_prob: 0.0,
            enabled: true,
        }
    }

    /// One uniform draw from the ranges.
    pub fn draw(&self, rng: &mut impl Rng) -> AugmentParams {
        let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let rot_deg = uniform(self.rot_deg);
        let tx = uniform(self.translate_px);
        let ty = uniform(self.translate_px);
        let scale = uniform(self.scale);
        let hflip = rng.random::<f64>() < self.hflip_prob;
        AugmentParams { rot_deg, translate: (tx, ty), scale, hflip }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub rot_deg: f64,
    pub translate: (f64, f64),
    pub scale: f64,
    pub hflip: bool,
}

impl AugmentParams {
    pub fn transform(&self, center: Point2, width: usize) -> AffineTransform {
        make_affine(self.rot_deg, self.translate, self.scale, self.hflip, center, width)
            .unwrap_or_else(|_| AffineTransform::identity())
    }
}

/// Output pixel `p` takes the bilinear sample of `img` at `t^-1(p)`;
/// samples outside the source frame are 0.
pub fn warp_affine(img: &ImageGray, t: &AffineTransform) -> ImageGray {
    if t.is_identity() {
        return img.clone();
    }
    let inv = match t.inverse() {
        Ok(inv) => inv,
        Err(_) => return ImageGray::zeros(img.width(), img.height()),
    };
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let src = inv.apply(Point2::new(x as f64, y as f64));
            data.push(img.sample_bilinear(src.x, src.y).clamp(0.0, 1.0));
        }
    }
    ImageGray::new(w, h, data).expect("warped intensities are clamped")
}

/// Draws a transform about the image centre and applies it to image and
/// landmarks. If a draw pushes any landmark outside the frame it is redrawn,
/// up to 10 tries, after which the sample is returned unchanged. Landmarks are
/// re-sorted by x.
pub fn augment(s: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Sample {
    if !cfg.enabled {
        return s.clone();
    }
    let (w, h) = (s.image.width(), s.image.height());
    let center = Point2::new((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    for _ in 0..10 {
        let t = cfg.draw(rng).transform(center, w);
        let mut landmarks = apply_affine(&t, &s.landmarks);
        if !landmarks.within(w, h) {
            continue;
        }
        landmarks.sort_by_x();
        return Sample {
            image: warp_affine(&s.image, &t),
            landmarks,
            id: s.id.clone(),
        };
    }
    s.clone()
}
