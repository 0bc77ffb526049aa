use tonguenet::annotation::revert_to_contour;
use tonguenet::dataset::ImageGray;
use tonguenet::geometry::LandmarkSet;

/// Copy of `img` with the reverted contour as a 1-px polyline and each
/// landmark as a 3x3 square, all at full intensity.
pub fn draw(img: &ImageGray, landmarks: &LandmarkSet) -> tonguenet::Result<ImageGray> {
    let mut out = img.clone();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            out.set(x as usize, y as usize, 1.0);
        }
    };
    if landmarks.len() >= 2 {
        let contour = revert_to_contour(landmarks)?;
        for seg in contour.points().windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let steps = (a.dist(b) * 2.0).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                put(
                    (a.x + t * (b.x - a.x)).round() as i64,
                    (a.y + t * (b.y - a.y)).round() as i64,
                );
            }
        }
    }
    for p in landmarks.points() {
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(cx + dx, cy + dy);
            }
        }
    }
    Ok(out)
}
