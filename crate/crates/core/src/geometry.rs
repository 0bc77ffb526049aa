//! Points, affine maps, clamped B-splines, arc-length resampling and the
//! mean-sum-of-distances (MSD) curve metric.
//!
//! Coordinates are pixels with the origin at the top-left corner, `x` growing
//! to the right (columns) and `y` growing downward (rows).

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in pixel coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

fn check_finite(points: &[Point2]) -> Result<()> {
    match points.iter().position(|p| !p.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "point {i} is not finite: {:?}",
            points[i]
        ))),
        None => Ok(()),
    }
}

/// An ordered open curve of at least two points.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    points: Vec<Point2>,
    monotone_x: bool,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        check_finite(&points)?;
        let monotone_x = points.windows(2).all(|w| w[1].x > w[0].x);
        Ok(Self { points, monotone_x })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when x is strictly increasing along the polyline.
    pub fn is_monotone_x(&self) -> bool {
        self.monotone_x
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Linear interpolation of y at `x` on an x-monotone polyline. `x` is
    /// clamped to the polyline's x-span.
    pub fn interpolate_y(&self, x: f64) -> Result<f64> {
        if !self.monotone_x {
            return Err(Error::InvalidArgument(
                "interpolation needs an x-monotone polyline".into(),
            ));
        }
        let pts = &self.points;
        let x = x.clamp(pts[0].x, pts[pts.len() - 1].x);
        // First index whose x is >= the query.
        let hi = pts.partition_point(|p| p.x < x).clamp(1, pts.len() - 1);
        let (a, b) = (pts[hi - 1], pts[hi]);
        let t = (x - a.x) / (b.x - a.x);
        Ok(a.y + t * (b.y - a.y))
    }
}

/// Landmarks on the tongue surface, in pixel units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet(Vec<Point2>);

impl LandmarkSet {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty landmark set".into()));
        }
        check_finite(&points)?;
        Ok(Self(points))
    }

    pub fn points(&self) -> &[Point2] {
        &self.0
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Stable sort by ascending x.
    pub fn sort_by_x(&mut self) {
        self.0.sort_by(|a, b| a.x.total_cmp(&b.x));
    }

    pub fn is_sorted_by_x(&self) -> bool {
        self.0.windows(2).all(|w| w[0].x <= w[1].x)
    }

    /// True when every point lies inside `[0, width-1] x [0, height-1]`.
    pub fn within(&self, width: usize, height: usize) -> bool {
        let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
        self.0
            .iter()
            .all(|p| p.x >= 0.0 && p.x <= xm && p.y >= 0.0 && p.y <= ym)
    }
}

/// Affine map `(x, y, 1) -> (x', y')` stored as a 2x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub const fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    /// Linear part `[[a, b], [c, d]]` applied about `center`.
    fn about(center: Point2, a: f64, b: f64, c: f64, d: f64) -> Self {
        // p' = L (p - c) + c
        Self {
            m: [
                [a, b, center.x - a * center.x - b * center.y],
                [c, d, center.y - c * center.x - d * center.y],
            ],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let (a, b) = (&self.m, &other.m);
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AffineTransform { m }
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidParameter(
                "affine transform is singular".into(),
            ));
        }
        let m = &self.m;
        let (a, b, c, d) = (m[0][0] / det, m[0][1] / det, m[1][0] / det, m[1][1] / det);
        // Inverse linear part is [[d, -b], [-c, a]] / det.
        let ia = [[d, -b], [-c, a]];
        let tx = -(ia[0][0] * m[0][2] + ia[0][1] * m[1][2]);
        let ty = -(ia[1][0] * m[0][2] + ia[1][1] * m[1][2]);
        Ok(AffineTransform {
            m: [[ia[0][0], ia[0][1], tx], [ia[1][0], ia[1][1], ty]],
        })
    }
}

/// Builds the augmentation transform. The factors are applied in a fixed
/// order: horizontal flip (`x' = W - 1 - x`), scale about `center`, rotation
/// about `center`, then translation.
///
/// Positive angles rotate from the +x axis toward the +y axis of the pixel
/// frame, i.e. `R = [[cos, -sin], [sin, cos]]`.
pub fn make_affine(
    rotation_deg: f64,
    translate: (f64, f64),
    scale: f64,
    hflip: bool,
    center: Point2,
    image_width: usize,
) -> Result<AffineTransform> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if !rotation_deg.is_finite() || !translate.0.is_finite() || !translate.1.is_finite() {
        return Err(Error::InvalidParameter(
            "transform parameters must be finite".into(),
        ));
    }
    let mut t = AffineTransform::identity();
    if hflip {
        t = AffineTransform {
            m: [[-1.0, 0.0, image_width as f64 - 1.0], [0.0, 1.0, 0.0]],
        };
    }
    if scale != 1.0 {
        t = AffineTransform::about(center, scale, 0.0, 0.0, scale).compose(&t);
    }
    if rotation_deg != 0.0 {
        let (s, c) = rotation_deg.to_radians().sin_cos();
        t = AffineTransform::about(center, c, -s, s, c).compose(&t);
    }
    if translate != (0.0, 0.0) {
        t = AffineTransform::translation(translate.0, translate.1).compose(&t);
    }
    Ok(t)
}

/// Types whose points can be mapped through an [`AffineTransform`].
pub trait Transformable: Sized {
    fn transformed(&self, t: &AffineTransform) -> Self;
}

impl Transformable for Point2 {
    fn transformed(&self, t: &AffineTransform) -> Self {
        t.apply(*self)
    }
}

impl Transformable for Vec<Point2> {
    fn transformed(&self, t: &AffineTransform) -> Self {
        self.iter().map(|&p| t.apply(p)).collect()
    }
}

impl Transformable for LandmarkSet {
    fn transformed(&self, t: &AffineTransform) -> Self {
        LandmarkSet(self.0.transformed(t))
    }
}

impl Transformable for Polyline {
    fn transformed(&self, t: &AffineTransform) -> Self {
        let points = self.points.transformed(t);
        let monotone_x = points.windows(2).all(|w| w[1].x > w[0].x);
        Polyline { points, monotone_x }
    }
}

/// Maps every point through `t`, preserving order.
pub fn apply_affine<P: Transformable>(t: &AffineTransform, pts: &P) -> P {
    pts.transformed(t)
}

/// A clamped, non-rational B-spline curve in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSplineCurve {
    degree: usize,
    knots: Vec<f64>,
    control: Vec<Point2>,
}

impl BSplineCurve {
    pub fn new(degree: usize, knots: Vec<f64>, control: Vec<Point2>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Shape("B-spline degree must be at least 1".into()));
        }
        if control.len() < degree + 1 {
            return Err(Error::Shape(format!(
                "degree {degree} needs at least {} control points, got {}",
                degree + 1,
                control.len()
            )));
        }
        if knots.len() != control.len() + degree + 1 {
            return Err(Error::Shape(format!(
                "expected {} knots for {} control points of degree {degree}, got {}",
                control.len() + degree + 1,
                control.len(),
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Shape("knot vector must be non-decreasing".into()));
        }
        let (lo, hi) = (knots[degree], knots[knots.len() - 1 - degree]);
        if !(hi > lo) {
            return Err(Error::Shape("knot vector has an empty valid span".into()));
        }
        check_finite(&control)?;
        Ok(Self {
            degree,
            knots,
            control,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn control(&self) -> &[Point2] {
        &self.control
    }

    /// Parameter interval `[u_p, u_m]` on which the curve is defined.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.knots[self.degree],
            self.knots[self.knots.len() - 1 - self.degree],
        )
    }

    /// Evaluates one point with de Boor's algorithm.
    pub fn point_at(&self, u: f64) -> Point2 {
        let p = self.degree;
        let (lo, hi) = self.domain();
        let u = u.clamp(lo, hi);
        let k = find_span(&self.knots, p, self.control.len(), u);
        let mut d: Vec<Point2> = (0..=p).map(|j| self.control[j + k - p]).collect();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let left = self.knots[j + k - p];
                let right = self.knots[j + 1 + k - r];
                let alpha = if right > left {
                    (u - left) / (right - left)
                } else {
                    0.0
                };
                d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
            }
        }
        d[p]
    }
}

/// Knot span index `k` with `knots[k] <= u < knots[k+1]`, mapping the right
/// end of the domain to the last non-empty span.
fn find_span(knots: &[f64], degree: usize, n_control: usize, u: f64) -> usize {
    let last = n_control - 1;
    if u >= knots[last + 1] {
        return last;
    }
    if u <= knots[degree] {
        return degree;
    }
    let (mut lo, mut hi) = (degree, last + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if u < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Non-zero basis functions `N_{k-p..=k, p}(u)` by the triangular recurrence.
fn basis_functions(knots: &[f64], degree: usize, span: usize, u: f64) -> Vec<f64> {
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Default number of control points used when reverting landmarks.
pub fn default_control_count(n_points: usize) -> usize {
    n_points.min(8)
}

/// Clamped uniform knot vector for `n_control` control points.
pub fn clamped_uniform_knots(degree: usize, n_control: usize) -> Vec<f64> {
    let interior = n_control - degree - 1;
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..=interior).map(|j| j as f64 / (interior + 1) as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// Weight of the second-difference penalty on the control polygon. It only
/// matters where the data leave control points undetermined (repeated points,
/// knot spans without samples); there it pulls them onto the line between
/// their neighbours instead of toward the origin.
const SMOOTHING: f64 = 1e-2;

/// Least-squares B-spline fit with chord-length parameterization and clamped
/// uniform knots. The first and last control points are pinned to the first
/// and last input points, so the curve interpolates both ends. The degree is
/// `min(3, n_control - 1)`.
pub fn fit_bspline(pts: &[Point2], n_control: usize) -> Result<BSplineCurve> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {n}")));
    }
    if n_control < 2 || n_control > n {
        return Err(Error::Fit(format!(
            "control point count {n_control} must lie in [2, {n}]"
        )));
    }
    check_finite(pts).map_err(|e| Error::Fit(e.to_string()))?;

    let mut params = Vec::with_capacity(n);
    params.push(0.0);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += w[0].dist(w[1]);
        params.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Fit("all points are identical".into()));
    }
    for t in &mut params {
        *t /= acc;
    }
    params[n - 1] = 1.0;

    let degree = 3.min(n_control - 1);
    let knots = clamped_uniform_knots(degree, n_control);
    let (first, last) = (pts[0], pts[n - 1]);
    let mut control = vec![first; n_control];
    control[n_control - 1] = last;

    let unknowns = n_control - 2;
    if unknowns > 0 {
        let rows = n - 2 + unknowns;
        let mut a = DMatrix::<f64>::zeros(rows, unknowns);
        let mut rhs = DMatrix::<f64>::zeros(rows, 2);
        for (r, i) in (1..n - 1).enumerate() {
            let u = params[i];
            let span = find_span(&knots, degree, n_control, u);
            let basis = basis_functions(&knots, degree, span, u);
            let mut q = pts[i];
            for (o, &b) in basis.iter().enumerate() {
                let j = span - degree + o;
                if j == 0 {
                    q = q - first * b;
                } else if j == n_control - 1 {
                    q = q - last * b;
                } else {
                    a[(r, j - 1)] = b;
                }
            }
            rhs[(r, 0)] = q.x;
            rhs[(r, 1)] = q.y;
        }
        // Rows `w (P[j-1] - 2 P[j] + P[j+1]) = 0` for every interior P[j].
        for j in 1..=unknowns {
            let r = n - 2 + j - 1;
            let mut q = Point2::new(0.0, 0.0);
            for (k, c) in [(j - 1, 1.0), (j, -2.0), (j + 1, 1.0)] {
                if k == 0 {
                    q = q - first * (SMOOTHING * c);
                } else if k == n_control - 1 {
                    q = q - last * (SMOOTHING * c);
                } else {
                    a[(r, k - 1)] = SMOOTHING * c;
                }
            }
            rhs[(r, 0)] = q.x;
            rhs[(r, 1)] = q.y;
        }
        let svd = a.svd(true, true);
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Fit(format!("least-squares solve failed: {e}")))?;
        for j in 0..unknowns {
            control[j + 1] = Point2::new(sol[(j, 0)], sol[(j, 1)]);
        }
    }
    BSplineCurve::new(degree, knots, control)
}

/// Samples the curve at `n_samples` parameters spread uniformly over its
/// domain. The first and last samples are exactly the end control points.
pub fn eval_bspline(c: &BSplineCurve, n_samples: usize) -> Result<Polyline> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    // Re-validate: fields may come from deserialized data.
    let c = BSplineCurve::new(c.degree, c.knots.clone(), c.control.clone())?;
    let (lo, hi) = c.domain();
    let mut out = Vec::with_capacity(n_samples);
    out.push(c.control[0]);
    for k in 1..n_samples - 1 {
        let u = lo + (hi - lo) * k as f64 / (n_samples - 1) as f64;
        out.push(c.point_at(u));
    }
    out.push(c.control[c.control.len() - 1]);
    Polyline::new(out)
}

/// Mean of nearest-point distances taken in both directions:
/// `(Σ_a min_b |a-b| + Σ_b min_a |b-a|) / (|a| + |b|)`.
pub fn msd(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "msd needs two non-empty point sets".into(),
        ));
    }
    let total = nearest_distance_sum(a, b) + nearest_distance_sum(b, a);
    Ok(total / (a.len() + b.len()) as f64)
}

/// Σ over `from` of the distance to the nearest point of `to`, using an
/// x-sorted copy of `to` and an outward scan that stops once |dx| exceeds the
/// best distance found.
fn nearest_distance_sum(from: &[Point2], to: &[Point2]) -> f64 {
    let mut sorted = to.to_vec();
    sorted.sort_by(|p, q| p.x.total_cmp(&q.x));
    from.iter()
        .map(|&p| {
            let start = sorted.partition_point(|q| q.x < p.x);
            let mut best_sq = f64::INFINITY;
            for q in &sorted[start..] {
                let dx = q.x - p.x;
                if dx * dx > best_sq {
                    break;
                }
                let dy = q.y - p.y;
                best_sq = best_sq.min(dx * dx + dy * dy);
            }
            for q in sorted[..start].iter().rev() {
                let dx = p.x - q.x;
                if dx * dx > best_sq {
                    break;
                }
                let dy = q.y - p.y;
                best_sq = best_sq.min(dx * dx + dy * dy);
            }
            best_sq.sqrt()
        })
        .sum()
}

/// `n` points at equal arc-length spacing along `p`, endpoints preserved.
pub fn resample_by_arclength(p: &Polyline, n: usize) -> Result<Polyline> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let pts = p.points();
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let next = cum[cum.len() - 1] + w[0].dist(w[1]);
        cum.push(next);
    }
    let total = cum[cum.len() - 1];
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("polyline has zero length".into()));
    }
    let mut out = Vec::with_capacity(n);
    out.push(pts[0]);
    let mut seg = 1;
    for k in 1..n - 1 {
        let s = total * k as f64 / (n - 1) as f64;
        while seg < cum.len() - 1 && cum[seg] < s {
            seg += 1;
        }
        let (s0, s1) = (cum[seg - 1], cum[seg]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        out.push(pts[seg - 1] + (pts[seg] - pts[seg - 1]) * t);
    }
    out.push(pts[pts.len() - 1]);
    Polyline::new(out)
}
