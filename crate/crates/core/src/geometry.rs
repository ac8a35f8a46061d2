//! Planar geometry for annotated outlines: shoelace areas, bounding boxes,
//! box IoU, and polygon IoU.
//!
//! All coordinates are image pixels with `y` growing downward. Under that
//! convention the standard shoelace sum is positive for an outline traced
//! clockwise on screen, which is the order annotators use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of scanlines per pixel row used by [`polygon_iou`].
pub const DEFAULT_RESOLUTION: u32 = 4;

/// Signed areas at or below this magnitude (square pixels) are degenerate.
pub const ZERO_AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Eight-vertex bird outline. Vertex 0 is the head and vertex 4 the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polygon8 {
    points: [Point; 8],
}

impl Polygon8 {
    pub const HEAD: usize = 0;
    pub const TAIL: usize = 4;

    /// Builds an outline, rejecting non-finite coordinates. Orientation and
    /// area are not checked here; see [`validate_polygon`].
    pub fn new(points: [Point; 8]) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite vertex ({}, {})",
                p.x, p.y
            )));
        }
        Ok(Polygon8 { points })
    }

    pub fn from_slice(points: &[Point]) -> Result<Self> {
        let points: [Point; 8] = points.try_into().map_err(|_| {
            Error::InvalidGeometry(format!("expected 8 vertices, got {}", points.len()))
        })?;
        Polygon8::new(points)
    }

    /// Clockwise outline of a box with a vertex at every corner and edge
    /// midpoint, starting at the top-left corner.
    pub fn from_bbox(b: &BBox) -> Self {
        let xm = 0.5 * (b.x_min + b.x_max);
        let ym = 0.5 * (b.y_min + b.y_max);
        Polygon8 {
            points: [
                Point::new(b.x_min, b.y_min),
                Point::new(xm, b.y_min),
                Point::new(b.x_max, b.y_min),
                Point::new(b.x_max, ym),
                Point::new(b.x_max, b.y_max),
                Point::new(xm, b.y_max),
                Point::new(b.x_min, b.y_max),
                Point::new(b.x_min, ym),
            ],
        }
    }

    pub fn points(&self) -> &[Point; 8] {
        &self.points
    }

    pub fn head(&self) -> Point {
        self.points[Self::HEAD]
    }

    pub fn tail(&self) -> Point {
        self.points[Self::TAIL]
    }

    /// Shoelace sum over two; positive when clockwise in image coordinates.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Result<BBox> {
        polygon_to_bbox(self)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Polygon8 {
            points: self.points.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }

    /// True when the outline bounds a convex region traced once. Collinear
    /// and repeated vertices are allowed.
    pub fn is_convex(&self) -> bool {
        convex_ring(&self.points).is_some()
    }
}

/// Axis-aligned box with `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidGeometry("non-finite box coordinate".into()));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidGeometry(format!(
                "empty box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        sum += p.x * q.y - q.x * p.y;
    }
    0.5 * sum
}

/// Unsigned shoelace area; zero for degenerate outlines.
pub fn polygon_area(p: &Polygon8) -> f64 {
    p.area()
}

/// Tightest axis-aligned box around the eight vertices.
pub fn polygon_to_bbox(p: &Polygon8) -> Result<BBox> {
    let (mut x_min, mut y_min) = (f64::INFINITY, f64::INFINITY);
    let (mut x_max, mut y_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for pt in p.points() {
        x_min = x_min.min(pt.x);
        y_min = y_min.min(pt.y);
        x_max = x_max.max(pt.x);
        y_max = y_max.max(pt.y);
    }
    BBox::new(x_min, y_min, x_max, y_max)
}

pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of the filled regions of two outlines.
///
/// Convex pairs are clipped exactly. Anything else goes through
/// [`polygon_iou_rasterized`], which fills with the even-odd rule so that
/// self-intersecting outlines still have a well-defined region.
pub fn polygon_iou(a: &Polygon8, b: &Polygon8, resolution: u32) -> Result<f64> {
    if let (Some(ra), Some(rb)) = (convex_ring(a.points()), convex_ring(b.points())) {
        let area_a = signed_area(&ra).abs();
        let area_b = signed_area(&rb).abs();
        if area_a <= ZERO_AREA_EPS && area_b <= ZERO_AREA_EPS {
            return Err(Error::InvalidGeometry(
                "both polygons have zero area".into(),
            ));
        }
        if !bbox_overlap(a.points(), b.points()) {
            return Ok(0.0);
        }
        let inter = convex_intersection_area(&ra, &rb);
        let union = area_a + area_b - inter;
        if union <= 0.0 {
            return Ok(0.0);
        }
        return Ok((inter / union).clamp(0.0, 1.0));
    }
    polygon_iou_rasterized(a, b, resolution)
}

/// Scanline IoU: `resolution` scanlines per pixel row over the joint
/// bounding box, with spans along each scanline measured exactly.
pub fn polygon_iou_rasterized(a: &Polygon8, b: &Polygon8, resolution: u32) -> Result<f64> {
    if resolution == 0 {
        return Err(Error::InvalidGeometry(
            "resolution must be at least 1".into(),
        ));
    }
    if a.area() <= ZERO_AREA_EPS && b.area() <= ZERO_AREA_EPS {
        return Err(Error::InvalidGeometry(
            "both polygons have zero area".into(),
        ));
    }
    if !bbox_overlap(a.points(), b.points()) {
        return Ok(0.0);
    }

    let y_lo = a
        .points()
        .iter()
        .chain(b.points())
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min)
        .floor();
    let y_hi = a
        .points()
        .iter()
        .chain(b.points())
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    let rows = ((y_hi - y_lo) as u64).max(1) * u64::from(resolution);
    let step = 1.0 / f64::from(resolution);

    let mut spans_a = Vec::with_capacity(8);
    let mut spans_b = Vec::with_capacity(8);
    let mut inter = 0.0;
    let mut union = 0.0;
    for row in 0..rows {
        let y = y_lo + (row as f64 + 0.5) * step;
        scanline_spans(a.points(), y, &mut spans_a);
        scanline_spans(b.points(), y, &mut spans_b);
        let len_a: f64 = spans_a.iter().map(|(l, r)| r - l).sum();
        let len_b: f64 = spans_b.iter().map(|(l, r)| r - l).sum();
        let both = overlap_length(&spans_a, &spans_b);
        inter += both;
        union += len_a + len_b - both;
    }
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

fn bbox_overlap(a: &[Point], b: &[Point]) -> bool {
    let extent = |pts: &[Point]| {
        pts.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    };
    let (ax0, ay0, ax1, ay1) = extent(a);
    let (bx0, by0, bx1, by1) = extent(b);
    ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
}

/// Even-odd spans of the outline along the horizontal line at `y`, sorted.
fn scanline_spans(points: &[Point], y: f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    let mut xs = [0.0f64; 8];
    let mut n = 0;
    for i in 0..points.len() {
        let p = points[i];
        let q = points[(i + 1) % points.len()];
        if (p.y > y) != (q.y > y) {
            xs[n] = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
            n += 1;
        }
    }
    let xs = &mut xs[..n];
    xs.sort_by(f64::total_cmp);
    for pair in xs.chunks_exact(2) {
        if pair[1] > pair[0] {
            out.push((pair[0], pair[1]));
        }
    }
}

/// Total length shared by two sorted, internally disjoint span lists.
fn overlap_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Deduplicated vertex ring when the outline is convex and simple.
fn convex_ring(points: &[Point]) -> Option<Vec<Point>> {
    let mut ring: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        if ring
            .last()
            .is_none_or(|q| (q.x - p.x).abs() > 1e-12 || (q.y - p.y).abs() > 1e-12)
        {
            ring.push(p);
        }
    }
    while ring.len() > 1 {
        let first = ring[0];
        let last = ring[ring.len() - 1];
        if (first.x - last.x).abs() <= 1e-12 && (first.y - last.y).abs() <= 1e-12 {
            ring.pop();
        } else {
            break;
        }
    }
    let n = ring.len();
    if n < 3 {
        return None;
    }

    let mut sign = 0.0f64;
    let mut turning = 0.0f64;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let c = ring[(i + 2) % n];
        let z = cross(a, b, c);
        let scale = ((b.x - a.x).hypot(b.y - a.y)) * ((c.x - b.x).hypot(c.y - b.y));
        if z.abs() > 1e-12 * scale.max(1e-300) {
            if sign == 0.0 {
                sign = z.signum();
            } else if z.signum() != sign {
                return None;
            }
        }
        let h1 = (b.y - a.y).atan2(b.x - a.x);
        let h2 = (c.y - b.y).atan2(c.x - b.x);
        let mut d = h2 - h1;
        while d > std::f64::consts::PI {
            d -= std::f64::consts::TAU;
        }
        while d < -std::f64::consts::PI {
            d += std::f64::consts::TAU;
        }
        turning += d;
    }
    if sign == 0.0 {
        return None;
    }
    // A pentagram also turns consistently but winds twice.
    if (turning.abs() - std::f64::consts::TAU).abs() > 1e-6 {
        return None;
    }
    Some(ring)
}

/// Sutherland-Hodgman clip of one convex ring by another; returns the
/// area of the intersection.
fn convex_intersection_area(subject: &[Point], clip: &[Point]) -> f64 {
    let orient = signed_area(clip).signum();
    if orient == 0.0 {
        return 0.0;
    }
    let mut output: Vec<Point> = subject.to_vec();
    let mut input = Vec::with_capacity(16);
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        std::mem::swap(&mut input, &mut output);
        output.clear();
        let inside = |p: Point| cross(e0, e1, p) * orient >= 0.0;
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, e0, e1));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, e0, e1));
            }
        }
    }
    signed_area(&output).abs()
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let denom = d1 - d2;
    if denom == 0.0 {
        return q;
    }
    let t = d1 / denom;
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Annotation problems detected on a raw outline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolygonAnomaly {
    WrongPointCount,
    NonFinite,
    OutOfFrame,
    ZeroArea,
    CounterClockwise,
}

impl PolygonAnomaly {
    pub fn code(&self) -> &'static str {
        match self {
            PolygonAnomaly::WrongPointCount => "WrongPointCount",
            PolygonAnomaly::NonFinite => "NonFinite",
            PolygonAnomaly::OutOfFrame => "OutOfFrame",
            PolygonAnomaly::ZeroArea => "ZeroArea",
            PolygonAnomaly::CounterClockwise => "CounterClockwise",
        }
    }
}

/// Checks a raw outline against the annotation rules. An empty result means
/// the outline is usable as-is. Codes come back in a fixed order.
pub fn validate_polygon(points: &[Point], frame_w: f64, frame_h: f64) -> Vec<PolygonAnomaly> {
    let mut found = Vec::new();
    if points.len() != 8 {
        found.push(PolygonAnomaly::WrongPointCount);
    }
    if points.iter().any(|p| !p.is_finite()) {
        found.push(PolygonAnomaly::NonFinite);
        return found;
    }
    if points
        .iter()
        .any(|p| p.x < 0.0 || p.y < 0.0 || p.x > frame_w || p.y > frame_h)
    {
        found.push(PolygonAnomaly::OutOfFrame);
    }
    let area = signed_area(points);
    if area.abs() <= ZERO_AREA_EPS {
        found.push(PolygonAnomaly::ZeroArea);
    } else if area < 0.0 {
        found.push(PolygonAnomaly::CounterClockwise);
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(pts: &[(f64, f64)]) -> Polygon8 {
        let v: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        Polygon8::from_slice(&v).unwrap()
    }

    fn square(x: f64, y: f64, side: f64) -> Polygon8 {
        Polygon8::from_bbox(&BBox::new(x, y, x + side, y + side).unwrap())
    }

    /// Crossing-number test, written independently of the scanline code.
    fn inside(p: &Polygon8, x: f64, y: f64) -> bool {
        let pts = p.points();
        let mut c = false;
        let mut j = 7;
        for i in 0..8 {
            let (xi, yi) = (pts[i].x, pts[i].y);
            let (xj, yj) = (pts[j].x, pts[j].y);
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                c = !c;
            }
            j = i;
        }
        c
    }

    fn monte_carlo_iou(a: &Polygon8, b: &Polygon8, samples: usize, seed: u64) -> f64 {
        let pts: Vec<Point> = a.points().iter().chain(b.points()).copied().collect();
        let x0 = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let x1 = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let y0 = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let y1 = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut i, mut u) = (0usize, 0usize);
        for _ in 0..samples {
            let x = rng.random_range(x0..x1);
            let y = rng.random_range(y0..y1);
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            if ia && ib {
                i += 1;
            }
            if ia || ib {
                u += 1;
            }
        }
        i as f64 / u as f64
    }

    #[test]
    fn area_of_padded_unit_square() {
        let p = poly(&[
            (0.0, 0.0),
            (0.0, 0.5),
            (0.0, 1.0),
            (0.5, 1.0),
            (1.0, 1.0),
            (1.0, 0.5),
            (1.0, 0.0),
            (0.5, 0.0),
        ]);
        assert_eq!(polygon_area(&p), 1.0);
    }

    #[test]
    fn area_of_triangle_with_duplicates() {
        // 1/2 * 4 * 3
        let p = poly(&[
            (0.0, 0.0),
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 0.0),
            (4.0, 0.0),
            (0.0, 3.0),
            (0.0, 3.0),
            (0.0, 3.0),
        ]);
        assert_eq!(polygon_area(&p), 6.0);
    }

    #[test]
    fn collinear_outline_has_zero_area() {
        let p = poly(
            &(0..8)
                .map(|i| (i as f64, 2.0 * i as f64))
                .collect::<Vec<_>>(),
        );
        assert_eq!(polygon_area(&p), 0.0);
    }

    #[test]
    fn non_finite_vertex_is_rejected() {
        let mut pts = [Point::new(0.0, 0.0); 8];
        pts[3] = Point::new(f64::NAN, 1.0);
        assert!(matches!(Polygon8::new(pts), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn bbox_from_polygon() {
        let p = poly(&[
            (10.0, 20.0),
            (30.0, 20.0),
            (50.0, 20.0),
            (50.0, 50.0),
            (50.0, 80.0),
            (30.0, 80.0),
            (10.0, 80.0),
            (10.0, 50.0),
        ]);
        assert_eq!(
            polygon_to_bbox(&p).unwrap(),
            BBox::new(10.0, 20.0, 50.0, 80.0).unwrap()
        );
        let sq = square(3.0, 4.0, 5.0);
        assert_eq!(sq.bbox().unwrap(), BBox::new(3.0, 4.0, 8.0, 9.0).unwrap());

        let diamond = poly(&[
            (5.0, 0.0),
            (7.5, 2.5),
            (10.0, 5.0),
            (7.5, 7.5),
            (5.0, 10.0),
            (2.5, 7.5),
            (0.0, 5.0),
            (2.5, 2.5),
        ]);
        assert_eq!(
            diamond.bbox().unwrap(),
            BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()
        );
    }

    #[test]
    fn flat_polygon_has_no_bbox() {
        let p = poly(&(0..8).map(|i| (i as f64, 4.0)).collect::<Vec<_>>());
        assert!(matches!(p.bbox(), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn box_iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = BBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
        let far = BBox::new(10.0, 10.0, 11.0, 11.0).unwrap();
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &far), 0.0);
        assert!((bbox_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);

        // pixel-count oracle on a 1/16 pixel lattice
        let n = 16;
        let (mut inter, mut union) = (0u32, 0u32);
        for i in 0..(3 * n) {
            for j in 0..(3 * n) {
                let x = (i as f64 + 0.5) / n as f64;
                let y = (j as f64 + 0.5) / n as f64;
                let pa = Point::new(x, y);
                let (ia, ib) = (a.contains(pa), b.contains(pa));
                inter += u32::from(ia && ib);
                union += u32::from(ia || ib);
            }
        }
        assert!((inter as f64 / union as f64 - bbox_iou(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn box_rejects_inverted_extent() {
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn polygon_iou_identity_and_disjoint() {
        let star = poly(&[
            (10.0, 0.0),
            (12.0, 8.0),
            (20.0, 10.0),
            (12.0, 12.0),
            (10.0, 20.0),
            (8.0, 12.0),
            (0.0, 10.0),
            (8.0, 8.0),
        ]);
        assert!(!star.is_convex());
        assert!((polygon_iou(&star, &star, 4).unwrap() - 1.0).abs() < 1e-12);
        let far = star.translate(100.0, 0.0);
        assert_eq!(polygon_iou(&star, &far, 4).unwrap(), 0.0);
    }

    #[test]
    fn shifted_unit_square_iou() {
        // overlap 1/2, union 3/2
        let a = square(0.0, 0.0, 1.0);
        let b = a.translate(0.5, 0.0);
        let raster = polygon_iou_rasterized(&a, &b, DEFAULT_RESOLUTION).unwrap();
        assert!((raster - 1.0 / 3.0).abs() < 0.01, "{raster}");
        let exact = polygon_iou(&a, &b, DEFAULT_RESOLUTION).unwrap();
        assert!((exact - 1.0 / 3.0).abs() < 1e-12, "{exact}");
        let mc = monte_carlo_iou(&a, &b, 100_000, 7);
        assert!((mc - 1.0 / 3.0).abs() < 0.01, "{mc}");
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let flat = poly(&(0..8).map(|i| (i as f64, 4.0)).collect::<Vec<_>>());
        assert!(matches!(
            polygon_iou(&flat, &flat, 4),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(polygon_iou_rasterized(&flat, &flat, 4).is_err());
        let sq = square(0.0, 0.0, 8.0);
        assert_eq!(polygon_iou(&flat, &sq, 4).unwrap(), 0.0);
        assert!(polygon_iou_rasterized(&sq, &sq, 0).is_err());
    }

    #[test]
    fn convexity_detection() {
        assert!(square(0.0, 0.0, 3.0).is_convex());
        // pentagram-like winding: consistent turns, total 4*pi
        let wound = poly(&[
            (0.0, -10.0),
            (5.9, 8.1),
            (-9.5, -3.1),
            (9.5, -3.1),
            (-5.9, 8.1),
            (-5.9, 8.1),
            (-5.9, 8.1),
            (-5.9, 8.1),
        ]);
        assert!(!wound.is_convex());
    }

    #[test]
    fn validation_codes() {
        let sq = square(10.0, 10.0, 20.0);
        assert!(validate_polygon(sq.points(), 100.0, 100.0).is_empty());

        assert_eq!(
            validate_polygon(&sq.points()[..7], 100.0, 100.0),
            vec![PolygonAnomaly::WrongPointCount]
        );

        let mut pts = *sq.points();
        pts[2].x = 105.0;
        assert_eq!(
            validate_polygon(&pts, 100.0, 100.0),
            vec![PolygonAnomaly::OutOfFrame]
        );

        let mut rev = *sq.points();
        rev.reverse();
        assert_eq!(
            validate_polygon(&rev, 100.0, 100.0),
            vec![PolygonAnomaly::CounterClockwise]
        );

        let flat: Vec<Point> = (0..8).map(|i| Point::new(i as f64, 4.0)).collect();
        assert_eq!(
            validate_polygon(&flat, 100.0, 100.0),
            vec![PolygonAnomaly::ZeroArea]
        );

        let mut bad = *sq.points();
        bad[0].y = f64::INFINITY;
        assert_eq!(
            validate_polygon(&bad, 100.0, 100.0),
            vec![PolygonAnomaly::NonFinite]
        );
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    fn arb_blob() -> impl Strategy<Value = Polygon8> {
        (
            0.0..60.0f64,
            0.0..60.0f64,
            prop::array::uniform8(2.0..20.0f64),
            0.0..std::f64::consts::TAU,
        )
            .prop_map(|(cx, cy, radii, phase)| {
                let pts: Vec<Point> = radii
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        let t = phase + k as f64 * std::f64::consts::FRAC_PI_4;
                        Point::new(cx + r * t.cos(), cy + r * t.sin())
                    })
                    .collect();
                Polygon8::from_slice(&pts).unwrap()
            })
    }

    proptest! {
        #[test]
        fn box_iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = bbox_iou(&a, &b);
            prop_assert_eq!(ab, bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(bbox_iou(&a, &a), 1.0);
        }

        #[test]
        fn contained_box_iou_is_area_ratio(outer in arb_box(), fx in 0.0..1.0f64, fy in 0.0..1.0f64, fw in 0.1..1.0f64, fh in 0.1..1.0f64) {
            let x0 = outer.x_min + fx * (1.0 - fw) * outer.width();
            let y0 = outer.y_min + fy * (1.0 - fh) * outer.height();
            let inner = BBox::new(x0, y0, x0 + fw * outer.width(), y0 + fh * outer.height()).unwrap();
            prop_assume!(inner.x_max <= outer.x_max && inner.y_max <= outer.y_max);
            let expected = inner.area() / outer.area();
            prop_assert!((bbox_iou(&inner, &outer) - expected).abs() <= 1e-12);
        }

        #[test]
        fn polygon_iou_symmetric_and_bounded(a in arb_blob(), b in arb_blob()) {
            let ab = polygon_iou(&a, &b, 4).unwrap();
            let ba = polygon_iou(&b, &a, 4).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((polygon_iou(&a, &a, 4).unwrap() - 1.0).abs() < 1e-9);
            let rab = polygon_iou_rasterized(&a, &b, 4).unwrap();
            let rba = polygon_iou_rasterized(&b, &a, 4).unwrap();
            prop_assert!((rab - rba).abs() < 1e-9);
        }

        #[test]
        fn bbox_contains_every_vertex(p in arb_blob()) {
            let b = p.bbox().unwrap();
            for v in p.points() {
                prop_assert!(b.contains(*v));
            }
        }

        #[test]
        fn orientation_check_follows_shoelace_sign(p in arb_blob()) {
            let codes = validate_polygon(p.points(), 1e6, 1e6);
            let ccw = codes.contains(&PolygonAnomaly::CounterClockwise);
            prop_assert_eq!(ccw, p.signed_area() < -ZERO_AREA_EPS);
            let mut rev = *p.points();
            rev.reverse();
            let rev_codes = validate_polygon(&rev, 1e6, 1e6);
            prop_assert_eq!(rev_codes.contains(&PolygonAnomaly::CounterClockwise), !ccw);
        }

        #[test]
        fn convex_fast_path_agrees_with_raster(a in arb_blob(), dx in -10.0..10.0f64, dy in -10.0..10.0f64) {
            let b = a.translate(dx, dy);
            if a.is_convex() {
                let exact = polygon_iou(&a, &b, 4).unwrap();
                let raster = polygon_iou_rasterized(&a, &b, 16).unwrap();
                prop_assert!((exact - raster).abs() < 5e-3, "exact {} raster {}", exact, raster);
            }
        }
    }

    #[test]
    fn increasing_resolution_tracks_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let pts: Vec<Point> = (0..8)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::FRAC_PI_4;
                    let r = rng.random_range(4.0..15.0);
                    Point::new(30.0 + r * t.cos(), 30.0 + r * t.sin())
                })
                .collect();
            let a = Polygon8::from_slice(&pts).unwrap();
            let b = a.translate(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let mc = monte_carlo_iou(&a, &b, 100_000, trial);
            // ~3 sigma for 1e5 samples at union fraction >= 0.3
            let band = 0.0085;
            let mut prev = (polygon_iou_rasterized(&a, &b, 1).unwrap() - mc).abs();
            for res in [2, 4, 8, 16] {
                let err = (polygon_iou_rasterized(&a, &b, res).unwrap() - mc).abs();
                assert!(
                    err <= prev + band,
                    "trial {trial} res {res}: {err} vs {prev}"
                );
                prev = err;
            }
        }
    }
}
