//! Planar geometric primitives, axis-aligned windows, and the seeded
//! randomness contract shared by every sampling stage.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coordinates must be finite, got ({0}, {1})")]
    NonFiniteCoordinate(f64, f64),
    #[error("degenerate segment: endpoints coincide at ({0}, {1})")]
    DegenerateSegment(f64, f64),
    #[error("invalid window: require min < max componentwise")]
    InvalidWindow,
    #[error("cube side must be positive, got {0}")]
    NonPositiveSide(f64),
}

/// A point of the plane. Coordinates are always finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        assert!(
            x.is_finite() && y.is_finite(),
            "coordinates must be finite, got ({x}, {y})"
        );
        Point { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Point { x, y })
        } else {
            Err(GeometryError::NonFiniteCoordinate(x, y))
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_squared(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// A non-degenerate closed line segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    a: Point,
    b: Point,
}

impl Segment {
    /// Rejects zero-length segments: every street has positive length.
    pub fn new(a: Point, b: Point) -> Result<Self, GeometryError> {
        if a == b {
            return Err(GeometryError::DegenerateSegment(a.x, a.y));
        }
        Ok(Segment { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    /// Point at arc-length distance `arc` from endpoint `a`, clamped to the segment.
    pub fn point_at_arc(&self, arc: f64) -> Point {
        let len = self.length();
        let t = (arc / len).clamp(0.0, 1.0);
        Point {
            x: self.a.x + t * (self.b.x - self.a.x),
            y: self.a.y + t * (self.b.y - self.a.y),
        }
    }

    /// Squared distance from `p` to the closest point of the segment.
    pub fn distance_squared_to(&self, p: &Point) -> f64 {
        let vx = self.b.x - self.a.x;
        let vy = self.b.y - self.a.y;
        let wx = p.x - self.a.x;
        let wy = p.y - self.a.y;
        let t = ((wx * vx + wy * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
        let cx = self.a.x + t * vx;
        let cy = self.a.y + t * vy;
        p.distance_squared(&Point { x: cx, y: cy })
    }
}

/// An axis-aligned rectangle with positive area, used as simulation window
/// and as the cubes of the coarse-graining constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    min: Point,
    max: Point,
}

impl Window {
    pub fn new(min: Point, max: Point) -> Result<Self, GeometryError> {
        if min.x < max.x && min.y < max.y {
            Ok(Window { min, max })
        } else {
            Err(GeometryError::InvalidWindow)
        }
    }

    pub fn min(&self) -> Point {
        self.min
    }

    pub fn max(&self) -> Point {
        self.max
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point {
            x: 0.5 * (self.min.x + self.max.x),
            y: 0.5 * (self.min.y + self.max.y),
        }
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Open containment: boundary points are outside.
    pub fn contains_strict(&self, p: &Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    /// Whether `other` lies entirely inside this window (closed sense).
    pub fn contains_window(&self, other: &Window) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Window shrunk by `margin` on all four sides.
    pub fn shrink(&self, margin: f64) -> Result<Window, GeometryError> {
        Window::new(
            Point::new(self.min.x + margin, self.min.y + margin),
            Point::new(self.max.x - margin, self.max.y - margin),
        )
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point { x: self.max.x, y: self.min.y },
            self.max,
            Point { x: self.min.x, y: self.max.y },
        ]
    }
}

/// The axis-aligned square of side `side` centered at `center` (the closed
/// infinity-norm ball of radius `side / 2`).
pub fn cube(center: Point, side: f64) -> Result<Window, GeometryError> {
    if side.is_nan() || side <= 0.0 {
        return Err(GeometryError::NonPositiveSide(side));
    }
    let h = side / 2.0;
    Window::new(
        Point::new(center.x - h, center.y - h),
        Point::new(center.x + h, center.y + h),
    )
}

/// Result of clipping with endpoint provenance: `clipped_a`/`clipped_b`
/// record whether the corresponding endpoint was cut at the window boundary.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClippedSegment {
    pub segment: Segment,
    pub clipped_a: bool,
    pub clipped_b: bool,
    /// Clip parameters along the input segment (0 at `a`, 1 at `b`).
    pub t0: f64,
    pub t1: f64,
}

/// Liang-Barsky clip of `s` to `w`, keeping the entry/exit parameters.
/// Intersections that degenerate to a single point return `None`.
pub(crate) fn clip_segment_detailed(s: &Segment, w: &Window) -> Option<ClippedSegment> {
    let (ax, ay) = (s.a().x, s.a().y);
    let dx = s.b().x - ax;
    let dy = s.b().y - ay;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;

    // One slab per window side: p*t <= q keeps the inside half-plane.
    let slabs = [
        (-dx, ax - w.min.x),
        (dx, w.max.x - ax),
        (-dy, ay - w.min.y),
        (dy, w.max.y - ay),
    ];
    for (p, q) in slabs {
        if p == 0.0 {
            if q < 0.0 {
                return None; // parallel and outside
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return None;
                }
                if t > t0 {
                    t0 = t;
                }
            } else {
                if t < t0 {
                    return None;
                }
                if t < t1 {
                    t1 = t;
                }
            }
        }
    }
    if t0 >= t1 {
        return None; // empty or single-point intersection
    }
    // Clamping tucks rounding overshoot back into the window, which makes
    // clipping exactly idempotent.
    let at = |t: f64| {
        Point::new(
            (ax + t * dx).clamp(w.min.x, w.max.x),
            (ay + t * dy).clamp(w.min.y, w.max.y),
        )
    };
    let pa = if t0 == 0.0 { s.a() } else { at(t0) };
    let pb = if t1 == 1.0 { s.b() } else { at(t1) };
    let segment = Segment::new(pa, pb).ok()?;
    Some(ClippedSegment {
        segment,
        clipped_a: t0 > 0.0,
        clipped_b: t1 < 1.0,
        t0,
        t1,
    })
}

/// The closed sub-segment of `s` inside `w`, or `None` when the intersection
/// is empty or a single point.
pub fn clip_segment(s: &Segment, w: &Window) -> Option<Segment> {
    clip_segment_detailed(s, w).map(|c| c.segment)
}

/// Identifier for a reproducible random stream.
///
/// Streams with equal `(master_seed, stream_id)` replay bit-identically;
/// distinct `stream_id`s select distinct ChaCha streams of the same keyed
/// generator and are statistically independent, so embarrassingly parallel
/// trials can each own stream `i` without coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(self) -> StreamRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.master_seed);
        inner.set_stream(self.stream_id);
        StreamRng {
            stream: self,
            inner,
        }
    }
}

/// A running generator that remembers which stream it came from, so sampled
/// objects can record their provenance.
#[derive(Debug, Clone)]
pub struct StreamRng {
    stream: RngStream,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn stream(&self) -> RngStream {
        self.stream
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// SplitMix64 step, used to derive fresh master seeds for nested experiments
/// without consuming stream ids.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
