//! Sign-exact orientation and in-circle predicates.
//!
//! Both predicates evaluate a determinant in ordinary f64 arithmetic and
//! compare it against a forward error bound; only when the sign cannot be
//! certified do they fall back to exact rational arithmetic on the original
//! coordinates. Poisson inputs essentially never hit the fallback, but
//! hand-built fixtures (grids, cocircular quadruples) exercise it.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::Zero;

use crate::geometry::Point;

const EPS: f64 = f64::EPSILON / 2.0; // 2^-53, unit roundoff
const CCW_ERRBOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
const ICC_ERRBOUND: f64 = (10.0 + 96.0 * EPS) * EPS;

/// Sign of the signed area of triangle (a, b, c):
/// `1` when counterclockwise, `-1` when clockwise, `0` when collinear.
pub fn orient2d(a: Point, b: Point, c: Point) -> i32 {
    let detleft = (a.x - c.x) * (b.y - c.y);
    let detright = (a.y - c.y) * (b.x - c.x);
    let det = detleft - detright;

    let detsum = if detleft > 0.0 {
        if detright <= 0.0 {
            return sign_of(det);
        }
        detleft + detright
    } else if detleft < 0.0 {
        if detright >= 0.0 {
            return sign_of(det);
        }
        -detleft - detright
    } else {
        return sign_of(det);
    };

    if det.abs() >= CCW_ERRBOUND * detsum {
        sign_of(det)
    } else {
        orient2d_exact(a, b, c)
    }
}

/// Sign of the in-circle determinant for the counterclockwise triangle
/// (a, b, c): `1` when d lies strictly inside the circumcircle, `-1` when
/// strictly outside, `0` when cocircular.
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> i32 {
    let adx = a.x - d.x;
    let ady = a.y - d.y;
    let bdx = b.x - d.x;
    let bdy = b.y - d.y;
    let cdx = c.x - d.x;
    let cdy = c.y - d.y;

    let bdxcdy = bdx * cdy;
    let cdxbdy = cdx * bdy;
    let alift = adx * adx + ady * ady;

    let cdxady = cdx * ady;
    let adxcdy = adx * cdy;
    let blift = bdx * bdx + bdy * bdy;

    let adxbdy = adx * bdy;
    let bdxady = bdx * ady;
    let clift = cdx * cdx + cdy * cdy;

    let det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);

    let permanent = (bdxcdy.abs() + cdxbdy.abs()) * alift
        + (cdxady.abs() + adxcdy.abs()) * blift
        + (adxbdy.abs() + bdxady.abs()) * clift;

    if det.abs() > ICC_ERRBOUND * permanent {
        sign_of(det)
    } else {
        incircle_exact(a, b, c, d)
    }
}

fn sign_of(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

type Rat = Ratio<BigInt>;

fn rat(x: f64) -> Rat {
    // Finite f64 values convert exactly.
    Ratio::from_float(x).expect("finite coordinate")
}

fn orient2d_exact(a: Point, b: Point, c: Point) -> i32 {
    let (ax, ay) = (rat(a.x), rat(a.y));
    let (bx, by) = (rat(b.x), rat(b.y));
    let (cx, cy) = (rat(c.x), rat(c.y));
    let det = (ax - &cx) * (by - &cy) - (ay - &cy) * (bx - &cx);
    rat_sign(&det)
}

fn incircle_exact(a: Point, b: Point, c: Point, d: Point) -> i32 {
    let adx = rat(a.x) - rat(d.x);
    let ady = rat(a.y) - rat(d.y);
    let bdx = rat(b.x) - rat(d.x);
    let bdy = rat(b.y) - rat(d.y);
    let cdx = rat(c.x) - rat(d.x);
    let cdy = rat(c.y) - rat(d.y);

    let alift = &adx * &adx + &ady * &ady;
    let blift = &bdx * &bdx + &bdy * &bdy;
    let clift = &cdx * &cdx + &cdy * &cdy;

    let det = alift * (&bdx * &cdy - &cdx * &bdy) + blift * (&cdx * &ady - &adx * &cdy)
        + clift * (&adx * &bdy - &bdx * &ady);
    rat_sign(&det)
}

fn rat_sign(x: &Rat) -> i32 {
    if x.is_zero() {
        0
    } else if x > &Rat::zero() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn orientation_basic() {
        assert_eq!(orient2d(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)), 1);
        assert_eq!(orient2d(p(0.0, 0.0), p(0.0, 1.0), p(1.0, 0.0)), -1);
        assert_eq!(orient2d(p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)), 0);
    }

    #[test]
    fn orientation_near_degenerate_is_sign_exact() {
        // Points spaced along a line, with the last coordinate nudged by a
        // single ulp: the f64 filter cannot decide, the fallback can.
        let base = 1.0e8;
        let y = 4.0 * base;
        assert_eq!(
            orient2d(p(base, base), p(2.0 * base, 2.0 * base), p(y, y.next_up())),
            1
        );
        assert_eq!(
            orient2d(p(base, base), p(2.0 * base, 2.0 * base), p(y, y.next_down())),
            -1
        );
        assert_eq!(orient2d(p(base, base), p(2.0 * base, 2.0 * base), p(y, y)), 0);
    }

    #[test]
    fn incircle_basic() {
        let a = p(0.0, 0.0);
        let b = p(2.0, 0.0);
        let c = p(0.0, 2.0);
        assert_eq!(incircle(a, b, c, p(0.5, 0.5)), 1);
        assert_eq!(incircle(a, b, c, p(10.0, 10.0)), -1);
        // Fourth corner of the square is exactly cocircular.
        assert_eq!(incircle(a, b, c, p(2.0, 2.0)), 0);
    }

    #[test]
    fn incircle_perturbed_cocircular() {
        let a = p(0.0, 0.0);
        let b = p(1.0, 0.0);
        let c = p(1.0, 1.0);
        let inside = p(0.0, 1.0 - 1.0e-13);
        let outside = p(0.0, 1.0 + 1.0e-13);
        assert_eq!(incircle(a, b, c, inside), 1);
        assert_eq!(incircle(a, b, c, outside), -1);
    }

    #[test]
    fn filtered_matches_exact_on_random_inputs() {
        let mut rng = crate::geometry::RngStream::new(99, 0).rng();
        for _ in 0..20_000 {
            let pts: Vec<Point> = (0..4)
                .map(|_| p(rng.random_range(-1.0e3..1.0e3), rng.random_range(-1.0e3..1.0e3)))
                .collect();
            assert_eq!(
                orient2d(pts[0], pts[1], pts[2]),
                orient2d_exact(pts[0], pts[1], pts[2])
            );
            assert_eq!(
                incircle(pts[0], pts[1], pts[2], pts[3]),
                incircle_exact(pts[0], pts[1], pts[2], pts[3])
            );
        }
    }

    #[test]
    fn incircle_sign_flips_with_orientation() {
        let a = p(0.0, 0.0);
        let b = p(2.0, 0.0);
        let c = p(0.0, 2.0);
        let d = p(0.5, 0.5);
        assert_eq!(incircle(a, b, c, d), -incircle(a, c, b, d));
    }
}
