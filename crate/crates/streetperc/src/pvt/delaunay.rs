//! Incremental Delaunay triangulation over an enclosing sentinel square.
//!
//! Four sentinel vertices far outside the simulation window form the initial
//! triangulation; every real seed is then inserted by Bowyer-Watson cavity
//! retriangulation. Because seeds stay strictly inside the square, there is
//! no convex-hull bookkeeping: point location always terminates in a solid
//! triangle and every Voronoi edge between real seeds is a finite segment
//! between two circumcenters. Sentinels are placed far enough away that no
//! Voronoi feature involving them can intersect the window (any window point
//! is closer to some real seed than to every sentinel), so the diagram
//! clipped to the window is exactly the Poisson-Voronoi diagram of the seeds.

use std::collections::HashMap;

use crate::geometry::Point;

use super::predicates::{incircle, orient2d};

pub(crate) const NONE: u32 = u32::MAX;

/// Number of sentinel vertices; real seed `i` is vertex `i + SENTINELS`.
pub(crate) const SENTINELS: u32 = 4;

pub(crate) struct Triangulation {
    /// Sentinels first, then the real seeds in input order.
    pub points: Vec<Point>,
    /// Counterclockwise vertex triples; dead slots retain stale data.
    pub triangles: Vec<[u32; 3]>,
    /// `neighbors[t][j]` faces edge `(tri[t][j+1], tri[t][j+2])`.
    pub neighbors: Vec<[u32; 3]>,
    pub alive: Vec<bool>,
    /// Indices of input points that duplicated an earlier vertex.
    pub skipped_duplicates: Vec<usize>,
}

impl Triangulation {
    pub fn is_sentinel(v: u32) -> bool {
        v < SENTINELS
    }

    /// Triangulate `seeds`, all of which must satisfy |x|, |y| < `half_extent`.
    pub fn build(seeds: &[Point], half_extent: f64) -> Triangulation {
        let m = half_extent;
        let mut points = vec![
            Point::new(-m, -m),
            Point::new(m, -m),
            Point::new(m, m),
            Point::new(-m, m),
        ];
        points.extend_from_slice(seeds);

        let mut t = Triangulation {
            points,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            neighbors: vec![[NONE, 1, NONE], [NONE, NONE, 0]],
            alive: vec![true, true],
            skipped_duplicates: Vec::new(),
        };

        // Inserting along a space-filling order keeps the locate walks short.
        let mut order: Vec<u32> = (0..seeds.len() as u32).collect();
        if seeds.len() > 64 {
            let lo = seeds.iter().fold((f64::MAX, f64::MAX), |acc, p| (acc.0.min(p.x), acc.1.min(p.y)));
            let hi = seeds.iter().fold((f64::MIN, f64::MIN), |acc, p| (acc.0.max(p.x), acc.1.max(p.y)));
            let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(f64::MIN_POSITIVE);
            let keys: Vec<u64> = seeds.iter().map(|p| hilbert_key(p, lo, span)).collect();
            order.sort_by_key(|&i| keys[i as usize]);
        }

        let mut last = 0u32;
        let mut cavity = Vec::new();
        let mut boundary = Vec::new();
        let mut edge_map: HashMap<(u32, u32), (u32, usize)> = HashMap::new();
        for &i in &order {
            let v = i + SENTINELS;
            match t.insert(v, last, &mut cavity, &mut boundary, &mut edge_map) {
                Some(tri) => last = tri,
                None => t.skipped_duplicates.push(i as usize),
            }
        }
        t
    }

    fn tri_vertices(&self, t: u32) -> [Point; 3] {
        let [a, b, c] = self.triangles[t as usize];
        [
            self.points[a as usize],
            self.points[b as usize],
            self.points[c as usize],
        ]
    }

    /// Walk from `start` to a triangle containing `p` (closed containment).
    fn locate(&self, p: Point, start: u32) -> u32 {
        let mut cur = if self.alive[start as usize] { start } else { self.first_alive() };
        let cap = 4 * self.triangles.len() + 64;
        let mut steps = 0;
        'walk: loop {
            steps += 1;
            if steps > cap {
                break;
            }
            let tri = self.triangles[cur as usize];
            for j in 0..3 {
                let a = self.points[tri[(j + 1) % 3] as usize];
                let b = self.points[tri[(j + 2) % 3] as usize];
                if orient2d(a, b, p) < 0 {
                    let nb = self.neighbors[cur as usize][j];
                    debug_assert_ne!(nb, NONE, "walk left the sentinel square");
                    cur = nb;
                    continue 'walk;
                }
            }
            return cur;
        }
        // Fallback: exhaustive scan. Unreachable in practice, kept as a guard
        // against walk cycles in adversarial degenerate inputs.
        for (idx, &alive) in self.alive.iter().enumerate() {
            if !alive {
                continue;
            }
            let tri = self.triangles[idx];
            let contained = (0..3).all(|j| {
                let a = self.points[tri[(j + 1) % 3] as usize];
                let b = self.points[tri[(j + 2) % 3] as usize];
                orient2d(a, b, p) >= 0
            });
            if contained {
                return idx as u32;
            }
        }
        unreachable!("point outside triangulation");
    }

    fn first_alive(&self) -> u32 {
        self.alive.iter().position(|&a| a).expect("no alive triangle") as u32
    }

    fn in_conflict(&self, t: u32, p: Point) -> bool {
        let [a, b, c] = self.tri_vertices(t);
        incircle(a, b, c, p) > 0
    }

    /// Insert vertex `v`; returns one of the new triangles, or `None` when
    /// the point exactly duplicates an existing vertex.
    fn insert(
        &mut self,
        v: u32,
        hint: u32,
        cavity: &mut Vec<u32>,
        boundary: &mut Vec<(u32, u32, u32)>,
        edge_map: &mut HashMap<(u32, u32), (u32, usize)>,
    ) -> Option<u32> {
        let p = self.points[v as usize];
        let seed_tri = self.locate(p, hint);
        if self.triangles[seed_tri as usize]
            .iter()
            .any(|&w| self.points[w as usize] == p)
        {
            return None;
        }

        // Conflict region: triangles whose circumdisk strictly contains p.
        // It is edge-connected and contains the located triangle.
        cavity.clear();
        boundary.clear();
        debug_assert!(self.in_conflict(seed_tri, p));
        cavity.push(seed_tri);
        self.alive[seed_tri as usize] = false; // reuse alive flag as "visited & dead"
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for j in 0..3 {
                let nb = self.neighbors[t as usize][j];
                let a = self.triangles[t as usize][(j + 1) % 3];
                let b = self.triangles[t as usize][(j + 2) % 3];
                if nb == NONE {
                    boundary.push((a, b, NONE));
                } else if self.alive[nb as usize] {
                    if self.in_conflict(nb, p) {
                        cavity.push(nb);
                        self.alive[nb as usize] = false;
                    } else {
                        boundary.push((a, b, nb));
                    }
                } else if !cavity.contains(&nb) {
                    // Dead from an earlier insertion is impossible: dead slots
                    // are never referenced by alive neighbors.
                    unreachable!("stale neighbor reference");
                }
            }
        }

        // Star the cavity boundary from p. Each boundary edge (a, b) keeps
        // its outer neighbor; the two p-incident edges pair up via the map.
        edge_map.clear();
        let mut first_new = NONE;
        for &(a, b, outer) in boundary.iter() {
            let nt = self.triangles.len() as u32;
            debug_assert!(orient2d(self.points[a as usize], self.points[b as usize], p) > 0);
            self.triangles.push([a, b, v]);
            self.neighbors.push([NONE, NONE, outer]);
            self.alive.push(true);
            if first_new == NONE {
                first_new = nt;
            }
            if outer != NONE {
                let slot = self.neighbor_slot(outer, a, b);
                self.neighbors[outer as usize][slot] = nt;
            }
            // Edge opposite a is (b, v); opposite b is (v, a).
            edge_map.insert((b, v), (nt, 0));
            edge_map.insert((v, a), (nt, 1));
        }
        for (&(x, y), &(nt, slot)) in edge_map.iter() {
            let (other, oslot) = edge_map[&(y, x)];
            self.neighbors[nt as usize][slot] = other;
            self.neighbors[other as usize][oslot] = nt;
        }
        Some(first_new)
    }

    /// Slot j of `t` such that the edge opposite vertex j is (b, a) or (a, b).
    fn neighbor_slot(&self, t: u32, a: u32, b: u32) -> usize {
        let tri = self.triangles[t as usize];
        for j in 0..3 {
            let u = tri[(j + 1) % 3];
            let w = tri[(j + 2) % 3];
            if (u == b && w == a) || (u == a && w == b) {
                return j;
            }
        }
        unreachable!("edge not found in neighbor triangle");
    }

    /// Circumcenter of triangle `t` (translated formulation for stability).
    pub fn circumcenter(&self, t: u32) -> Point {
        let [a, b, c] = self.tri_vertices(t);
        let bx = b.x - a.x;
        let by = b.y - a.y;
        let cx = c.x - a.x;
        let cy = c.y - a.y;
        let d = 2.0 * (bx * cy - by * cx);
        let bl = bx * bx + by * by;
        let cl = cx * cx + cy * cy;
        let ux = (cy * bl - by * cl) / d;
        let uy = (bx * cl - cx * bl) / d;
        Point::new(a.x + ux, a.y + uy)
    }
}

/// Hilbert-curve key of `p` on a 2^16 grid over the seed bounding box.
fn hilbert_key(p: &Point, origin: (f64, f64), span: f64) -> u64 {
    let scale = 65535.0 / span;
    let x = (((p.x - origin.0) * scale) as u32).min(65535);
    let y = (((p.y - origin.1) * scale) as u32).min(65535);
    hilbert_index(x, y)
}

fn hilbert_index(mut x: u32, mut y: u32) -> u64 {
    let n: u32 = 1 << 16;
    let mut d: u64 = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += (s as u64) * (s as u64) * ((3 * rx) ^ ry) as u64;
        // Reflect/rotate the quadrant; only bits below s stay relevant.
        if ry == 0 {
            if rx == 1 {
                x = (n - 1).wrapping_sub(x);
                y = (n - 1).wrapping_sub(y);
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn build(seeds: &[Point]) -> Triangulation {
        Triangulation::build(seeds, 1.0e6)
    }

    fn alive_triangles(t: &Triangulation) -> Vec<[u32; 3]> {
        t.triangles
            .iter()
            .zip(&t.alive)
            .filter(|(_, &a)| a)
            .map(|(tri, _)| *tri)
            .collect()
    }

    #[test]
    fn single_point_fans_the_square() {
        let t = build(&[Point::new(0.5, 0.25)]);
        let tris = alive_triangles(&t);
        assert_eq!(tris.len(), 4);
        for tri in tris {
            assert!(tri.contains(&SENTINELS));
        }
    }

    #[test]
    fn delaunay_property_holds_globally() {
        let mut rng = crate::geometry::RngStream::new(7, 1).rng();
        for case in 0..20 {
            let n = 3 + case * 7;
            let seeds: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect();
            let t = Triangulation::build(&seeds, 1.0e6);
            let tris = alive_triangles(&t);
            for tri in &tris {
                let a = t.points[tri[0] as usize];
                let b = t.points[tri[1] as usize];
                let c = t.points[tri[2] as usize];
                assert_eq!(orient2d(a, b, c), 1, "triangle must stay CCW");
                for (vi, p) in t.points.iter().enumerate() {
                    if tri.contains(&(vi as u32)) {
                        continue;
                    }
                    assert!(
                        incircle(a, b, c, *p) <= 0,
                        "vertex {vi} strictly inside a circumcircle"
                    );
                }
            }
        }
    }

    #[test]
    fn neighbor_links_are_mutual() {
        let mut rng = crate::geometry::RngStream::new(11, 0).rng();
        let seeds: Vec<Point> = (0..200)
            .map(|_| Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect();
        let t = build(&seeds);
        for (idx, &alive) in t.alive.iter().enumerate() {
            if !alive {
                continue;
            }
            for j in 0..3 {
                let nb = t.neighbors[idx][j];
                if nb == NONE {
                    continue;
                }
                assert!(t.alive[nb as usize], "alive triangle points at dead one");
                let back = t.neighbors[nb as usize];
                assert!(
                    back.contains(&(idx as u32)),
                    "neighbor link not symmetric"
                );
            }
        }
    }

    #[test]
    fn collinear_seeds_triangulate() {
        let seeds: Vec<Point> = (0..6).map(|i| Point::new(i as f64, 2.0 * i as f64)).collect();
        let t = build(&seeds);
        // No solid all-real triangle can exist.
        for tri in alive_triangles(&t) {
            assert!(
                tri.iter().any(|&v| Triangulation::is_sentinel(v)),
                "collinear reals formed a triangle"
            );
        }
        assert!(t.skipped_duplicates.is_empty());
    }

    #[test]
    fn duplicate_points_are_skipped() {
        let seeds = vec![
            Point::new(1.0, 1.0),
            Point::new(2.0, 3.0),
            Point::new(1.0, 1.0),
        ];
        let t = build(&seeds);
        assert_eq!(t.skipped_duplicates, vec![2]);
    }

    #[test]
    fn circumcenter_of_right_triangle() {
        let t = build(&[Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]);
        let solid = t
            .alive
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as u32)
            .find(|&i| t.triangles[i as usize].iter().all(|&v| !Triangulation::is_sentinel(v)))
            .expect("one solid real triangle");
        let cc = t.circumcenter(solid);
        assert!((cc.x - 0.5).abs() < 1e-12);
        assert!((cc.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_with_cocircular_quadruples_is_valid() {
        // Exact integer grid: every unit cell is a cocircular quadruple, so
        // the exact predicate tie-breaking is exercised heavily.
        let mut seeds = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                seeds.push(Point::new(i as f64, j as f64));
            }
        }
        let t = build(&seeds);
        for tri in alive_triangles(&t) {
            let a = t.points[tri[0] as usize];
            let b = t.points[tri[1] as usize];
            let c = t.points[tri[2] as usize];
            assert_eq!(orient2d(a, b, c), 1);
            for (vi, p) in t.points.iter().enumerate() {
                if tri.contains(&(vi as u32)) {
                    continue;
                }
                assert!(incircle(a, b, c, *p) <= 0);
            }
        }
    }
}
