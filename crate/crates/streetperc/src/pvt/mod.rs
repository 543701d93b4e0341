//! Planar Poisson-Voronoi street systems.
//!
//! Seeds are a homogeneous Poisson process in a window; the tessellation
//! exposes its 1-facets (streets) and 0-facets (crossroads) clipped to the
//! window, with incidence structure, plus the standard edge-length
//! estimators (street intensity per unit area and mean typical street
//! length) under minus-sampling.

mod delaunay;
pub(crate) mod predicates;
mod text_format;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    clip_segment, clip_segment_detailed, Point, RngStream, Segment, StreamRng, Window,
};
use delaunay::{Triangulation, NONE, SENTINELS};

pub use predicates::{incircle, orient2d};

#[derive(Debug, Error)]
pub enum PvtError {
    #[error("seed intensity must be nonnegative, got {0}")]
    NegativeIntensity(f64),
    #[error("cannot build a tessellation from an empty seed set: no seeds")]
    NoSeeds,
    #[error("margin must be nonnegative, got {0}")]
    NegativeMargin(f64),
    #[error("core window is empty: margin {margin} exceeds half the window extent")]
    EmptyCore { margin: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A realization of the Poisson seed process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSet {
    window: Window,
    intensity: f64,
    points: Vec<Point>,
    stream: RngStream,
}

impl SeedSet {
    /// Assemble a seed set from explicit points (fixtures and tests).
    /// Points outside the window are rejected.
    pub fn from_points(window: Window, intensity: f64, points: Vec<Point>) -> Option<SeedSet> {
        if points.iter().any(|p| !window.contains(p)) {
            return None;
        }
        Some(SeedSet {
            window,
            intensity,
            points,
            stream: RngStream::new(0, 0),
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }
}

/// Sample seeds in `w`: the count is Poisson(`lambda_s` x area) and the
/// positions are independently uniform.
pub fn sample_seeds(w: Window, lambda_s: f64, rng: &mut StreamRng) -> Result<SeedSet, PvtError> {
    if lambda_s.is_nan() || lambda_s < 0.0 {
        return Err(PvtError::NegativeIntensity(lambda_s));
    }
    let mean = lambda_s * w.area();
    let count = if mean > 0.0 {
        let poi = Poisson::new(mean).expect("positive finite mean");
        poi.sample(rng) as usize
    } else {
        0
    };
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(w.min().x..w.max().x);
        let y = rng.random_range(w.min().y..w.max().y);
        points.push(Point { x, y });
    }
    Ok(SeedSet {
        window: w,
        intensity: lambda_s,
        points,
        stream: rng.stream(),
    })
}

/// One endpoint of a street: either a crossroad of the tessellation or the
/// point where the clip window cut the street.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeEnd {
    Vertex(usize),
    Boundary(Point),
}

/// A street: a maximal straight piece of cell boundary inside the window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Edge {
    pub ends: (EdgeEnd, EdgeEnd),
    pub geometry: Segment,
    pub length: f64,
    /// True when the in-window geometry is a proper subset of the full
    /// street of the infinite tessellation.
    pub is_clipped: bool,
    /// Seed indices whose cells this street separates.
    pub generators: (usize, usize),
}

/// A crossroad with its incident streets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vertex {
    pub position: Point,
    pub incident_edges: Vec<usize>,
    /// True when the whole incident star lies inside the window.
    pub is_interior: bool,
}

/// The Poisson-Voronoi tessellation clipped to its window.
#[derive(Debug, Clone)]
pub struct Tessellation {
    seeds: SeedSet,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    window: Window,
    fingerprint: u64,
}

impl Tessellation {
    /// Spatial dimension of the construction. The data model would admit
    /// higher dimensions, but only the planar builder exists.
    pub const DIMENSION: usize = 2;

    pub fn seeds(&self) -> &SeedSet {
        &self.seeds
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Identity token tying node sets to the tessellation they were sampled on.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// End of `edge` at vertex `v`: 0.0 if the street starts there, its
    /// length if it ends there.
    pub fn arc_at_vertex(&self, edge_id: usize, v: usize) -> Option<f64> {
        let e = &self.edges[edge_id];
        match e.ends {
            (EdgeEnd::Vertex(a), _) if a == v => Some(0.0),
            (_, EdgeEnd::Vertex(b)) if b == v => Some(e.length),
            _ => None,
        }
    }
}

/// Scale factor for the enclosing sentinel square (power of two so that
/// rescaling a configuration by a power of two rescales sentinels exactly).
const SENTINEL_SCALE: f64 = 16384.0;

/// Build the Voronoi tessellation of the seeds, clipped to the seed window.
///
/// The construction goes through the Delaunay triangulation with sign-exact
/// predicates. Degenerate inputs (collinear seeds, cocircular quadruples,
/// single seed) follow the same code path: collinear seeds yield parallel
/// bisector strips and exactly cocircular quadruples merge their dual
/// vertices.
pub fn build_tessellation(seeds: SeedSet) -> Result<Tessellation, PvtError> {
    if seeds.points.is_empty() {
        return Err(PvtError::NoSeeds);
    }
    let window = seeds.window;
    let bound = [
        window.min().x.abs(),
        window.min().y.abs(),
        window.max().x.abs(),
        window.max().y.abs(),
        window.width(),
        window.height(),
        1.0,
    ]
    .into_iter()
    .fold(f64::MIN, f64::max);
    let half_extent = SENTINEL_SCALE * bound;

    let tri = Triangulation::build(&seeds.points, half_extent);

    // Circumcenters double as Voronoi vertices; compute for alive triangles.
    let mut centers: Vec<Point> = vec![Point { x: 0.0, y: 0.0 }; tri.triangles.len()];
    for (t, &alive) in tri.alive.iter().enumerate() {
        if alive {
            centers[t] = tri.circumcenter(t as u32);
        }
    }

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut vertex_ids: HashMap<(u64, u64), usize> = HashMap::new();

    let mut vertex_id_for = |p: Point, vertices: &mut Vec<Vertex>| -> usize {
        *vertex_ids.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
            vertices.push(Vertex {
                position: p,
                incident_edges: Vec::new(),
                is_interior: false,
            });
            vertices.len() - 1
        })
    };

    for t in 0..tri.triangles.len() {
        if !tri.alive[t] {
            continue;
        }
        for j in 0..3 {
            let nb = tri.neighbors[t][j];
            if nb == NONE || (nb as usize) < t {
                continue; // square border, or already handled from the twin
            }
            debug_assert!(tri.alive[nb as usize]);
            let a = tri.triangles[t][(j + 1) % 3];
            let b = tri.triangles[t][(j + 2) % 3];
            if Triangulation::is_sentinel(a) || Triangulation::is_sentinel(b) {
                // Dual edges of sentinel pairs cannot reach the window.
                continue;
            }
            let c1 = centers[t];
            let c2 = centers[nb as usize];
            if c1 == c2 {
                continue; // cocircular quadruple: zero-length dual edge
            }
            let Ok(full) = Segment::new(c1, c2) else { continue };
            let Some(clip) = clip_segment_detailed(&full, &window) else {
                continue;
            };
            let end_a = if clip.clipped_a {
                EdgeEnd::Boundary(clip.segment.a())
            } else {
                EdgeEnd::Vertex(vertex_id_for(c1, &mut vertices))
            };
            let end_b = if clip.clipped_b {
                EdgeEnd::Boundary(clip.segment.b())
            } else {
                EdgeEnd::Vertex(vertex_id_for(c2, &mut vertices))
            };
            edges.push(Edge {
                ends: (end_a, end_b),
                length: clip.segment.length(),
                geometry: clip.segment,
                is_clipped: clip.clipped_a || clip.clipped_b,
                generators: (a as usize - SENTINELS as usize, b as usize - SENTINELS as usize),
            });
        }
    }

    for (id, e) in edges.iter().enumerate() {
        if let EdgeEnd::Vertex(v) = e.ends.0 {
            vertices[v].incident_edges.push(id);
        }
        if let EdgeEnd::Vertex(v) = e.ends.1 {
            vertices[v].incident_edges.push(id);
        }
    }
    for v in vertices.iter_mut() {
        v.is_interior = v.incident_edges.len() == 3
            && v.incident_edges.iter().all(|&e| !edges[e].is_clipped);
    }

    let fingerprint = fingerprint_of(&seeds, vertices.len(), edges.len());
    Ok(Tessellation {
        seeds,
        vertices,
        edges,
        window,
        fingerprint,
    })
}

fn fingerprint_of(seeds: &SeedSet, n_vertices: usize, n_edges: usize) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seeds.stream.hash(&mut h);
    seeds.points.len().hash(&mut h);
    seeds.window.min().x.to_bits().hash(&mut h);
    seeds.window.min().y.to_bits().hash(&mut h);
    seeds.window.max().x.to_bits().hash(&mut h);
    seeds.window.max().y.to_bits().hash(&mut h);
    n_vertices.hash(&mut h);
    n_edges.hash(&mut h);
    h.finish()
}

/// Edge-length estimators on the margin-eroded core window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TessellationStats {
    /// Total street length per unit area, from street pieces inside the core.
    pub gamma_hat: f64,
    /// Mean street length over streets entirely inside the core (minus-sampling).
    pub lbar_hat: f64,
    /// Number of streets entering `lbar_hat`.
    pub edge_count: usize,
    /// Number of crossroads strictly inside the core.
    pub vertex_count: usize,
    pub core_window: Window,
}

/// Estimate street intensity and mean street length with minus-sampling:
/// `gamma_hat` uses every street piece inside the eroded core, `lbar_hat`
/// only streets lying entirely inside it, which removes clipping bias.
pub fn compute_stats(t: &Tessellation, margin: f64) -> Result<TessellationStats, PvtError> {
    if margin.is_nan() || margin < 0.0 {
        return Err(PvtError::NegativeMargin(margin));
    }
    let core = t
        .window
        .shrink(margin)
        .map_err(|_| PvtError::EmptyCore { margin })?;

    let mut total_in_core = 0.0;
    let mut full_lengths = 0.0;
    let mut full_count = 0usize;
    for e in &t.edges {
        if let Some(piece) = clip_segment(&e.geometry, &core) {
            total_in_core += piece.length();
        }
        if !e.is_clipped
            && core.contains_strict(&e.geometry.a())
            && core.contains_strict(&e.geometry.b())
        {
            full_lengths += e.length;
            full_count += 1;
        }
    }
    let vertex_count = t
        .vertices
        .iter()
        .filter(|v| core.contains_strict(&v.position))
        .count();

    Ok(TessellationStats {
        gamma_hat: total_in_core / core.area(),
        lbar_hat: if full_count > 0 {
            full_lengths / full_count as f64
        } else {
            0.0
        },
        edge_count: full_count,
        vertex_count,
        core_window: core,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cube;

    fn window(half: f64) -> Window {
        cube(Point::new(0.0, 0.0), 2.0 * half).unwrap()
    }

    fn tess_from(points: &[(f64, f64)], half: f64) -> Tessellation {
        let pts = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let seeds = SeedSet::from_points(window(half), 0.0, pts).unwrap();
        build_tessellation(seeds).unwrap()
    }

    #[test]
    fn empty_seed_set_is_rejected() {
        let seeds = SeedSet::from_points(window(1.0), 0.0, vec![]).unwrap();
        assert!(matches!(build_tessellation(seeds), Err(PvtError::NoSeeds)));
    }

    #[test]
    fn single_seed_has_no_features() {
        let t = tess_from(&[(0.3, -0.2)], 5.0);
        assert_eq!(t.vertices().len(), 0);
        assert_eq!(t.edges().len(), 0);
    }

    #[test]
    fn two_seeds_share_one_bisector() {
        let t = tess_from(&[(-1.0, 0.0), (1.0, 0.0)], 5.0);
        assert_eq!(t.vertices().len(), 0);
        assert_eq!(t.edges().len(), 1);
        let e = &t.edges()[0];
        assert!(e.is_clipped);
        // Bisector is the vertical line x = 0 across the whole window.
        assert!(e.geometry.a().x.abs() < 1e-9);
        assert!(e.geometry.b().x.abs() < 1e-9);
        assert!((e.length - 10.0).abs() < 1e-9);
    }

    #[test]
    fn three_seeds_meet_at_circumcenter() {
        let t = tess_from(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 20.0);
        assert_eq!(t.vertices().len(), 1);
        let v = &t.vertices()[0];
        assert!((v.position.x - 0.5).abs() < 1e-12);
        assert!((v.position.y - 0.5).abs() < 1e-12);
        assert_eq!(v.incident_edges.len(), 3);
        assert_eq!(t.edges().len(), 3);
        // The star is clipped at the window, so the vertex is not interior.
        assert!(!v.is_interior);
    }

    #[test]
    fn collinear_seeds_make_parallel_strips() {
        let t = tess_from(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 5.0);
        assert_eq!(t.vertices().len(), 0);
        assert_eq!(t.edges().len(), 3);
        let mut xs: Vec<f64> = t
            .edges()
            .iter()
            .map(|e| {
                assert!((e.geometry.a().x - e.geometry.b().x).abs() < 1e-9, "strip not vertical");
                assert!((e.length - 10.0).abs() < 1e-9);
                e.geometry.a().x
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        for (x, want) in xs.iter().zip([0.5, 1.5, 2.5]) {
            assert!((x - want).abs() < 1e-9);
        }
    }

    #[test]
    fn cocircular_square_merges_the_dual_vertex() {
        let t = tess_from(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], 4.0);
        // True Voronoi diagram: one degree-4 vertex at the square center.
        assert_eq!(t.vertices().len(), 1);
        let v = &t.vertices()[0];
        assert_eq!(v.position, Point::new(0.5, 0.5));
        assert_eq!(v.incident_edges.len(), 4);
        assert_eq!(t.edges().len(), 4);
        assert!(!v.is_interior);
    }

    fn poisson_tess(half: f64, lambda_s: f64, seed: u64) -> Tessellation {
        let mut rng = RngStream::new(seed, 0).rng();
        let seeds = sample_seeds(window(half), lambda_s, &mut rng).unwrap();
        build_tessellation(seeds).unwrap()
    }

    #[test]
    fn sample_seeds_zero_intensity_is_empty() {
        let mut rng = RngStream::new(1, 0).rng();
        let s = sample_seeds(window(5.0), 0.0, &mut rng).unwrap();
        assert!(s.points().is_empty());
        assert!(sample_seeds(window(5.0), -1.0, &mut rng).is_err());
    }

    #[test]
    fn sample_seeds_poisson_mean() {
        // 10x10 window at intensity 1: mean count 100 over 1000 draws.
        let w = window(5.0);
        let mut rng = RngStream::new(42, 0).rng();
        let draws = 1000;
        let mut total = 0usize;
        for _ in 0..draws {
            total += sample_seeds(w, 1.0, &mut rng).unwrap().points().len();
        }
        let mean = total as f64 / draws as f64;
        let tol = 3.0 * (100.0f64 / draws as f64).sqrt() * 3.0;
        assert!((mean - 100.0).abs() < tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn sample_seeds_poisson_dispersion() {
        // Unit window at intensity 5: variance matches the mean within 15%.
        let w = cube(Point::new(0.0, 0.0), 1.0).unwrap();
        let mut rng = RngStream::new(43, 0).rng();
        let draws = 10_000;
        let counts: Vec<f64> = (0..draws)
            .map(|_| sample_seeds(w, 5.0, &mut rng).unwrap().points().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / draws as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (draws - 1) as f64;
        assert!((var - 5.0).abs() < 0.75, "variance {var}");
        assert!((mean - 5.0).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn interior_vertices_have_degree_three() {
        let t = poisson_tess(12.5, 1.0, 7);
        let interior: Vec<&Vertex> = t.vertices().iter().filter(|v| v.is_interior).collect();
        assert!(interior.len() > 100, "want a meaningful sample");
        for v in interior {
            assert_eq!(v.incident_edges.len(), 3);
        }
    }

    #[test]
    fn edges_are_bisectors_of_their_generators() {
        let t = poisson_tess(10.0, 1.0, 11);
        let pts = t.seeds().points();
        for e in t.edges() {
            let (g1, g2) = e.generators;
            for q in [e.geometry.a(), e.geometry.b(), e.geometry.point_at_arc(e.length / 2.0)] {
                let d1 = q.distance(&pts[g1]);
                let d2 = q.distance(&pts[g2]);
                assert!(
                    (d1 - d2).abs() <= 1e-9 * d1.max(1.0),
                    "generators not equidistant: {d1} vs {d2}"
                );
            }
            // No third seed strictly closer at the midpoint.
            let mid = e.geometry.point_at_arc(e.length / 2.0);
            let dgen = mid.distance(&pts[e.generators.0]);
            let dmin = pts
                .iter()
                .map(|p| mid.distance(p))
                .fold(f64::INFINITY, f64::min);
            assert!(dmin >= dgen - 1e-9 * dgen.max(1.0));
        }
    }

    #[test]
    fn interior_vertices_are_cocircular_with_three_nearest_seeds() {
        let t = poisson_tess(8.0, 1.0, 13);
        let pts = t.seeds().points();
        for v in t.vertices().iter().filter(|v| v.is_interior).take(200) {
            // Collect generator seeds of the incident edges.
            let mut gens: Vec<usize> = Vec::new();
            for &e in &v.incident_edges {
                let (a, b) = t.edges()[e].generators;
                for g in [a, b] {
                    if !gens.contains(&g) {
                        gens.push(g);
                    }
                }
            }
            assert_eq!(gens.len(), 3, "interior vertex must have 3 generators");
            let d: Vec<f64> = gens.iter().map(|&g| v.position.distance(&pts[g])).collect();
            for w in d.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-9 * w[0].max(1.0));
            }
            let dmin = pts
                .iter()
                .map(|p| v.position.distance(p))
                .fold(f64::INFINITY, f64::min);
            assert!(dmin >= d[0] - 1e-9 * d[0].max(1.0), "a fourth seed is closer");
        }
    }

    #[test]
    fn euler_ratio_approaches_three_halves() {
        let t = poisson_tess(20.0, 1.0, 17);
        let stats = compute_stats(&t, 4.0).unwrap();
        let ratio = stats.edge_count as f64 / stats.vertex_count as f64;
        assert!((ratio - 1.5).abs() < 0.1, "edge/vertex ratio {ratio}");
    }

    #[test]
    fn stats_reject_bad_margins() {
        let t = poisson_tess(5.0, 1.0, 19);
        assert!(matches!(compute_stats(&t, -1.0), Err(PvtError::NegativeMargin(_))));
        assert!(matches!(compute_stats(&t, 5.0), Err(PvtError::EmptyCore { .. })));
    }

    #[test]
    fn scaling_by_two_is_exact() {
        let mut rng = RngStream::new(23, 0).rng();
        let seeds = sample_seeds(window(8.0), 1.0, &mut rng).unwrap();
        let scaled_pts: Vec<Point> = seeds
            .points()
            .iter()
            .map(|p| Point::new(2.0 * p.x, 2.0 * p.y))
            .collect();
        let scaled = SeedSet::from_points(window(16.0), 0.25, scaled_pts).unwrap();

        let t1 = build_tessellation(seeds).unwrap();
        let t2 = build_tessellation(scaled).unwrap();
        assert_eq!(t1.edges().len(), t2.edges().len());
        assert_eq!(t1.vertices().len(), t2.vertices().len());
        for (e1, e2) in t1.edges().iter().zip(t2.edges()) {
            assert_eq!(e1.generators, e2.generators);
            assert!((2.0 * e1.length - e2.length).abs() <= 1e-12 * e2.length.max(1.0));
        }
        let s1 = compute_stats(&t1, 2.0).unwrap();
        let s2 = compute_stats(&t2, 4.0).unwrap();
        assert!((s1.gamma_hat - 2.0 * s2.gamma_hat).abs() < 1e-12 * s1.gamma_hat);
    }

    #[test]
    fn scaling_covariance_general_factor() {
        let c = 1.7;
        let mut rng = RngStream::new(29, 0).rng();
        let seeds = sample_seeds(window(8.0), 1.0, &mut rng).unwrap();
        let scaled_pts: Vec<Point> = seeds
            .points()
            .iter()
            .map(|p| Point::new(c * p.x, c * p.y))
            .collect();
        let scaled = SeedSet::from_points(window(8.0 * c), 1.0 / (c * c), scaled_pts).unwrap();

        let t1 = build_tessellation(seeds).unwrap();
        let t2 = build_tessellation(scaled).unwrap();
        assert_eq!(t1.edges().len(), t2.edges().len());
        let mut l1: Vec<f64> = t1.edges().iter().map(|e| e.length * c).collect();
        let mut l2: Vec<f64> = t2.edges().iter().map(|e| e.length).collect();
        l1.sort_by(f64::total_cmp);
        l2.sort_by(f64::total_cmp);
        for (a, b) in l1.iter().zip(&l2) {
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
        }
    }

    /// Structural sanity shared by the degenerate-input tests.
    fn check_structure(t: &Tessellation) {
        for (vid, v) in t.vertices().iter().enumerate() {
            for &e in &v.incident_edges {
                let ends = &t.edges()[e].ends;
                let touches = matches!(ends.0, EdgeEnd::Vertex(x) if x == vid)
                    || matches!(ends.1, EdgeEnd::Vertex(x) if x == vid);
                assert!(touches, "incidence list out of sync at vertex {vid}");
            }
        }
        let pts = t.seeds().points();
        for e in t.edges() {
            assert!(e.length > 0.0);
            let mid = e.geometry.point_at_arc(e.length / 2.0);
            let d1 = mid.distance(&pts[e.generators.0]);
            let d2 = mid.distance(&pts[e.generators.1]);
            assert!((d1 - d2).abs() <= 1e-9 * d1.max(1.0), "bisector violated");
        }
    }

    #[test]
    fn degenerate_inputs_build_valid_tessellations() {
        // A regular polygon is fully cocircular: every in-circle test among
        // its vertices ties exactly, and the dual vertices crowd around the
        // center. Each adjacent pair must still share one spoke street.
        let ring: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 12.0;
                (3.0 * a.cos(), 3.0 * a.sin())
            })
            .collect();
        let t = tess_from(&ring, 8.0);
        check_structure(&t);
        let spokes = t
            .edges()
            .iter()
            .filter(|e| {
                let (a, b) = e.generators;
                (a + 1) % 12 == b || (b + 1) % 12 == a
            })
            .count();
        assert_eq!(spokes, 12, "each adjacent ring pair shares a street");

        // Ring plus its center: the center cell is a regular 12-gon.
        let mut with_center = ring.clone();
        with_center.push((0.0, 0.0));
        let t = tess_from(&with_center, 8.0);
        check_structure(&t);
        let center_cell_edges = t
            .edges()
            .iter()
            .filter(|e| e.generators.0 == 12 || e.generators.1 == 12)
            .count();
        assert_eq!(center_cell_edges, 12);

        // Integer grid with a tiny jitter: massive near-ties for the
        // in-circle filter.
        let mut rng = RngStream::new(37, 0).rng();
        let jittered: Vec<(f64, f64)> = (0..7)
            .flat_map(|i| (0..7).map(move |j| (i as f64, j as f64)))
            .map(|(x, y)| {
                (
                    x + rng.random_range(-1.0e-13..1.0e-13),
                    y + rng.random_range(-1.0e-13..1.0e-13),
                )
            })
            .collect();
        let t = tess_from(&jittered, 8.0);
        check_structure(&t);

        // Near-duplicate pair far below any tolerance in play.
        let t = tess_from(&[(0.0, 0.0), (1e-12, 1e-12), (2.0, 1.0), (-1.0, 2.0)], 6.0);
        check_structure(&t);
        assert!(t.edges().iter().any(|e| {
            let g = e.generators;
            (g.0 == 0 && g.1 == 1) || (g.0 == 1 && g.1 == 0)
        }), "the near-duplicate pair must still be separated by a street");
    }

    #[test]
    fn edges_intersect_only_at_shared_vertices() {
        let t = poisson_tess(6.0, 1.0, 31);
        let edges = t.edges();
        // Brute-force pairwise proper-intersection test.
        for i in 0..edges.len() {
            for j in (i + 1)..edges.len() {
                let (p1, p2) = (edges[i].geometry.a(), edges[i].geometry.b());
                let (q1, q2) = (edges[j].geometry.a(), edges[j].geometry.b());
                let o1 = orient2d(p1, p2, q1);
                let o2 = orient2d(p1, p2, q2);
                let o3 = orient2d(q1, q2, p1);
                let o4 = orient2d(q1, q2, p2);
                let proper = o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
                assert!(!proper, "edges {i} and {j} cross in their interiors");
            }
        }
    }
}
