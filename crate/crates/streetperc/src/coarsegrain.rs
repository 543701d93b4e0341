//! Renormalization diagnostics: stabilization radii of the seed process,
//! their suprema over cubes, and the good/bad classification of rescaled
//! lattice sites that underpins the model's sub- and supercritical analysis.
//!
//! Three site-goodness variants exist. At scale `n`, a site `z` of the
//! integer lattice looks at cubes centered at `n z`:
//!
//! - subcritical: the stabilization radius over the side-`n` cube is below
//!   `n`, and every street piece inside that cube is closed (an open piece
//!   would let a component sneak through);
//! - supercritical: the radius over the side-`6n` cube is below `6n`, some
//!   full street lies in the side-`n` cube and at least one such street is
//!   open, every crossroad in the side-`6n` cube carries a relay, and all
//!   open full streets in the side-`3n` cube are pairwise connected within
//!   the graph restricted to the side-`6n` cube;
//! - hard-geometric: the supercritical conditions with "open street"
//!   replaced by "street no longer than the connectivity range".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clip_segment_detailed, cube, Point, RngStream, Window};
use crate::graph::UnionFind;
use crate::montecarlo::{ConnectionRange, ModelParams};
use crate::processes::{is_segment_open, sample_relays, sample_users, NodeSet};
use crate::pvt::{build_tessellation, sample_seeds, EdgeEnd, SeedSet, Tessellation};

#[derive(Debug, Error)]
pub enum CoarsegrainError {
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("cube {0:?} is not contained in the tessellation window")]
    CubeOutsideWindow(Window),
    #[error("site scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("coarse-graining requires a finite connectivity range")]
    NeedFiniteRange,
    #[error("node set was sampled on a different tessellation")]
    TessellationMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Distance from `x` to the nearest seed: the stabilization radius of the
/// street system at `x`.
pub fn stabilization_radius(x: Point, seeds: &SeedSet) -> Result<f64, CoarsegrainError> {
    if seeds.points().is_empty() {
        return Err(CoarsegrainError::EmptySeeds);
    }
    Ok(seeds
        .points()
        .iter()
        .map(|s| x.distance(s))
        .fold(f64::INFINITY, f64::min))
}

/// Uniform bucket grid over the seed window for O(1) nearest-seed queries.
struct SeedGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    points: Vec<Point>,
}

impl SeedGrid {
    fn build(seeds: &SeedSet) -> SeedGrid {
        let w = seeds.window();
        let n = seeds.points().len().max(1);
        // Aim for about one seed per bucket.
        let cell = (w.area() / n as f64).sqrt().max(1e-9);
        let nx = (w.width() / cell).ceil() as usize + 1;
        let ny = (w.height() / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        let points: Vec<Point> = seeds.points().to_vec();
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = Self::bucket_of(w.min(), cell, nx, ny, p);
            buckets[by * nx + bx].push(i as u32);
        }
        SeedGrid {
            origin: w.min(),
            cell,
            nx,
            ny,
            buckets,
            points,
        }
    }

    fn bucket_of(origin: Point, cell: f64, nx: usize, ny: usize, p: &Point) -> (usize, usize) {
        let bx = (((p.x - origin.x) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
        let by = (((p.y - origin.y) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
        (bx, by)
    }

    /// Exact nearest-seed distance via expanding ring search.
    fn nearest(&self, p: &Point) -> f64 {
        let (cx, cy) = Self::bucket_of(self.origin, self.cell, self.nx, self.ny, p);
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Any seed in a bucket at Chebyshev ring k is at distance
            // at least (k - 1) * cell from p.
            if best.is_finite() && (ring as f64 - 1.0) * self.cell > best {
                break;
            }
            let lo_x = cx.saturating_sub(ring);
            let hi_x = (cx + ring).min(self.nx - 1);
            let lo_y = cy.saturating_sub(ring);
            let hi_y = (cy + ring).min(self.ny - 1);
            for by in lo_y..=hi_y {
                for bx in lo_x..=hi_x {
                    let on_ring = bx == lo_x || bx == hi_x || by == lo_y || by == hi_y;
                    let is_new = bx.abs_diff(cx).max(by.abs_diff(cy)) == ring;
                    if !(on_ring && is_new) {
                        continue;
                    }
                    for &i in &self.buckets[by * self.nx + bx] {
                        best = best.min(p.distance(&self.points[i as usize]));
                    }
                }
            }
        }
        best
    }
}

/// Precomputed structures for repeated stabilization queries on one
/// tessellation.
pub struct StabilizationField<'a> {
    tess: &'a Tessellation,
    grid: SeedGrid,
}

impl<'a> StabilizationField<'a> {
    pub fn new(tess: &'a Tessellation) -> StabilizationField<'a> {
        StabilizationField {
            tess,
            grid: SeedGrid::build(tess.seeds()),
        }
    }

    /// Stabilization radius at one point.
    pub fn radius_at(&self, p: Point) -> f64 {
        self.grid.nearest(&p)
    }

    /// Supremum of the stabilization radius over the cube `q`.
    ///
    /// Within each Voronoi cell the radius is the distance to one seed, a
    /// convex function, so its maximum over the convex pieces of `q` is
    /// attained at a piece vertex: a corner of `q`, a crossroad inside `q`,
    /// or a point where a street crosses the boundary of `q`. Evaluating at
    /// exactly those candidates makes the supremum exact.
    pub fn cube_radius(&self, q: &Window) -> Result<f64, CoarsegrainError> {
        if !self.tess.window().contains_window(q) {
            return Err(CoarsegrainError::CubeOutsideWindow(*q));
        }
        let mut best = q
            .corners()
            .iter()
            .map(|c| self.grid.nearest(c))
            .fold(0.0f64, f64::max);
        for e in self.tess.edges() {
            // Cheap reject before the exact clip.
            let (a, b) = (e.geometry.a(), e.geometry.b());
            if a.x.min(b.x) > q.max().x
                || a.x.max(b.x) < q.min().x
                || a.y.min(b.y) > q.max().y
                || a.y.max(b.y) < q.min().y
            {
                continue;
            }
            if let Some(c) = clip_segment_detailed(&e.geometry, q) {
                best = best.max(self.grid.nearest(&c.segment.a()));
                best = best.max(self.grid.nearest(&c.segment.b()));
            }
        }
        Ok(best)
    }
}

/// One-shot supremum of the stabilization radius over `q`.
pub fn cube_radius(q: &Window, seeds: &SeedSet) -> Result<f64, CoarsegrainError> {
    if seeds.points().is_empty() {
        return Err(CoarsegrainError::EmptySeeds);
    }
    let tess = build_tessellation(seeds.clone())
        .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
    StabilizationField::new(&tess).cube_radius(q)
}

/// Which site-goodness definition to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodnessMode {
    Subcritical,
    Supercritical,
    HardGeometric,
}

impl GoodnessMode {
    /// Side of the largest cube a site must fit in the window.
    fn needed_side(self, n: f64) -> f64 {
        match self {
            GoodnessMode::Subcritical => n,
            _ => 6.0 * n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteFlag {
    Good,
    Bad,
    OutOfWindow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteRecord {
    pub z: [i64; 2],
    pub flag: SiteFlag,
}

/// Good/bad classification of every lattice site whose cube meets the window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteGrid {
    pub n: f64,
    pub mode: GoodnessMode,
    pub sites: Vec<SiteRecord>,
}

impl SiteGrid {
    pub fn flag_at(&self, z: [i64; 2]) -> Option<SiteFlag> {
        self.sites.iter().find(|s| s.z == z).map(|s| s.flag)
    }

    /// One JSON record per site, carrying the grid context.
    pub fn to_json_lines(&self) -> Vec<String> {
        self.sites
            .iter()
            .map(|s| {
                serde_json::json!({
                    "record": "site",
                    "z": s.z,
                    "flag": s.flag,
                    "mode": self.mode,
                    "n": self.n,
                })
                .to_string()
            })
            .collect()
    }
}

/// Shared state for classifying many sites of one realization.
struct SiteClassifier<'a> {
    t: &'a Tessellation,
    z: &'a NodeSet,
    r: f64,
    field: StabilizationField<'a>,
    arcs_by_edge: Vec<Vec<f64>>,
}

impl<'a> SiteClassifier<'a> {
    fn new(t: &'a Tessellation, z: &'a NodeSet, r: f64) -> Result<SiteClassifier<'a>, CoarsegrainError> {
        if z.tessellation_ref != t.fingerprint() {
            return Err(CoarsegrainError::TessellationMismatch);
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(CoarsegrainError::NeedFiniteRange);
        }
        let mut arcs_by_edge = vec![Vec::new(); t.edges().len()];
        for u in &z.users {
            arcs_by_edge[u.edge_id].push(u.arc);
        }
        for arcs in arcs_by_edge.iter_mut() {
            arcs.sort_unstable_by(f64::total_cmp);
        }
        Ok(SiteClassifier {
            t,
            z,
            r,
            field: StabilizationField::new(t),
            arcs_by_edge,
        })
    }

    /// Users of street `e` with arcs in `[a0, a1]`, shifted to start at 0.
    fn arcs_within(&self, e: usize, a0: f64, a1: f64, out: &mut Vec<f64>) {
        out.clear();
        let arcs = &self.arcs_by_edge[e];
        let lo = arcs.partition_point(|&x| x < a0);
        let hi = arcs.partition_point(|&x| x <= a1);
        out.extend(arcs[lo..hi].iter().map(|&x| (x - a0).max(0.0).min(a1 - a0)));
    }

    /// Openness of the whole street `e` under the node set's users.
    fn street_open(&self, e: usize) -> bool {
        let edge = &self.t.edges()[e];
        is_segment_open(edge.length, &self.arcs_by_edge[e], self.r).expect("arcs validated")
    }

    fn classify(&self, center: Point, n: f64, mode: GoodnessMode) -> Result<bool, CoarsegrainError> {
        match mode {
            GoodnessMode::Subcritical => self.subcritical_good(center, n),
            GoodnessMode::Supercritical => self.renormalized_good(center, n, false),
            GoodnessMode::HardGeometric => self.renormalized_good(center, n, true),
        }
    }

    fn subcritical_good(&self, center: Point, n: f64) -> Result<bool, CoarsegrainError> {
        let qn = cube(center, n).expect("positive scale");
        if self.field.cube_radius(&qn)? >= n {
            return Ok(false);
        }
        // Every street piece inside the cube must be closed.
        let mut shifted = Vec::new();
        for (eid, e) in self.t.edges().iter().enumerate() {
            let Some(clip) = clip_segment_detailed(&e.geometry, &qn) else {
                continue;
            };
            let a0 = clip.t0 * e.length;
            let a1 = clip.t1 * e.length;
            self.arcs_within(eid, a0, a1, &mut shifted);
            if is_segment_open(a1 - a0, &shifted, self.r).expect("arcs validated") {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Supercritical and hard-geometric goodness share their structure; only
    /// the street-openness notion differs.
    fn renormalized_good(
        &self,
        center: Point,
        n: f64,
        hard: bool,
    ) -> Result<bool, CoarsegrainError> {
        let qn = cube(center, n).expect("positive scale");
        let q3 = cube(center, 3.0 * n).expect("positive scale");
        let q6 = cube(center, 6.0 * n).expect("positive scale");

        // (1) Stabilization radius over the 6n-cube.
        if self.field.cube_radius(&q6)? >= 6.0 * n {
            return Ok(false);
        }

        let open = |eid: usize| -> bool {
            if hard {
                self.t.edges()[eid].length <= self.r
            } else {
                self.street_open(eid)
            }
        };

        // (2) Some full street inside the n-cube; (3) one of them open.
        let mut any_full = false;
        let mut any_open_full = false;
        for (eid, e) in self.t.edges().iter().enumerate() {
            if e.is_clipped || !Self::inside(&qn, e) {
                continue;
            }
            any_full = true;
            if open(eid) {
                any_open_full = true;
                break;
            }
        }
        if !any_full || !any_open_full {
            return Ok(false);
        }

        // (4) Every crossroad in the 6n-cube carries a relay.
        for (v, vert) in self.t.vertices().iter().enumerate() {
            if q6.contains(&vert.position) && !self.z.relays.is_open(v) {
                return Ok(false);
            }
        }

        // (5) Open full streets in the 3n-cube pairwise connected in the
        // graph restricted to the 6n-cube.
        let open3: Vec<usize> = self
            .t
            .edges()
            .iter()
            .enumerate()
            .filter(|(eid, e)| !e.is_clipped && Self::inside(&q3, e) && open(*eid))
            .map(|(eid, _)| eid)
            .collect();
        if open3.len() < 2 {
            return Ok(true);
        }
        let comps = self.restricted_components(&q6);
        let street_comps: Vec<Vec<u32>> = open3
            .iter()
            .map(|&eid| comps.street_labels(eid))
            .collect();
        for i in 0..street_comps.len() {
            for j in (i + 1)..street_comps.len() {
                let connected = street_comps[i]
                    .iter()
                    .any(|l| street_comps[j].binary_search(l).is_ok());
                if !connected {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn inside(q: &Window, e: &crate::pvt::Edge) -> bool {
        q.contains(&e.geometry.a()) && q.contains(&e.geometry.b())
    }

    /// Components of the subgraph induced by nodes positioned inside `q`.
    fn restricted_components(&self, q: &Window) -> RestrictedComponents {
        // Hosted nodes inside q, bucketed per street. A street's nodes in a
        // convex cube occupy a contiguous arc interval, so chain unions give
        // exactly the induced pairwise-threshold components.
        let mut buckets: std::collections::HashMap<usize, Vec<(f64, u32)>> =
            std::collections::HashMap::new();
        let mut count: u32 = 0;
        for u in &self.z.users {
            if q.contains(&u.position) {
                buckets.entry(u.edge_id).or_default().push((u.arc, count));
                count += 1;
            }
        }
        for (v, vert) in self.t.vertices().iter().enumerate() {
            if !q.contains(&vert.position) || !self.z.relays.is_open(v) {
                continue;
            }
            for &e in &vert.incident_edges {
                let arc = self.t.arc_at_vertex(e, v).expect("consistent incidence");
                buckets.entry(e).or_default().push((arc, count));
            }
            count += 1;
        }
        let mut uf = UnionFind::new(count as usize);
        for bucket in buckets.values_mut() {
            bucket.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for w in bucket.windows(2) {
                if w[1].0 - w[0].0 <= self.r {
                    uf.union(w[0].1, w[1].1);
                }
            }
        }
        let roots: Vec<u32> = (0..count).map(|i| uf.find(i)).collect();
        RestrictedComponents { buckets, roots }
    }
}

struct RestrictedComponents {
    buckets: std::collections::HashMap<usize, Vec<(f64, u32)>>,
    roots: Vec<u32>,
}

impl RestrictedComponents {
    /// Sorted component roots of the nodes hosted on street `eid`.
    fn street_labels(&self, eid: usize) -> Vec<u32> {
        let mut labels: Vec<u32> = self
            .buckets
            .get(&eid)
            .map(|b| b.iter().map(|&(_, node)| self.roots[node as usize]).collect())
            .unwrap_or_default();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

/// Classify every lattice site of scale `n` against the tessellation and
/// node set. Sites whose mode-required cube does not fit inside the window
/// are flagged `OutOfWindow`, never silently evaluated.
pub fn classify_sites(
    t: &Tessellation,
    z: &NodeSet,
    n: f64,
    r: f64,
    mode: GoodnessMode,
) -> Result<SiteGrid, CoarsegrainError> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(CoarsegrainError::InvalidScale(n));
    }
    let classifier = SiteClassifier::new(t, z, r)?;
    let w = t.window();

    let i_min = ((w.min().x - n / 2.0) / n).floor() as i64;
    let i_max = ((w.max().x + n / 2.0) / n).ceil() as i64;
    let j_min = ((w.min().y - n / 2.0) / n).floor() as i64;
    let j_max = ((w.max().y + n / 2.0) / n).ceil() as i64;

    let mut coords = Vec::new();
    for j in j_min..=j_max {
        for i in i_min..=i_max {
            let center = Point::new(n * i as f64, n * j as f64);
            let own = cube(center, n).expect("positive scale");
            let intersects = own.min().x < w.max().x
                && own.max().x > w.min().x
                && own.min().y < w.max().y
                && own.max().y > w.min().y;
            if intersects {
                coords.push((i, j, center));
            }
        }
    }

    let sites: Result<Vec<SiteRecord>, CoarsegrainError> = coords
        .par_iter()
        .map(|&(i, j, center)| {
            let needed = cube(center, mode.needed_side(n)).expect("positive scale");
            let flag = if !w.contains_window(&needed) {
                SiteFlag::OutOfWindow
            } else if classifier.classify(center, n, mode)? {
                SiteFlag::Good
            } else {
                SiteFlag::Bad
            };
            Ok(SiteRecord { z: [i, j], flag })
        })
        .collect();

    Ok(SiteGrid {
        n,
        mode,
        sites: sites?,
    })
}

/// Window side (in units of `n`) that keeps the origin-site classification
/// local: seeds beyond it cannot change the outcome in the regimes where
/// the stabilization condition holds.
fn diagnostic_window_units(mode: GoodnessMode) -> f64 {
    match mode {
        GoodnessMode::Subcritical => 4.0,
        // Exactness of the radius condition would need 18n; 8n keeps the
        // street geometry in the 6n-cube exact whenever R(Q_6n) < n, which
        // dominates every regime of interest, at a quarter of the seed cost.
        _ => 8.0,
    }
}

/// Empirical probability that the origin site is n-bad, over independent
/// realizations of the whole model at `params`.
pub fn bad_site_frequency(
    params: &ModelParams,
    mode: GoodnessMode,
    n: f64,
    trials: u64,
    base: RngStream,
) -> Result<f64, CoarsegrainError> {
    params
        .validate()
        .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
    let ConnectionRange::Finite(r) = params.range else {
        return Err(CoarsegrainError::NeedFiniteRange);
    };
    if !(n > 0.0 && n.is_finite()) {
        return Err(CoarsegrainError::InvalidScale(n));
    }
    if trials == 0 {
        return Err(CoarsegrainError::InvalidParams("trials must be at least 1".into()));
    }
    let side = diagnostic_window_units(mode) * n;
    let window = cube(Point::new(0.0, 0.0), side).expect("positive side");

    let bad: Result<Vec<bool>, CoarsegrainError> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::new(base.master_seed, base.stream_id.wrapping_add(trial)).rng();
            let seeds = sample_seeds(window, params.lambda_s, &mut rng)
                .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
            if seeds.points().is_empty() {
                // No seeds: no streets, conditions (1) fails trivially.
                return Ok(true);
            }
            let t = build_tessellation(seeds)
                .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
            let users = sample_users(&t, params.lambda, &mut rng)
                .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
            let relays = sample_relays(&t, params.p, &mut rng)
                .map_err(|e| CoarsegrainError::InvalidParams(e.to_string()))?;
            let z = NodeSet::new(&t, users, relays);
            let classifier = SiteClassifier::new(&t, &z, r)?;
            Ok(!classifier.classify(Point::new(0.0, 0.0), n, mode)?)
        })
        .collect();
    let bad = bad?;
    Ok(bad.iter().filter(|&&b| b).count() as f64 / trials as f64)
}

/// Essential-connectedness spot check at scale `n` around the origin:
/// whenever the stabilization radius over the 2n-cube is below n/2, the
/// street system must meet the n-cube and all its pieces in the 2n-cube
/// must belong to one connected component.
///
/// Returns `None` when the premise does not hold in this realization.
pub fn essential_connectedness_check(
    t: &Tessellation,
    n: f64,
) -> Result<Option<bool>, CoarsegrainError> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(CoarsegrainError::InvalidScale(n));
    }
    let qn = cube(Point::new(0.0, 0.0), n).expect("positive side");
    let q2n = cube(Point::new(0.0, 0.0), 2.0 * n).expect("positive side");
    let field = StabilizationField::new(t);
    if field.cube_radius(&q2n)? >= n / 2.0 {
        return Ok(None);
    }

    // Street pieces inside the 2n-cube, connected through shared crossroads
    // that lie inside the cube.
    let mut piece_ids = Vec::new();
    let mut meets_qn = Vec::new();
    for (eid, e) in t.edges().iter().enumerate() {
        if clip_segment_detailed(&e.geometry, &q2n).is_none() {
            continue;
        }
        piece_ids.push(eid);
        meets_qn.push(clip_segment_detailed(&e.geometry, &qn).is_some());
    }
    if !meets_qn.iter().any(|&m| m) {
        return Ok(Some(false)); // support misses the inner cube
    }

    let mut uf = UnionFind::new(piece_ids.len());
    let mut by_vertex: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();
    for (i, &eid) in piece_ids.iter().enumerate() {
        for end in [&t.edges()[eid].ends.0, &t.edges()[eid].ends.1] {
            let EdgeEnd::Vertex(v) = end else { continue };
            if !q2n.contains(&t.vertices()[*v].position) {
                continue;
            }
            match by_vertex.entry(*v) {
                std::collections::hash_map::Entry::Occupied(o) => uf.union(*o.get(), i as u32),
                std::collections::hash_map::Entry::Vacant(va) => {
                    va.insert(i as u32);
                }
            }
        }
    }

    let mut root_of_qn: Option<u32> = None;
    for (i, &m) in meets_qn.iter().enumerate() {
        if !m {
            continue;
        }
        let root = uf.find(i as u32);
        match root_of_qn {
            None => root_of_qn = Some(root),
            Some(r0) if r0 != root => return Ok(Some(false)),
            _ => {}
        }
    }
    Ok(Some(true))
}
