//! The line-of-sight connectivity graph: users and open relays are nodes,
//! and two nodes are linked when they sit on the same street within
//! Euclidean distance `r` of each other.
//!
//! Streets are straight, so per-street distance equals arc distance: sorting
//! a street's nodes by arc and unioning consecutive pairs with gap <= r
//! produces exactly the components of the full pairwise-threshold graph.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Window};
use crate::processes::NodeSet;
use crate::pvt::Tessellation;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node set was sampled on a different tessellation")]
    TessellationMismatch,
    #[error("user {user} references street {edge_id} out of range")]
    BadEdgeReference { user: usize, edge_id: usize },
    #[error("crossing band must be positive and less than half the window width")]
    InvalidBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Relay,
}

/// A node of the connectivity graph with its street hosting information.
/// Users sit on one street; a relay at a crossroad lies on every incident
/// street, at arc coordinate 0 or street length (it is an endpoint of each).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    /// User index or vertex id, depending on `kind`.
    pub source_id: usize,
    pub position: Point,
    pub host_edges: Vec<usize>,
    pub arc_per_host: Vec<f64>,
}

/// A labelling of graph nodes by connected component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentLabels {
    /// Component label per node, compacted to 0..component_count.
    pub label: Vec<usize>,
    /// Node count per component label.
    pub component_sizes: Vec<usize>,
}

impl ComponentLabels {
    pub fn component_count(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn same_component(&self, a: usize, b: usize) -> bool {
        self.label[a] == self.label[b]
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grandparent = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grandparent;
            x = grandparent;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }

    /// Compact labels in first-occurrence order (deterministic).
    pub fn labels(&mut self) -> ComponentLabels {
        let n = self.parent.len();
        let mut map: HashMap<u32, usize> = HashMap::new();
        let mut label = Vec::with_capacity(n);
        let mut component_sizes = Vec::new();
        for x in 0..n as u32 {
            let root = self.find(x);
            let next = component_sizes.len();
            let l = *map.entry(root).or_insert_with(|| {
                component_sizes.push(0);
                next
            });
            component_sizes[l] += 1;
            label.push(l);
        }
        ComponentLabels {
            label,
            component_sizes,
        }
    }
}

fn collect_nodes(t: &Tessellation, z: &NodeSet) -> Result<Vec<GraphNode>, GraphError> {
    if z.tessellation_ref != t.fingerprint() {
        return Err(GraphError::TessellationMismatch);
    }
    let mut nodes = Vec::with_capacity(z.users.len() + t.vertices().len());
    for (i, u) in z.users.iter().enumerate() {
        if u.edge_id >= t.edges().len() {
            return Err(GraphError::BadEdgeReference {
                user: i,
                edge_id: u.edge_id,
            });
        }
        nodes.push(GraphNode {
            kind: NodeKind::User,
            source_id: i,
            position: u.position,
            host_edges: vec![u.edge_id],
            arc_per_host: vec![u.arc],
        });
    }
    for (v, vert) in t.vertices().iter().enumerate() {
        if !z.relays.is_open(v) {
            continue;
        }
        let mut host_edges = Vec::with_capacity(vert.incident_edges.len());
        let mut arc_per_host = Vec::with_capacity(vert.incident_edges.len());
        for &e in &vert.incident_edges {
            let arc = t
                .arc_at_vertex(e, v)
                .expect("incidence lists are consistent");
            host_edges.push(e);
            arc_per_host.push(arc);
        }
        nodes.push(GraphNode {
            kind: NodeKind::Relay,
            source_id: v,
            position: vert.position,
            host_edges,
            arc_per_host,
        });
    }
    Ok(nodes)
}

fn street_buckets(t: &Tessellation, nodes: &[GraphNode]) -> Vec<Vec<(f64, u32)>> {
    let mut buckets: Vec<Vec<(f64, u32)>> = vec![Vec::new(); t.edges().len()];
    for (idx, node) in nodes.iter().enumerate() {
        for (&e, &arc) in node.host_edges.iter().zip(&node.arc_per_host) {
            buckets[e].push((arc, idx as u32));
        }
    }
    for b in buckets.iter_mut() {
        b.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    }
    buckets
}

/// Build the connectivity graph at range `r` and label its components.
pub fn build_graph(
    t: &Tessellation,
    z: &NodeSet,
    r: f64,
) -> Result<(Vec<GraphNode>, ComponentLabels), GraphError> {
    assert!(r > 0.0 && r.is_finite(), "use build_graph_infinite_range for r = infinity");
    let nodes = collect_nodes(t, z)?;
    let mut uf = UnionFind::new(nodes.len());
    for bucket in street_buckets(t, &nodes) {
        for w in bucket.windows(2) {
            if w[1].0 - w[0].0 <= r {
                uf.union(w[0].1, w[1].1);
            }
        }
    }
    let labels = uf.labels();
    Ok((nodes, labels))
}

/// Infinite connectivity range: any two nodes sharing a street are linked.
/// With no users this is exactly site percolation of the open relays on the
/// tessellation's crossroads.
pub fn build_graph_infinite_range(
    t: &Tessellation,
    z: &NodeSet,
) -> Result<(Vec<GraphNode>, ComponentLabels), GraphError> {
    let nodes = collect_nodes(t, z)?;
    let mut uf = UnionFind::new(nodes.len());
    for bucket in street_buckets(t, &nodes) {
        for w in bucket.windows(2) {
            uf.union(w[0].1, w[1].1);
        }
    }
    let labels = uf.labels();
    Ok((nodes, labels))
}

/// Left-right crossing: some component touches both vertical contact bands
/// of width `band` at the window's x-extremes.
pub fn crosses_window(
    nodes: &[GraphNode],
    labels: &ComponentLabels,
    w: &Window,
    band: f64,
) -> Result<bool, GraphError> {
    if band.is_nan() || band <= 0.0 || 2.0 * band >= w.width() {
        return Err(GraphError::InvalidBand);
    }
    let left = w.min().x + band;
    let right = w.max().x - band;
    let k = labels.component_count();
    let mut touches_left = vec![false; k];
    let mut touches_right = vec![false; k];
    for (i, node) in nodes.iter().enumerate() {
        let l = labels.label[i];
        if node.position.x <= left {
            touches_left[l] = true;
            if touches_right[l] {
                return Ok(true);
            }
        }
        if node.position.x >= right {
            touches_right[l] = true;
            if touches_left[l] {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Append node records to a tessellation text dump: `n <kind> <x> <y> <label>`
/// per node, for inspection with external plotting tools.
pub fn dump_components<W: Write>(
    out: &mut W,
    t: &Tessellation,
    nodes: &[GraphNode],
    labels: &ComponentLabels,
) -> std::io::Result<()> {
    out.write_all(t.to_text().as_bytes())?;
    for (i, node) in nodes.iter().enumerate() {
        let kind = match node.kind {
            NodeKind::User => "user",
            NodeKind::Relay => "relay",
        };
        writeln!(
            out,
            "n {} {} {} {}",
            kind, node.position.x, node.position.y, labels.label[i]
        )?;
    }
    Ok(())
}
