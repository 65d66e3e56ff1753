//! Transport paths: weighted digraphs over vertex copies.
//!
//! A vertex is a location together with a copy number, so a path may leave a
//! point and come back to a *different* copy of it. Source and sink masses are
//! attributed to individual vertices and the balance law is checked in net
//! form at every vertex:
//!
//! ```text
//! inflow(v) + source(v) = outflow(v) + sink(v)
//! ```

use std::collections::HashMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{AtomicMeasure, MeasureError, Point};

/// Relative tolerance for the balance law.
pub const BALANCE_TOL: f64 = 1e-9;
/// Absolute slack on the weight bound `w(e) <= ||a||`.
pub const WEIGHT_SLACK: f64 = 1e-12;
/// Tolerance on `||a|| = ||b||` and on intermediate measures in concatenation.
pub const MASS_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("source mass {source_mass} differs from sink mass {sink_mass}")]
    MassMismatch { source_mass: f64, sink_mass: f64 },
    #[error("alpha must be at most 1, got {0}")]
    AlphaOutOfRange(f64),
    #[error("sink measure of the first path differs from source measure of the second")]
    IntermediateMeasureMismatch,
    #[error("edge {0} references a missing vertex")]
    DanglingEdge(usize),
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("edge {index} has invalid weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("attribution references missing vertex {0}")]
    DanglingAttribution(usize),
    #[error("attribution at vertex {vertex} has invalid mass {mass}")]
    BadAttribution { vertex: usize, mass: f64 },
    #[error("vertex {0} duplicates an earlier (location, copy) pair")]
    DuplicateVertex(usize),
    #[error("vertex {0} has a non-finite coordinate or wrong dimension")]
    BadVertex(usize),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A location together with a copy number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexId {
    #[serde(rename = "x")]
    pub location: Point,
    pub copy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    #[serde(rename = "w")]
    pub weight: f64,
}

/// Mass of `a` (or `b`) placed at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub vertex: usize,
    pub mass: f64,
}

/// Weighted directed graph carrying an atomic measure onto another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct TransportPath {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
    sources: Vec<Attribution>,
    sinks: Vec<Attribution>,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
    src_attr: Vec<Attribution>,
    snk_attr: Vec<Attribution>,
}

impl TryFrom<PathRepr> for TransportPath {
    type Error = PathError;
    fn try_from(r: PathRepr) -> Result<Self, PathError> {
        TransportPath::new(r.vertices, r.edges, r.src_attr, r.snk_attr)
    }
}

impl From<TransportPath> for PathRepr {
    fn from(p: TransportPath) -> Self {
        PathRepr {
            vertices: p.vertices,
            edges: p.edges,
            src_attr: p.sources,
            snk_attr: p.sinks,
        }
    }
}

impl TransportPath {
    pub fn new(
        vertices: Vec<VertexId>,
        edges: Vec<Edge>,
        sources: Vec<Attribution>,
        sinks: Vec<Attribution>,
    ) -> Result<Self, PathError> {
        let dim = vertices.first().map_or(0, |v| v.location.dim());
        let mut seen = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if v.location.dim() != dim || dim == 0 || !v.location.is_finite() {
                return Err(PathError::BadVertex(i));
            }
            if seen.insert((v.location.key(), v.copy), i).is_some() {
                return Err(PathError::DuplicateVertex(i));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.from >= vertices.len() || e.to >= vertices.len() {
                return Err(PathError::DanglingEdge(i));
            }
            if e.from == e.to {
                return Err(PathError::SelfLoop(i));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(PathError::BadWeight {
                    index: i,
                    weight: e.weight,
                });
            }
        }
        for at in sources.iter().chain(&sinks) {
            if at.vertex >= vertices.len() {
                return Err(PathError::DanglingAttribution(at.vertex));
            }
            if !(at.mass > 0.0 && at.mass.is_finite()) {
                return Err(PathError::BadAttribution {
                    vertex: at.vertex,
                    mass: at.mass,
                });
            }
        }
        Ok(TransportPath {
            vertices,
            edges,
            sources,
            sinks,
        })
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &[Attribution] {
        &self.sources
    }

    pub fn sinks(&self) -> &[Attribution] {
        &self.sinks
    }

    pub fn edge_length(&self, e: &Edge) -> f64 {
        self.vertices[e.from]
            .location
            .distance(&self.vertices[e.to].location)
    }

    /// The measure obtained by summing source attributions per location.
    pub fn source_measure(&self) -> Result<AtomicMeasure, MeasureError> {
        self.attributed_measure(&self.sources)
    }

    pub fn sink_measure(&self) -> Result<AtomicMeasure, MeasureError> {
        self.attributed_measure(&self.sinks)
    }

    fn attributed_measure(&self, attrs: &[Attribution]) -> Result<AtomicMeasure, MeasureError> {
        AtomicMeasure::from_atoms(
            attrs
                .iter()
                .map(|a| (self.vertices[a.vertex].location.clone(), a.mass)),
        )
    }

    /// `inflow + source - outflow - sink` at every vertex.
    pub fn residuals(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.vertices.len()];
        for e in &self.edges {
            r[e.to] += e.weight;
            r[e.from] -= e.weight;
        }
        for s in &self.sources {
            r[s.vertex] += s.mass;
        }
        for s in &self.sinks {
            r[s.vertex] -= s.mass;
        }
        r
    }

    /// Vertices lying on a directed cycle of the vertex-copy graph.
    pub fn cyclic_vertices(&self) -> Vec<usize> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.vertices.len(), self.edges.len());
        let nodes: Vec<_> = (0..self.vertices.len()).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(nodes[e.from], nodes[e.to], ());
        }
        let mut out: Vec<usize> = tarjan_scc(&g)
            .into_iter()
            .filter(|c| c.len() > 1)
            .flatten()
            .map(|n| n.index())
            .collect();
        out.sort_unstable();
        out
    }

    /// Same graph with every edge reversed and sources swapped with sinks.
    pub fn reversed(&self) -> TransportPath {
        TransportPath {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    from: e.to,
                    to: e.from,
                    weight: e.weight,
                })
                .collect(),
            sources: self.sinks.clone(),
            sinks: self.sources.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Incremental construction of a [`TransportPath`] that hands out vertex
/// copies.
#[derive(Debug, Default)]
pub struct PathBuilder {
    vertices: Vec<VertexId>,
    index: HashMap<(Vec<u64>, u32), usize>,
    next_copy: HashMap<Vec<u64>, u32>,
    edges: Vec<Edge>,
    sources: Vec<Attribution>,
    sinks: Vec<Attribution>,
}

impl PathBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// The vertex `(location, copy)`, created if absent.
    pub fn vertex_copy(&mut self, location: &Point, copy: u32) -> usize {
        let key = location.key();
        if let Some(&i) = self.index.get(&(key.clone(), copy)) {
            return i;
        }
        let next = self.next_copy.entry(key.clone()).or_insert(0);
        *next = (*next).max(copy + 1);
        let i = self.vertices.len();
        self.vertices.push(VertexId {
            location: location.clone(),
            copy,
        });
        self.index.insert((key, copy), i);
        i
    }

    /// Copy 0 of `location`.
    pub fn vertex(&mut self, location: &Point) -> usize {
        self.vertex_copy(location, 0)
    }

    /// A copy of `location` not used so far.
    pub fn fresh_vertex(&mut self, location: &Point) -> usize {
        let copy = self.next_copy.get(&location.key()).copied().unwrap_or(0);
        self.vertex_copy(location, copy)
    }

    pub fn location(&self, v: usize) -> &Point {
        &self.vertices[v].location
    }

    pub fn edge(&mut self, from: usize, to: usize, weight: f64) {
        self.edges.push(Edge { from, to, weight });
    }

    pub fn source(&mut self, vertex: usize, mass: f64) {
        self.sources.push(Attribution { vertex, mass });
    }

    pub fn sink(&mut self, vertex: usize, mass: f64) {
        self.sinks.push(Attribution { vertex, mass });
    }

    pub fn build(self) -> Result<TransportPath, PathError> {
        TransportPath::new(self.vertices, self.edges, self.sources, self.sinks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceViolation {
    pub vertex: usize,
    /// `inflow + source - outflow - sink`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverweightEdge {
    pub edge: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub balance_violations: Vec<BalanceViolation>,
    pub overweight_edges: Vec<OverweightEdge>,
    pub cyclic_vertices: Vec<usize>,
    /// Source attributions do not add up to `a`.
    pub source_mismatch: bool,
    /// Sink attributions do not add up to `b`.
    pub sink_mismatch: bool,
}

/// Checks that `path` is a transport path from `a` to `b`.
pub fn validate(
    path: &TransportPath,
    a: &AtomicMeasure,
    b: &AtomicMeasure,
) -> Result<ValidationReport, PathError> {
    validate_with_tol(path, a, b, BALANCE_TOL)
}

pub fn validate_with_tol(
    path: &TransportPath,
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    rel_tol: f64,
) -> Result<ValidationReport, PathError> {
    let mass = a.total_mass();
    if (mass - b.total_mass()).abs() > MASS_MATCH_TOL * mass.max(1.0) {
        return Err(PathError::MassMismatch {
            source_mass: mass,
            sink_mass: b.total_mass(),
        });
    }
    let tol = rel_tol * mass;

    let balance_violations: Vec<_> = path
        .residuals()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > tol)
        .map(|(vertex, residual)| BalanceViolation { vertex, residual })
        .collect();

    let overweight_edges: Vec<_> = path
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.weight > mass + WEIGHT_SLACK)
        .map(|(edge, e)| OverweightEdge {
            edge,
            weight: e.weight,
        })
        .collect();

    let cyclic_vertices = path.cyclic_vertices();
    let source_mismatch = !path.source_measure().is_ok_and(|m| m.approx_eq(a, tol));
    let sink_mismatch = !path.sink_measure().is_ok_and(|m| m.approx_eq(b, tol));

    let valid = balance_violations.is_empty()
        && overweight_edges.is_empty()
        && cyclic_vertices.is_empty()
        && !source_mismatch
        && !sink_mismatch;
    Ok(ValidationReport {
        valid,
        balance_violations,
        overweight_edges,
        cyclic_vertices,
        source_mismatch,
        sink_mismatch,
    })
}

/// `Σ_e w(e)^α · length(e)`; zero-length edges contribute nothing.
pub fn cost_malpha(path: &TransportPath, alpha: f64) -> Result<f64, PathError> {
    if !(alpha <= 1.0) {
        return Err(PathError::AlphaOutOfRange(alpha));
    }
    Ok(path
        .edges
        .iter()
        .map(|e| {
            let len = path.edge_length(e);
            if len == 0.0 {
                0.0
            } else {
                e.weight.powf(alpha) * len
            }
        })
        .sum())
}

/// Clips every edge to the closed ball `B(center, radius)`.
///
/// Edges crossing the sphere are cut at the intersection point; the cut ends
/// become fresh vertices carrying the edge weight as source (entering) or sink
/// (leaving) mass, so the result satisfies the balance law for its induced
/// boundary measures.
pub fn restrict_to_ball(
    path: &TransportPath,
    center: &Point,
    radius: f64,
) -> Result<TransportPath, PathError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PathError::BadRadius(radius));
    }
    let limit = radius * (1.0 + 1e-12);
    let inside: Vec<bool> = path
        .vertices
        .iter()
        .map(|v| v.location.distance(center) <= limit)
        .collect();

    let mut builder = PathBuilder::new();
    let mut map = vec![usize::MAX; path.vertices.len()];
    for (i, v) in path.vertices.iter().enumerate() {
        if inside[i] {
            map[i] = builder.vertex_copy(&v.location, v.copy);
        }
    }
    for s in &path.sources {
        if inside[s.vertex] {
            builder.source(map[s.vertex], s.mass);
        }
    }
    for s in &path.sinks {
        if inside[s.vertex] {
            builder.sink(map[s.vertex], s.mass);
        }
    }

    let c = center.coords();
    for e in &path.edges {
        let (ia, ib) = (inside[e.from], inside[e.to]);
        if ia && ib {
            builder.edge(map[e.from], map[e.to], e.weight);
            continue;
        }
        let a = path.vertices[e.from].location.coords();
        let b = path.vertices[e.to].location.coords();
        let clip = segment_ball_interval(a, b, c, radius).and_then(|(t0, t1)| {
            let lo = if ia { 0.0 } else { t0.max(0.0) };
            let hi = if ib { 1.0 } else { t1.min(1.0) };
            (hi > lo).then_some((lo, hi))
        });
        match clip {
            Some((lo, hi)) => {
                let start = if ia {
                    map[e.from]
                } else {
                    let v = builder.fresh_vertex(&lerp(a, b, lo));
                    builder.source(v, e.weight);
                    v
                };
                let end = if ib {
                    map[e.to]
                } else {
                    let v = builder.fresh_vertex(&lerp(a, b, hi));
                    builder.sink(v, e.weight);
                    v
                };
                builder.edge(start, end, e.weight);
            }
            None => {
                // the segment only touches the ball at an endpoint
                if ia {
                    builder.sink(map[e.from], e.weight);
                }
                if ib {
                    builder.source(map[e.to], e.weight);
                }
            }
        }
    }
    builder.build()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Point {
    Point::new(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect())
}

/// Parameters `t0 <= t1` where the line `a + t (b - a)` meets the sphere, if
/// it crosses the open ball.
fn segment_ball_interval(a: &[f64], b: &[f64], c: &[f64], r: f64) -> Option<(f64, f64)> {
    let (mut dd, mut fd, mut ff) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        let d = b[i] - a[i];
        let f = a[i] - c[i];
        dd += d * d;
        fd += f * d;
        ff += f * f;
    }
    if dd == 0.0 {
        return None;
    }
    let disc = fd * fd - dd * (ff - r * r);
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-fd - s) / dd, (-fd + s) / dd))
}

/// Joins a path `a -> b` with a path `b -> c` into a path `a -> c`.
///
/// The vertices of the second path receive fresh copies; sink attributions of
/// the first path are wired to source attributions of the second at the same
/// location by zero-length edges, so the cost is exactly additive.
pub fn concatenate(first: &TransportPath, second: &TransportPath) -> Result<TransportPath, PathError> {
    let mid1 = first.sink_measure()?;
    let mid2 = second.source_measure()?;
    if !mid1.approx_eq(&mid2, MASS_MATCH_TOL * mid1.total_mass().max(1.0)) {
        return Err(PathError::IntermediateMeasureMismatch);
    }

    let mut builder = PathBuilder::new();
    let map1: Vec<usize> = first
        .vertices
        .iter()
        .map(|v| builder.vertex_copy(&v.location, v.copy))
        .collect();
    let map2: Vec<usize> = second
        .vertices
        .iter()
        .map(|v| builder.fresh_vertex(&v.location))
        .collect();
    for e in &first.edges {
        builder.edge(map1[e.from], map1[e.to], e.weight);
    }
    for e in &second.edges {
        builder.edge(map2[e.from], map2[e.to], e.weight);
    }
    for s in &first.sources {
        builder.source(map1[s.vertex], s.mass);
    }
    for s in &second.sinks {
        builder.sink(map2[s.vertex], s.mass);
    }

    // group the intermediate attributions by location, then match them
    // north-west corner style
    let mut groups: HashMap<Vec<u64>, (Vec<(usize, f64)>, Vec<(usize, f64)>)> = HashMap::new();
    let mut order: Vec<Vec<u64>> = Vec::new();
    for s in &first.sinks {
        let key = first.vertices[s.vertex].location.key();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Default::default()
            })
            .0
            .push((map1[s.vertex], s.mass));
    }
    for s in &second.sources {
        let key = second.vertices[s.vertex].location.key();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Default::default()
            })
            .1
            .push((map2[s.vertex], s.mass));
    }
    let eps = 1e-15 * mid1.total_mass();
    for key in order {
        let (mut inc, mut out) = groups.remove(&key).unwrap_or_default();
        let (mut i, mut j) = (0, 0);
        while i < inc.len() && j < out.len() {
            let moved = inc[i].1.min(out[j].1);
            if moved > eps {
                builder.edge(inc[i].0, out[j].0, moved);
            }
            inc[i].1 -= moved;
            out[j].1 -= moved;
            if inc[i].1 <= eps {
                i += 1;
            }
            if out[j].1 <= eps {
                j += 1;
            }
        }
    }
    builder.build()
}
