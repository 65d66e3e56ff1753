//! Computing `dα(a, b)` on small instances.
//!
//! The terminals are the points where `a` and `b` disagree, carrying the
//! signed difference. Every full Steiner topology on them is tried; the flow
//! on each tree edge is forced by the two sides it separates, so only the
//! Steiner coordinates remain, and for a fixed topology the cost is convex in
//! them. Degenerate trees appear as Steiner points collapsing onto a
//! neighbour.
//!
//! For `α < 0` thin edges are expensive and it can pay to route mass out of
//! a point and back into a second copy of it. Those candidates are generated
//! by keeping the `a` and `b` masses of shared support points as separate
//! terminals.

mod optimizer;
pub mod topology;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::measures::{AtomicMeasure, Point};
use crate::transport_graph::{cost_malpha, PathBuilder, PathError, TransportPath};

use optimizer::Problem;
pub use topology::{full_topologies, topology_count, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("source mass {source_mass} differs from sink mass {sink_mass}")]
    MassMismatch { source_mass: f64, sink_mass: f64 },
    #[error("measures live in dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("alpha must be at most 1, got {0}")]
    AlphaOutOfRange(f64),
    #[error("triangle inequality violated: direct {direct} exceeds {upper}")]
    TriangleViolation { direct: f64, upper: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Largest terminal count searched exhaustively.
    pub max_terminals: usize,
    /// Initializations per topology. Placement for a fixed topology is
    /// convex, so extra jittered starts only guard against slow convergence.
    pub restarts: usize,
    pub seed: u64,
    /// Relative step tolerance of the Steiner iteration.
    pub tol: f64,
    /// Iteration cap per initialization.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_terminals: 7,
            restarts: 1,
            seed: 0,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub value: f64,
    pub path: TransportPath,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotKind {
    Merged,
    SplitSource,
    SplitSink,
}

#[derive(Debug, Clone)]
struct Slot {
    location: Point,
    net: f64,
    kind: SlotKind,
}

/// One way of turning `(a, b)` into signed terminals.
#[derive(Debug, Clone)]
struct TerminalSet {
    slots: Vec<Slot>,
    /// Shared support points whose masses stay on separate copies.
    split: Vec<Point>,
}

struct Candidate {
    cost: f64,
    key: Vec<(usize, usize)>,
    set: usize,
    edges: Vec<(usize, usize)>,
    flows: Vec<f64>,
    steiner: Vec<Vec<f64>>,
    iterations: usize,
}

/// Upper bound on `dα(a, b)` from the candidate family, exact on the regimes
/// flagged by [`SolveStatus::Exact`].
pub fn solve_dalpha(
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<SolveResult, SolverError> {
    check_inputs(a, b, alpha)?;
    let mass = a.total_mass();
    let zero = 1e-12 * mass;
    let merged = merged_terminals(a, b, zero);

    if merged.slots.is_empty() {
        let path = build_path(a, b, &merged, &[], &[], &[], zero)?;
        return Ok(SolveResult {
            value: 0.0,
            path,
            status: SolveStatus::Exact,
            iterations: 0,
        });
    }

    if alpha >= 1.0 || merged.slots.len() > opts.max_terminals {
        let (edges, flows) = if alpha >= 1.0 {
            matching_tree(&merged)
        } else {
            spanning_tree(&merged)
        };
        let path = build_path(a, b, &merged, &edges, &flows, &[], zero)?;
        return Ok(SolveResult {
            value: cost_malpha(&path, alpha)?,
            path,
            status: SolveStatus::Heuristic,
            iterations: 0,
        });
    }

    let mut sets = vec![merged];
    if alpha < 0.0 {
        sets.extend(split_terminals(a, b, zero, opts.max_terminals));
    }
    let scale = instance_scale(a, b);

    let mut best: Option<Candidate> = None;
    for (si, set) in sets.iter().enumerate() {
        if let Some(c) = best_for_set(set, si, alpha, scale, zero, opts) {
            if best.as_ref().is_none_or(|b| better(&c, b, scale)) {
                best = Some(c);
            }
        }
    }
    let best = best.expect("the merged terminal set always yields a candidate");
    let iterations = best.iterations;
    let set = &sets[best.set];
    let path = build_path(a, b, set, &best.edges, &best.flows, &best.steiner, zero)?;

    let exact = if alpha >= 0.0 {
        true
    } else {
        a.len() == 1 && b.len() <= 2 && a.ambient_dim() == 1
    };
    Ok(SolveResult {
        value: cost_malpha(&path, alpha)?,
        path,
        status: if exact {
            SolveStatus::Exact
        } else {
            SolveStatus::Heuristic
        },
        iterations,
    })
}

/// `dα(a, b) + dα(b, c)`, after checking that it dominates `dα(a, c)`.
pub fn triangle_upper(
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    c: &AtomicMeasure,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<f64, SolverError> {
    let upper = solve_dalpha(a, b, alpha, opts)?.value + solve_dalpha(b, c, alpha, opts)?.value;
    let direct = solve_dalpha(a, c, alpha, opts)?.value;
    if direct > upper + 1e-9 {
        return Err(SolverError::TriangleViolation { direct, upper });
    }
    Ok(upper)
}

fn check_inputs(a: &AtomicMeasure, b: &AtomicMeasure, alpha: f64) -> Result<(), SolverError> {
    if !(alpha <= 1.0) {
        return Err(SolverError::AlphaOutOfRange(alpha));
    }
    if a.ambient_dim() != b.ambient_dim() {
        return Err(SolverError::DimensionMismatch(a.ambient_dim(), b.ambient_dim()));
    }
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-12 * ma.max(1.0) {
        return Err(SolverError::MassMismatch {
            source_mass: ma,
            sink_mass: mb,
        });
    }
    Ok(())
}

fn merged_terminals(a: &AtomicMeasure, b: &AtomicMeasure, zero: f64) -> TerminalSet {
    let slots = a
        .signed_difference(b)
        .into_iter()
        .filter(|(_, m)| m.abs() > zero)
        .map(|(location, net)| Slot {
            location,
            net,
            kind: SlotKind::Merged,
        })
        .collect();
    TerminalSet {
        slots,
        split: Vec::new(),
    }
}

/// Every nonempty choice of shared support points to keep unnetted, as long
/// as the terminal count stays within `max`.
fn split_terminals(a: &AtomicMeasure, b: &AtomicMeasure, zero: f64, max: usize) -> Vec<TerminalSet> {
    let shared: Vec<&Point> = a.support().filter(|p| b.index_of(p).is_some()).collect();
    if shared.len() > 16 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for mask in 1u32..(1 << shared.len()) {
        let split: Vec<Point> = (0..shared.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| shared[i].clone())
            .collect();
        let mut slots = Vec::new();
        for (location, net) in a.signed_difference(b) {
            if split.contains(&location) {
                slots.push(Slot {
                    location: location.clone(),
                    net: a.mass_at(&location),
                    kind: SlotKind::SplitSource,
                });
                slots.push(Slot {
                    net: -b.mass_at(&location),
                    location,
                    kind: SlotKind::SplitSink,
                });
            } else if net.abs() > zero {
                slots.push(Slot {
                    location,
                    net,
                    kind: SlotKind::Merged,
                });
            }
        }
        if slots.len() <= max {
            out.push(TerminalSet { slots, split });
        }
    }
    out
}

fn instance_scale(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let pts: Vec<&Point> = a.support().chain(b.support()).collect();
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            d = d.max(p.distance(q));
        }
    }
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

fn better(x: &Candidate, y: &Candidate, scale: f64) -> bool {
    let tie = 1e-12 * scale.max(x.cost.abs());
    if (x.cost - y.cost).abs() > tie {
        return x.cost < y.cost;
    }
    (x.set, &x.key).cmp(&(y.set, &y.key)) == Ordering::Less
}

fn best_for_set(
    set: &TerminalSet,
    set_index: usize,
    alpha: f64,
    scale: f64,
    zero: f64,
    opts: &SolveOptions,
) -> Option<Candidate> {
    let n = set.slots.len();
    let terminals: Vec<Vec<f64>> = set.slots.iter().map(|s| s.location.coords().to_vec()).collect();
    let net: Vec<f64> = set.slots.iter().map(|s| s.net).collect();
    let dim = terminals[0].len();
    let centroid: Vec<f64> = (0..dim)
        .map(|k| terminals.iter().map(|t| t[k]).sum::<f64>() / n as f64)
        .collect();
    let topologies = full_topologies(n);

    let evaluated: Vec<Candidate> = topologies
        .par_iter()
        .enumerate()
        .map(|(ti, topo)| {
            let flows: Vec<f64> = topo
                .flows(&net)
                .into_iter()
                .map(|f| if f.abs() <= zero { 0.0 } else { f })
                .collect();
            let coef: Vec<f64> = flows
                .iter()
                .map(|f| if *f == 0.0 { 0.0 } else { f.abs().powf(alpha) })
                .collect();
            let problem = Problem {
                terminals: &terminals,
                steiner: topo.steiner(),
                edges: &topo.edges,
                coef: &coef,
                dim,
                scale,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(
                opts.seed ^ ((set_index as u64) << 40) ^ ((ti as u64) << 8),
            );
            let mut best: Option<optimizer::Placement> = None;
            let mut iterations = 0;
            for r in 0..opts.restarts.max(1) {
                let init: Vec<Vec<f64>> = (0..topo.steiner())
                    .map(|_| {
                        centroid
                            .iter()
                            .map(|c| {
                                if r == 0 {
                                    *c
                                } else {
                                    c + scale * (rng.random::<f64>() - 0.5)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let placed = problem.optimize(init, opts.tol, opts.max_iter);
                iterations += placed.iterations;
                if best.as_ref().is_none_or(|b| placed.cost < b.cost) {
                    best = Some(placed);
                }
            }
            let placed = best.expect("at least one restart");
            Candidate {
                cost: placed.cost,
                key: topo.canonical_edges(),
                set: set_index,
                edges: topo.edges.clone(),
                flows,
                steiner: placed.steiner,
                iterations,
            }
        })
        .collect();

    let total: usize = evaluated.iter().map(|c| c.iterations).sum();
    let mut best: Option<Candidate> = None;
    for c in evaluated {
        if best.as_ref().is_none_or(|b| better(&c, b, scale)) {
            best = Some(c);
        }
    }
    best.map(|mut c| {
        c.iterations = total;
        c
    })
}

/// Euclidean minimum spanning tree on the terminals.
fn spanning_tree(set: &TerminalSet) -> (Vec<(usize, usize)>, Vec<f64>) {
    let n = set.slots.len();
    let mut in_tree = vec![false; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    dist[0] = 0.0;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&i, &j| dist[i].total_cmp(&dist[j]))
            .expect("vertex left");
        in_tree[u] = true;
        if u != 0 {
            edges.push((link[u], u));
        }
        for v in 0..n {
            let d = set.slots[u].location.distance(&set.slots[v].location);
            if !in_tree[v] && d < dist[v] {
                dist[v] = d;
                link[v] = u;
            }
        }
    }
    let topo = Topology {
        terminals: n,
        edges,
    };
    let flows = tree_flows(&topo, set);
    (topo.edges, flows)
}

/// Direct source-to-sink edges, filled north-west corner style.
fn matching_tree(set: &TerminalSet) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut src: Vec<(usize, f64)> = Vec::new();
    let mut snk: Vec<(usize, f64)> = Vec::new();
    for (i, s) in set.slots.iter().enumerate() {
        if s.net > 0.0 {
            src.push((i, s.net));
        } else {
            snk.push((i, -s.net));
        }
    }
    let (mut edges, mut flows) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < src.len() && j < snk.len() {
        let m = src[i].1.min(snk[j].1);
        if m > 0.0 {
            edges.push((src[i].0, snk[j].0));
            flows.push(m);
        }
        src[i].1 -= m;
        snk[j].1 -= m;
        if src[i].1 <= 0.0 {
            i += 1;
        }
        if snk[j].1 <= 0.0 {
            j += 1;
        }
    }
    (edges, flows)
}

fn tree_flows(topo: &Topology, set: &TerminalSet) -> Vec<f64> {
    let net: Vec<f64> = set.slots.iter().map(|s| s.net).collect();
    topo.flows(&net)
}

/// Turns a tree over terminal slots and Steiner points into a path,
/// contracting Steiner points that sit on a neighbour.
fn build_path(
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    set: &TerminalSet,
    edges: &[(usize, usize)],
    flows: &[f64],
    steiner: &[Vec<f64>],
    zero: f64,
) -> Result<TransportPath, SolverError> {
    let mut builder = PathBuilder::new();
    let split_copy = |p: &Point| if set.split.contains(p) { 1 } else { 0 };
    for atom in a.atoms() {
        let v = builder.vertex(&atom.location);
        builder.source(v, atom.mass);
    }
    for atom in b.atoms() {
        let v = builder.vertex_copy(&atom.location, split_copy(&atom.location));
        builder.sink(v, atom.mass);
    }

    let t = set.slots.len();
    let nodes = t + steiner.len();
    let position = |u: usize| -> Vec<f64> {
        if u < t {
            set.slots[u].location.coords().to_vec()
        } else {
            steiner[u - t].clone()
        }
    };

    // union-find over nodes; a class holds at most one terminal
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut [usize], mut u: usize) -> usize {
        while parent[u] != u {
            parent[u] = parent[parent[u]];
            u = parent[u];
        }
        u
    }
    let scale = instance_scale(a, b);
    for &(u, v) in edges {
        if u < t && v < t {
            continue;
        }
        if crate::measures::distance(&position(u), &position(v)) >= 1e-10 * scale {
            continue;
        }
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv || (ru < t && rv < t) {
            continue;
        }
        // terminals stay class representatives
        if rv < t {
            parent[ru] = rv;
        } else {
            parent[rv] = ru;
        }
    }

    let mut vertex = vec![usize::MAX; nodes];
    for u in 0..nodes {
        let r = find(&mut parent, u);
        if vertex[r] == usize::MAX {
            vertex[r] = if r < t {
                let slot = &set.slots[r];
                let copy = u32::from(slot.kind == SlotKind::SplitSink);
                builder.vertex_copy(&slot.location, copy)
            } else {
                builder.fresh_vertex(&Point::new(position(r)))
            };
        }
        vertex[u] = vertex[r];
    }

    for (&(u, v), &f) in edges.iter().zip(flows) {
        if f.abs() <= zero {
            continue;
        }
        let (x, y) = (vertex[u], vertex[v]);
        if x == y {
            continue;
        }
        if f > 0.0 {
            builder.edge(x, y, f);
        } else {
            builder.edge(y, x, -f);
        }
    }
    Ok(builder.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport_graph::validate;

    fn pts(points: &[(&[f64], f64)]) -> AtomicMeasure {
        AtomicMeasure::from_atoms(points.iter().map(|(x, m)| (Point::new(x.to_vec()), *m))).unwrap()
    }

    fn y_instance() -> (AtomicMeasure, AtomicMeasure) {
        (
            pts(&[(&[0.0, 0.0], 1.0)]),
            pts(&[(&[1.0, 1.0], 0.5), (&[1.0, -1.0], 0.5)]),
        )
    }

    #[test]
    fn y_instance_at_zero() {
        let (a, b) = y_instance();
        let r = solve_dalpha(&a, &b, 0.0, &SolveOptions::default()).unwrap();
        assert!((r.value - (1.0 + 3f64.sqrt())).abs() < 1e-9, "{}", r.value);
        assert_eq!(r.status, SolveStatus::Exact);
        assert!(validate(&r.path, &a, &b).unwrap().valid);
        let st = r
            .path
            .vertices()
            .iter()
            .find(|v| v.location.coords()[1].abs() < 1e-9 && v.location.coords()[0] > 0.0)
            .unwrap();
        assert!((st.location.coords()[0] - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn y_instance_collapses_at_half() {
        let (a, b) = y_instance();
        let r = solve_dalpha(&a, &b, 0.5, &SolveOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
        assert!(validate(&r.path, &a, &b).unwrap().valid);
    }

    #[test]
    fn cycle_beats_direct_edge() {
        let a = pts(&[(&[0.0], 1.0)]);
        let b = pts(&[(&[0.0], 0.8), (&[1.0], 0.2)]);
        let r = solve_dalpha(&a, &b, -0.6, &SolveOptions::default()).unwrap();
        let expected = 1.0 + 0.8f64.powf(-0.6);
        assert!((r.value - expected).abs() < 1e-9, "{}", r.value);
        assert!(expected < 0.2f64.powf(-0.6));
        assert_eq!(r.status, SolveStatus::Exact);
        assert!(validate(&r.path, &a, &b).unwrap().valid);
    }

    #[test]
    fn single_edge() {
        let a = pts(&[(&[0.0], 1.0)]);
        let b = pts(&[(&[1.0], 1.0)]);
        for alpha in [-1.0, 0.0, 0.5, 0.9] {
            let r = solve_dalpha(&a, &b, alpha, &SolveOptions::default()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_measures_cost_nothing() {
        let (a, _) = y_instance();
        let r = solve_dalpha(&a, &a, -1.0, &SolveOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(validate(&r.path, &a, &a).unwrap().valid);
    }

    #[test]
    fn rejects_bad_input() {
        let (a, b) = y_instance();
        assert!(matches!(
            solve_dalpha(&a, &b.scale(2.0).unwrap(), 0.0, &SolveOptions::default()),
            Err(SolverError::MassMismatch { .. })
        ));
        assert_eq!(
            solve_dalpha(&a, &b, 1.5, &SolveOptions::default()),
            Err(SolverError::AlphaOutOfRange(1.5))
        );
    }

    #[test]
    fn large_instances_fall_back() {
        let a = pts(&[(&[0.0], 0.25), (&[1.0], 0.25), (&[2.0], 0.25), (&[3.0], 0.25)]);
        let b = pts(&[(&[0.5], 0.25), (&[1.5], 0.25), (&[2.5], 0.25), (&[3.5], 0.25)]);
        let opts = SolveOptions {
            max_terminals: 5,
            ..SolveOptions::default()
        };
        let r = solve_dalpha(&a, &b, 0.5, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::Heuristic);
        assert!(validate(&r.path, &a, &b).unwrap().valid);
    }

    #[test]
    fn collinear_triangle() {
        let d = |x: f64| pts(&[(&[x], 1.0)]);
        let up = triangle_upper(&d(0.0), &d(1.0), &d(2.0), 0.5, &SolveOptions::default()).unwrap();
        assert!((up - 2.0).abs() < 1e-12);
    }
}
