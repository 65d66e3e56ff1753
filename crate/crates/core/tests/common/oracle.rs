//! Brute-force `dα` for tiny instances: every degree-three tree written as a
//! Prüfer code, Steiner points placed by grid search.

use std::collections::HashSet;

use ramified::measures::AtomicMeasure;

pub struct OracleInstance {
    pub points: Vec<[f64; 2]>,
    /// Signed mass, positive where `a` exceeds `b`.
    pub net: Vec<f64>,
}

impl OracleInstance {
    pub fn from_measures(a: &AtomicMeasure, b: &AtomicMeasure) -> Self {
        let mut points = Vec::new();
        let mut net = Vec::new();
        for (p, m) in a.signed_difference(b) {
            if m.abs() > 1e-12 * a.total_mass() {
                let c = p.coords();
                points.push([c[0], c.get(1).copied().unwrap_or(0.0)]);
                net.push(m);
            }
        }
        OracleInstance { points, net }
    }
}

/// Returns `None` for more than five terminals.
pub fn brute_force_oracle(a: &AtomicMeasure, b: &AtomicMeasure, alpha: f64, grid_step: f64) -> Option<f64> {
    let inst = OracleInstance::from_measures(a, b);
    let n = inst.points.len();
    if n > 5 {
        return None;
    }
    if n == 0 {
        return Some(0.0);
    }
    if n == 2 {
        return Some(inst.net[0].abs().powf(alpha) * dist(inst.points[0], inst.points[1]));
    }
    let mut best = f64::INFINITY;
    for tree in degree_three_trees(n) {
        let coefs = edge_coefficients(&tree, n, &inst.net, alpha);
        let v = grid_search(&inst.points, &tree, &coefs, grid_step);
        best = best.min(v);
    }
    Some(best)
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Trees on `n` leaves and `n - 2` inner nodes of degree three. Inner nodes
/// appear exactly twice in the Prüfer code, leaves never.
pub fn degree_three_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    let inner = n - 2;
    let mut code = Vec::new();
    for s in 0..inner {
        code.push(n + s);
        code.push(n + s);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    permute_unique(&mut code, 0, &mut |c| {
        let edges = decode_prufer(c, 2 * n - 2);
        let key = split_signature(&edges, n);
        if seen.insert(key) {
            out.push(edges);
        }
    });
    out
}

fn permute_unique(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    let mut used = HashSet::new();
    for i in k..v.len() {
        if used.insert(v[i]) {
            v.swap(k, i);
            permute_unique(v, k + 1, f);
            v.swap(k, i);
        }
    }
}

fn decode_prufer(code: &[usize], nodes: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; nodes];
    for &c in code {
        degree[c] += 1;
    }
    let mut edges = Vec::new();
    for &c in code {
        let leaf = (0..nodes).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf, c));
        degree[leaf] -= 1;
        degree[c] -= 1;
    }
    let rest: Vec<usize> = (0..nodes).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Leaf set on one side of an edge, as a bitmask.
fn side(edges: &[(usize, usize)], cut: usize, start: usize, leaves: usize) -> u32 {
    let mut stack = vec![start];
    let mut visited = HashSet::from([start]);
    let blocked = if edges[cut].0 == start { edges[cut].1 } else { edges[cut].0 };
    visited.insert(blocked);
    let mut mask = 0u32;
    while let Some(u) = stack.pop() {
        if u < leaves {
            mask |= 1 << u;
        }
        for &(x, y) in edges {
            let next = if x == u {
                y
            } else if y == u {
                x
            } else {
                continue;
            };
            if visited.insert(next) {
                stack.push(next);
            }
        }
    }
    mask
}

fn split_signature(edges: &[(usize, usize)], n: usize) -> Vec<u32> {
    let full = (1u32 << n) - 1;
    let mut sig: Vec<u32> = (0..edges.len())
        .map(|e| {
            let m = side(edges, e, edges[e].0, n);
            m.min(full ^ m)
        })
        .collect();
    sig.sort_unstable();
    sig
}

fn edge_coefficients(edges: &[(usize, usize)], n: usize, net: &[f64], alpha: f64) -> Vec<f64> {
    (0..edges.len())
        .map(|e| {
            let m = side(edges, e, edges[e].0, n);
            let flow: f64 = (0..n).filter(|i| m & (1 << i) != 0).map(|i| net[i]).sum();
            if flow.abs() <= 1e-12 {
                0.0
            } else {
                flow.abs().powf(alpha)
            }
        })
        .collect()
}

fn tree_cost(points: &[[f64; 2]], steiner: &[[f64; 2]], edges: &[(usize, usize)], coefs: &[f64]) -> f64 {
    let n = points.len();
    let at = |u: usize| if u < n { points[u] } else { steiner[u - n] };
    edges
        .iter()
        .zip(coefs)
        .map(|(&(u, v), &c)| if c == 0.0 { 0.0 } else { c * dist(at(u), at(v)) })
        .sum()
}

/// Block coordinate search: every nonempty group of Steiner points is
/// translated over a grid window, repeated until nothing improves, then the
/// grid is refined three times by a factor of ten.
fn grid_search(points: &[[f64; 2]], edges: &[(usize, usize)], coefs: &[f64], step: f64) -> f64 {
    let n = points.len();
    let inner = n - 2;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(step);
    let centroid = [
        points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let mut steiner = vec![centroid; inner];
    let mut best = tree_cost(points, &steiner, edges, coefs);
    let mut h = step;
    let mut window = (extent / step).ceil() as i64;
    for _round in 0..4 {
        loop {
            let before = best;
            for group in 1u32..(1 << inner) {
                let mut found = (0i64, 0i64);
                let mut trial = steiner.clone();
                for i in -window..=window {
                    for j in -window..=window {
                        for (s, p) in steiner.iter().enumerate() {
                            if group & (1 << s) != 0 {
                                trial[s] = [p[0] + i as f64 * h, p[1] + j as f64 * h];
                            }
                        }
                        let c = tree_cost(points, &trial, edges, coefs);
                        if c < best {
                            best = c;
                            found = (i, j);
                        }
                    }
                }
                for (s, p) in steiner.iter_mut().enumerate() {
                    if group & (1 << s) != 0 {
                        p[0] += found.0 as f64 * h;
                        p[1] += found.1 as f64 * h;
                    }
                }
            }
            if best >= before {
                break;
            }
        }
        h /= 10.0;
        window = 20;
    }
    best
}

