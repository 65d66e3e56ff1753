#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramified::measures::{AtomicMeasure, Point};
use ramified::transport_graph::{PathBuilder, TransportPath};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` atoms uniform in the unit square with masses drawn from `[0.1, 1]`, normalized.
pub fn random_probability(rng: &mut ChaCha8Rng, k: usize) -> AtomicMeasure {
    let atoms: Vec<(Point, f64)> = (0..k)
        .map(|_| {
            let p = Point::new(vec![rng.random::<f64>(), rng.random::<f64>()]);
            (p, rng.random_range(0.1..1.0))
        })
        .collect();
    AtomicMeasure::from_atoms(atoms).unwrap().normalize()
}

/// A pair of probability measures with `2 <= k + l <= max_terminals` atoms.
pub fn random_pair(rng: &mut ChaCha8Rng, max_terminals: usize) -> (AtomicMeasure, AtomicMeasure) {
    let k = rng.random_range(1..max_terminals);
    let l = rng.random_range(1..=max_terminals - k);
    (random_probability(rng, k), random_probability(rng, l))
}

pub fn instance_set(seed: u64, count: usize, max_terminals: usize) -> Vec<(AtomicMeasure, AtomicMeasure)> {
    let mut r = rng(seed);
    (0..count).map(|_| random_pair(&mut r, max_terminals)).collect()
}

pub fn dirac(coords: &[f64], mass: f64) -> AtomicMeasure {
    AtomicMeasure::dirac(Point::new(coords.to_vec()), mass).unwrap()
}

pub fn measure(atoms: &[(&[f64], f64)]) -> AtomicMeasure {
    AtomicMeasure::from_atoms(atoms.iter().map(|(x, m)| (Point::new(x.to_vec()), *m))).unwrap()
}

/// A random valid path together with its endpoint measures. Each of `routes`
/// parcels follows increasing indices through `points` random points in
/// `[-1, 1]^2`, so the graph is acyclic; parcel masses sum to one.
pub fn random_path(rng: &mut ChaCha8Rng, points: usize, routes: usize) -> (TransportPath, AtomicMeasure, AtomicMeasure) {
    let pts: Vec<Point> = (0..points)
        .map(|_| Point::new(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
        .collect();
    let raw: Vec<f64> = (0..routes).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut src = vec![0.0; points];
    let mut snk = vec![0.0; points];
    for m in raw.iter().map(|m| m / total) {
        let start = rng.random_range(0..points - 1);
        let end = rng.random_range(start + 1..points);
        let mut at = start;
        for next in start + 1..=end {
            if next == end || rng.random_bool(0.4) {
                *weights.entry((at, next)).or_default() += m;
                at = next;
            }
        }
        src[start] += m;
        snk[end] += m;
    }
    let mut b = PathBuilder::new();
    let ids: Vec<usize> = pts.iter().map(|p| b.vertex(p)).collect();
    for (&(u, v), &w) in &weights {
        b.edge(ids[u], ids[v], w);
    }
    let mut a_atoms = Vec::new();
    let mut b_atoms = Vec::new();
    for i in 0..points {
        if src[i] > 0.0 {
            b.source(ids[i], src[i]);
            a_atoms.push((pts[i].clone(), src[i]));
        }
        if snk[i] > 0.0 {
            b.sink(ids[i], snk[i]);
            b_atoms.push((pts[i].clone(), snk[i]));
        }
    }
    let path = b.build().unwrap();
    (path, AtomicMeasure::from_atoms(a_atoms).unwrap(), AtomicMeasure::from_atoms(b_atoms).unwrap())
}

/// Straight edges carrying every atom of `m` to `target`.
pub fn gather(m: &AtomicMeasure, target: &Point) -> TransportPath {
    let mut b = PathBuilder::new();
    let t = b.vertex(target);
    for atom in m.atoms() {
        let v = b.vertex(&atom.location);
        b.source(v, atom.mass);
        if v != t {
            b.edge(v, t, atom.mass);
        }
    }
    b.sink(t, m.total_mass());
    b.build().unwrap()
}
