//! Lower bounds on path costs and on `dα`.

use thiserror::Error;

use crate::measures::{AtomicMeasure, Point};
use crate::transport_graph::TransportPath;

/// Tolerance on `||a|| = 1` for the tail bound.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("measure has total mass {0}, expected a probability measure")]
    NotProbability(f64),
}

/// `Λ^α · r0`: lower bound on the cost of a path inside `B̄(p, r0)` whose
/// weights are at most `Λ` and which meets almost every sphere `S(p, r)`,
/// `r <= r0`.
pub fn projection_lower_bound(lambda: f64, r0: f64, alpha: f64) -> Result<f64, BoundsError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BoundsError::BadParameters(format!("weight bound {lambda} must be positive")));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(BoundsError::BadParameters(format!("radius {r0} must be positive")));
    }
    if !(alpha < 0.0) {
        return Err(BoundsError::BadParameters(format!("alpha {alpha} must be negative")));
    }
    Ok(lambda.powf(alpha) * r0)
}

/// `||a||^α · max_i |p − x_i|`, a lower bound for `Mα` of any path from `a`
/// to `||a|| δ_p` when `α <= 0`.
pub fn negative_alpha_dalpha_bound(a: &AtomicMeasure, p: &Point, alpha: f64) -> Result<f64, BoundsError> {
    if !(alpha <= 0.0) {
        return Err(BoundsError::BadParameters(format!("alpha {alpha} must be at most 0")));
    }
    check_dim(a, p)?;
    Ok(a.total_mass().powf(alpha) * a.max_distance_from(p))
}

/// Supremum over `r0` of `(mass strictly farther than r0)^α · r0`, a lower
/// bound on `dα(a, δ_p)` for a probability measure `a` and `0 <= α < 1`.
///
/// The supremum is approached just below each breakpoint `r0 = |p − x_i|`,
/// where the strict tail still contains the atom at distance `|p − x_i|`.
pub fn positive_alpha_tail_bound(a: &AtomicMeasure, p: &Point, alpha: f64) -> Result<f64, BoundsError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(BoundsError::BadParameters(format!("alpha {alpha} must lie in [0, 1)")));
    }
    if (a.total_mass() - 1.0).abs() > PROBABILITY_TOL {
        return Err(BoundsError::NotProbability(a.total_mass()));
    }
    check_dim(a, p)?;
    let mut by_dist: Vec<(f64, f64)> = a
        .atoms()
        .iter()
        .map(|at| (at.location.distance(p), at.mass))
        .filter(|&(d, _)| d > 0.0)
        .collect();
    by_dist.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut tail = 0.0;
    let mut best: f64 = 0.0;
    for (d, m) in by_dist {
        tail += m;
        best = best.max(tail.powf(alpha) * d);
    }
    Ok(best)
}

/// Lower bound on `dα(a, b)` from the flux through small spheres around a
/// point where `a` and `b` disagree.
///
/// Around such a point `p`, every sphere of radius below the distance `r0(p)`
/// to the next mismatched point is crossed by edges carrying at least
/// `|a(p) − b(p)|` in total. This gives `r0(p) · |a(p) − b(p)|^α` for
/// `α ∈ [0, 1)` and `r0(p) · ||a||^α` for `α < 0`.
pub fn separation_lower_bound(a: &AtomicMeasure, b: &AtomicMeasure, alpha: f64) -> Result<f64, BoundsError> {
    if !(alpha < 1.0) {
        return Err(BoundsError::BadParameters(format!("alpha {alpha} must be below 1")));
    }
    if a.ambient_dim() != b.ambient_dim() {
        return Err(BoundsError::BadParameters("measures live in different dimensions".into()));
    }
    let tol = 1e-12 * a.total_mass().max(b.total_mass());
    let net: Vec<(Point, f64)> = a
        .signed_difference(b)
        .into_iter()
        .filter(|(_, m)| m.abs() > tol)
        .collect();
    if net.len() < 2 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for (i, (p, m)) in net.iter().enumerate() {
        let r0 = net
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, (q, _))| p.distance(q))
            .fold(f64::INFINITY, f64::min);
        let factor = if alpha < 0.0 {
            a.total_mass().powf(alpha)
        } else {
            m.abs().powf(alpha)
        };
        best = best.max(r0 * factor);
    }
    Ok(best)
}

/// Samples `samples` radii evenly in `(0, r0]` and checks that the path meets
/// each sphere `S(p, r)`.
pub fn sphere_coverage(path: &TransportPath, p: &Point, r0: f64, samples: usize) -> bool {
    let spans: Vec<(f64, f64)> = path
        .edges()
        .iter()
        .map(|e| {
            let a = path.vertices()[e.from].location.coords();
            let b = path.vertices()[e.to].location.coords();
            let far = path.vertices()[e.from]
                .location
                .distance(p)
                .max(path.vertices()[e.to].location.distance(p));
            (segment_point_distance(a, b, p.coords()), far)
        })
        .collect();
    (1..=samples).all(|i| {
        let r = r0 * (i as f64 / samples as f64);
        let slack = 1e-12 * r;
        spans.iter().any(|&(near, far)| near <= r + slack && r <= far + slack)
    })
}

pub(crate) fn segment_point_distance(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    let (mut dd, mut pd) = (0.0, 0.0);
    for i in 0..a.len() {
        let d = b[i] - a[i];
        dd += d * d;
        pd += (p[i] - a[i]) * d;
    }
    let t = if dd > 0.0 { (pd / dd).clamp(0.0, 1.0) } else { 0.0 };
    a.iter()
        .zip(b)
        .zip(p)
        .map(|((x, y), z)| {
            let q = x + t * (y - x);
            (q - z) * (q - z)
        })
        .sum::<f64>()
        .sqrt()
}

fn check_dim(a: &AtomicMeasure, p: &Point) -> Result<(), BoundsError> {
    if a.ambient_dim() != p.dim() {
        return Err(BoundsError::BadParameters(format!(
            "point has dimension {}, measure has {}",
            p.dim(),
            a.ambient_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport_graph::PathBuilder;
    use proptest::prelude::*;

    fn line(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_atoms(atoms.iter().map(|&(x, m)| (Point::new(vec![x]), m))).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(projection_lower_bound(1.0, 2.0, -1.0).unwrap(), 2.0);
        assert_eq!(projection_lower_bound(0.5, 1.0, -1.0).unwrap(), 2.0);
        assert!(projection_lower_bound(0.0, 1.0, -1.0).is_err());
        assert!(projection_lower_bound(1.0, -1.0, -1.0).is_err());
        assert!(projection_lower_bound(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn negative_examples() {
        let a = line(&[(0.0, 0.5), (2.0, 0.5)]);
        let p = Point::new(vec![0.0]);
        assert_eq!(negative_alpha_dalpha_bound(&a, &p, -1.0).unwrap(), 2.0);
        assert_eq!(negative_alpha_dalpha_bound(&line(&[(0.0, 1.0)]), &p, -1.0).unwrap(), 0.0);
        assert!(negative_alpha_dalpha_bound(&a, &p, 0.5).is_err());
    }

    #[test]
    fn tail_examples() {
        let a = line(&[(0.0, 0.5), (2.0, 0.5)]);
        let p = Point::new(vec![0.0]);
        let v = positive_alpha_tail_bound(&a, &p, 0.5).unwrap();
        assert!((v - 0.5f64.sqrt() * 2.0).abs() < 1e-12);
        assert_eq!(positive_alpha_tail_bound(&line(&[(0.0, 1.0)]), &p, 0.5).unwrap(), 0.0);
        assert_eq!(positive_alpha_tail_bound(&a, &p, 0.0).unwrap(), 2.0);
        assert_eq!(
            positive_alpha_tail_bound(&line(&[(1.0, 0.5)]), &p, 0.5),
            Err(BoundsError::NotProbability(0.5))
        );
    }

    #[test]
    fn separation_examples() {
        let a = line(&[(0.0, 1.0)]);
        let b = line(&[(0.0, 0.8), (1.0, 0.2)]);
        let v = separation_lower_bound(&a, &b, 0.5).unwrap();
        assert!((v - 0.2f64.sqrt()).abs() < 1e-12);
        assert_eq!(separation_lower_bound(&a, &b, -1.0).unwrap(), 1.0);
        assert_eq!(separation_lower_bound(&a, &a, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn coverage_of_a_radial_edge() {
        let mut b = PathBuilder::new();
        let u = b.vertex(&Point::new(vec![0.0, 0.0]));
        let v = b.vertex(&Point::new(vec![2.0, 0.0]));
        b.edge(u, v, 1.0);
        let g = b.build().unwrap();
        let c = Point::origin(2);
        assert!(sphere_coverage(&g, &c, 2.0, 1000));
        assert!(!sphere_coverage(&g, &c, 3.0, 1000));
        assert!(!sphere_coverage(&g, &Point::new(vec![1.0, 1.5]), 1.0, 1000));
    }

    proptest! {
        #[test]
        fn projection_is_monotone(l in 0.01f64..10.0, r in 0.01f64..10.0, dr in 0.0f64..5.0,
                                  dl in 0.0f64..5.0, alpha in -3.0f64..-0.01) {
            let base = projection_lower_bound(l, r, alpha).unwrap();
            prop_assert!(projection_lower_bound(l, r + dr, alpha).unwrap() >= base);
            prop_assert!(projection_lower_bound(l + dl, r, alpha).unwrap() <= base);
        }

        #[test]
        fn tail_at_zero_is_max_radius(xs in prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..6)) {
            let a = line(&xs).normalize();
            let p = Point::new(vec![0.0]);
            let v = positive_alpha_tail_bound(&a, &p, 0.0).unwrap();
            prop_assert_eq!(v, a.max_distance_from(&p));
        }
    }
}
