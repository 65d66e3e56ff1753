//! Nested collections of cubes and the dimensions of measures living on them.

use serde::Serialize;
use thiserror::Error;

use crate::fractal_catalog::{cell_hierarchy, generate_all, CatalogError, CatalogGenerator};
use crate::measures::{AtomicMeasure, Point};

/// Gate on the least-squares residual of the Minkowski fit.
pub const FIT_RESIDUAL_TOL: f64 = 1e-6;
/// Slack in the sandwich inequalities.
pub const SANDWICH_TOL: f64 = 1e-6;
/// Bracket for the critical exponent.
pub const ALPHA_BRACKET: (f64, f64) = (-50.0, 1.0);
/// Largest generation size used when building sequences for estimates.
pub const ESTIMATE_ATOMS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("need at least 3 generations, got {0}")]
    TooFewGenerations(usize),
    #[error("generation counts are not geometric (fit residual {residual:e})")]
    NoLimit { residual: f64 },
    #[error("bad generation: {0}")]
    BadGeneration(String),
    #[error("invalid nested collection: {0}")]
    InvalidCollection(String),
    #[error("step ratio does not cross 1 on alpha in [{lo}, {hi}]")]
    NoConvergenceBracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub center: Point,
    pub diameter: f64,
    /// Index of the parent in the previous generation.
    pub parent: Option<usize>,
    /// Bounding box of the cube.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Generation-indexed cubes, generation 0 holding the root.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedCollection {
    sigma: f64,
    c1: f64,
    c2: f64,
    generations: Vec<Vec<Cube>>,
    /// Children of every cube, per generation.
    children: Vec<Vec<Vec<usize>>>,
}

/// `μ(Q)` for every cube, indexed like the collection.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeMasses(pub Vec<Vec<f64>>);

impl NestedCollection {
    /// Checks the diameter bounds `C1 σ^n <= diam <= C2 σ^n`, parent links,
    /// nesting of bounding boxes and the center estimate.
    pub fn new(sigma: f64, c1: f64, c2: f64, generations: Vec<Vec<Cube>>) -> Result<Self, DimensionError> {
        let invalid = |m: String| Err(DimensionError::InvalidCollection(m));
        if !(sigma > 0.0 && sigma < 1.0) || !(c1 > 0.0 && c2 >= c1) {
            return invalid(format!("need 0 < σ < 1 and 0 < C1 <= C2, got σ={sigma}, C1={c1}, C2={c2}"));
        }
        if generations.first().is_none_or(|g| g.is_empty()) {
            return invalid("generation 0 is empty".into());
        }
        let mut children = Vec::with_capacity(generations.len());
        for (n, gen) in generations.iter().enumerate() {
            let s = sigma.powi(n as i32);
            for (i, q) in gen.iter().enumerate() {
                if q.diameter < c1 * s * (1.0 - 1e-9) || q.diameter > c2 * s * (1.0 + 1e-9) {
                    return invalid(format!("cube {i} of generation {n} has diameter {}", q.diameter));
                }
            }
            let mut kids = vec![Vec::new(); gen.len()];
            if let Some(next) = generations.get(n + 1) {
                for (j, q) in next.iter().enumerate() {
                    match q.parent {
                        Some(p) if p < gen.len() => kids[p].push(j),
                        _ => return invalid(format!("cube {j} of generation {} has no valid parent", n + 1)),
                    }
                    let parent = &gen[q.parent.unwrap()];
                    let slack = 1e-12 * parent.diameter.max(1.0);
                    let inside = q
                        .lo
                        .iter()
                        .zip(&q.hi)
                        .zip(parent.lo.iter().zip(&parent.hi))
                        .all(|((lo, hi), (plo, phi))| *lo >= plo - slack && *hi <= phi + slack);
                    if !inside {
                        return invalid(format!("cube {j} of generation {} leaves its parent", n + 1));
                    }
                }
                if let Some(p) = kids.iter().position(|k| k.is_empty()) {
                    return invalid(format!("cube {p} of generation {n} has no child"));
                }
            }
            children.push(kids);
        }
        let f = NestedCollection {
            sigma,
            c1,
            c2,
            generations,
            children,
        };
        for n in 1..f.generations.len() {
            let bound = f.c2 * sigma.powi(n as i32 - 1) * (1.0 + 1e-9);
            for (i, l) in f.offsets(n).into_iter().enumerate() {
                let ok = if f.has_brothers(n, i) { l <= bound } else { l == 0.0 };
                if !ok {
                    return invalid(format!("center of cube {i} of generation {n} is {l} from its parent's"));
                }
            }
        }
        Ok(f)
    }

    /// The cells of a catalog generator, with only children sharing the
    /// center of their parent.
    pub fn from_generator(gen: &CatalogGenerator, n_max: usize) -> Result<(Self, CubeMasses), DimensionError> {
        let cells = cell_hierarchy(gen, n_max)?;
        let (sigma, c1, c2) = gen.collection_constants();
        let mut generations: Vec<Vec<Cube>> = cells
            .iter()
            .map(|g| {
                g.iter()
                    .map(|c| Cube {
                        center: c.center.clone(),
                        diameter: c.diameter,
                        parent: c.parent,
                        lo: c.lo.clone(),
                        hi: c.hi.clone(),
                    })
                    .collect()
            })
            .collect();
        let masses = CubeMasses(cells.iter().map(|g| g.iter().map(|c| c.mass).collect()).collect());
        for n in (1..generations.len()).rev() {
            let mut count = vec![0usize; generations[n - 1].len()];
            for q in &generations[n] {
                count[q.parent.expect("non-root cube")] += 1;
            }
            for j in 0..generations[n].len() {
                let p = generations[n][j].parent.expect("non-root cube");
                if count[p] == 1 {
                    generations[n - 1][p].center = generations[n][j].center.clone();
                }
            }
        }
        Ok((NestedCollection::new(sigma, c1, c2, generations)?, masses))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn constants(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn generations(&self) -> &[Vec<Cube>] {
        &self.generations
    }

    /// Deepest generation index.
    pub fn depth(&self) -> usize {
        self.generations.len() - 1
    }

    /// `N_n`, the number of cubes of generation `n`.
    pub fn count(&self, n: usize) -> usize {
        self.generations[n].len()
    }

    pub fn has_brothers(&self, n: usize, i: usize) -> bool {
        match self.generations[n][i].parent {
            Some(p) => self.children[n - 1][p].len() > 1,
            None => false,
        }
    }

    /// `l(Q)` for every cube of generation `n >= 1`: the distance from its
    /// center to its parent's.
    pub fn offsets(&self, n: usize) -> Vec<f64> {
        self.generations[n]
            .iter()
            .map(|q| {
                let p = &self.generations[n - 1][q.parent.expect("non-root cube")];
                q.center.distance(&p.center)
            })
            .collect()
    }
}

fn fit_generations(n_max: usize) -> std::ops::RangeInclusive<usize> {
    if n_max >= 4 {
        3..=n_max
    } else {
        1..=n_max
    }
}

/// Slope, intercept and largest absolute residual of a least-squares line.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, icept, resid)
}

/// Slope of `log N_n` against `n log(1/σ)`.
pub fn nested_minkowski_dim(f: &NestedCollection, n_max: usize) -> Result<f64, DimensionError> {
    let n_max = n_max.min(f.depth());
    if n_max < 3 {
        return Err(DimensionError::TooFewGenerations(n_max));
    }
    let gens: Vec<usize> = fit_generations(n_max).collect();
    let xs: Vec<f64> = gens.iter().map(|&n| n as f64 * (1.0 / f.sigma).ln()).collect();
    let ys: Vec<f64> = gens.iter().map(|&n| (f.count(n) as f64).ln()).collect();
    let (slope, _, residual) = least_squares(&xs, &ys);
    if residual > FIT_RESIDUAL_TOL {
        return Err(DimensionError::NoLimit { residual });
    }
    Ok(slope)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyLemmaReport {
    pub holds: bool,
    /// `Σ μ(Q)^α l(Q)` per generation `1..=n`.
    pub lhs: Vec<f64>,
    /// `C N_n^{1−α} σ^n` per generation.
    pub rhs: Vec<f64>,
    /// `rhs − lhs` per generation.
    pub margins: Vec<f64>,
    /// `b = σ^{1−β(1−α)}` when `β = dim_M(F) < 1/(1−α)`.
    pub decay_factor: Option<f64>,
}

/// Checks `Σ_i μ(Q_i^n)^α l(Q_i^n) <= C N_n^{1−α} σ^n` on every generation.
pub fn key_lemma_check(
    masses: &CubeMasses,
    f: &NestedCollection,
    alpha: f64,
    c: f64,
) -> Result<KeyLemmaReport, DimensionError> {
    if !(alpha < 1.0) {
        return Err(DimensionError::BadGeneration(format!("alpha {alpha} must be below 1")));
    }
    check_masses(masses, f)?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for n in 1..=f.depth() {
        let l: f64 = f
            .offsets(n)
            .iter()
            .zip(&masses.0[n])
            .filter(|(l, _)| **l > 0.0)
            .map(|(l, m)| m.powf(alpha) * l)
            .sum();
        lhs.push(l);
        rhs.push(c * (f.count(n) as f64).powf(1.0 - alpha) * f.sigma.powi(n as i32));
    }
    let holds = lhs.iter().zip(&rhs).all(|(l, r)| *l <= r * (1.0 + 1e-9));
    let margins = lhs.iter().zip(&rhs).map(|(l, r)| r - l).collect();
    let decay_factor = nested_minkowski_dim(f, f.depth())
        .ok()
        .filter(|beta| *beta < 1.0 / (1.0 - alpha))
        .map(|beta| f.sigma.powf(1.0 - beta * (1.0 - alpha)));
    Ok(KeyLemmaReport {
        holds,
        lhs,
        rhs,
        margins,
        decay_factor,
    })
}

fn check_masses(masses: &CubeMasses, f: &NestedCollection) -> Result<(), DimensionError> {
    if masses.0.len() != f.generations.len() {
        return Err(DimensionError::BadGeneration(format!(
            "{} mass generations for {} cube generations",
            masses.0.len(),
            f.generations.len()
        )));
    }
    for (n, (m, g)) in masses.0.iter().zip(&f.generations).enumerate() {
        if m.len() != g.len() {
            return Err(DimensionError::BadGeneration(format!("generation {n} has {} masses for {} cubes", m.len(), g.len())));
        }
        if m.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(DimensionError::BadGeneration(format!("generation {n} has an invalid mass")));
        }
        let total: f64 = m.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DimensionError::BadGeneration(format!("generation {n} carries mass {total}")));
        }
    }
    Ok(())
}

/// Largest `λ` with `μ(Q) >= λ / N_n` on every cube that has brothers, or
/// `None` when the per-generation minimum decays to zero.
pub fn evenly_concentrated(masses: &CubeMasses, f: &NestedCollection) -> Option<f64> {
    if check_masses(masses, f).is_err() {
        return None;
    }
    let mut minima = Vec::new();
    for n in 1..=f.depth() {
        let count = f.count(n) as f64;
        let m = (0..f.count(n))
            .filter(|&i| f.has_brothers(n, i))
            .map(|i| masses.0[n][i] * count)
            .fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            minima.push(m);
        }
    }
    let lambda = minima.iter().copied().fold(f64::INFINITY, f64::min);
    if !lambda.is_finite() {
        // no cube has brothers
        return Some(1.0);
    }
    if lambda < 1e-9 {
        return None;
    }
    if let [.., a, b, c] = minima[..] {
        let (r1, r2) = (b / a, c / b);
        if r1 < 1.0 - 1e-9 && r2 < 1.0 - 1e-9 && (r1 - r2).abs() <= 1e-9 * r1 {
            return None;
        }
    }
    Some(lambda)
}

/// Log step costs of a generated sequence as functions of `α`.
#[derive(Debug, Clone)]
pub struct TransportProfile {
    /// Per generation, `(ln w, ln length)` of each edge.
    edges: Vec<(usize, Vec<(f64, f64)>)>,
}

impl TransportProfile {
    pub fn from_generator(gen: &CatalogGenerator) -> Result<Self, DimensionError> {
        let depth = estimate_depth(gen);
        let steps = generate_all(gen, depth)?;
        let edges = steps
            .iter()
            .filter(|s| fit_generations(depth).contains(&s.n))
            .map(|s| {
                let e = s.edge_profile().into_iter().map(|(w, l)| (w.ln(), l.ln())).collect();
                (s.n, e)
            })
            .collect();
        Ok(TransportProfile { edges })
    }

    /// `ln Mα(G_n^{n−1})` per fitted generation.
    pub fn log_costs(&self, alpha: f64) -> Vec<(usize, f64)> {
        self.edges
            .iter()
            .map(|(n, e)| {
                let top = e.iter().map(|(lw, ll)| alpha * lw + ll).fold(f64::NEG_INFINITY, f64::max);
                let lse = if top.is_finite() {
                    top + e.iter().map(|(lw, ll)| (alpha * lw + ll - top).exp()).sum::<f64>().ln()
                } else {
                    top
                };
                (*n, lse)
            })
            .collect()
    }

    /// Fitted ratio of successive step costs.
    pub fn ratio(&self, alpha: f64) -> f64 {
        self.log_ratio(alpha).exp()
    }

    fn log_ratio(&self, alpha: f64) -> f64 {
        let pts = self.log_costs(alpha);
        if pts.iter().any(|(_, y)| !y.is_finite()) {
            return f64::NEG_INFINITY;
        }
        if pts.len() < 2 {
            return f64::NAN;
        }
        let xs: Vec<f64> = pts.iter().map(|(n, _)| *n as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
        least_squares(&xs, &ys).0
    }

    /// Bisection for the `α` where the fitted ratio crosses 1, returned as
    /// `1/(1−α)`.
    pub fn critical_dimension(&self) -> Result<f64, DimensionError> {
        let (mut lo, mut hi) = ALPHA_BRACKET;
        let (glo, ghi) = (self.log_ratio(lo), self.log_ratio(hi));
        if !(glo > 0.0 && ghi < 0.0) {
            return Err(DimensionError::NoConvergenceBracket { lo, hi });
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.log_ratio(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(1.0 / (1.0 - 0.5 * (lo + hi)))
    }
}

/// Smallest cell scale `σ^n` used for estimates. Below it, child offsets
/// lose too many digits against unit-scale coordinates.
pub const MIN_CELL_SCALE: f64 = 1e-6;

/// Deepest generation with at most [`ESTIMATE_ATOMS`] atoms and cells no
/// smaller than [`MIN_CELL_SCALE`], capped at 12 and at least 3.
pub fn estimate_depth(gen: &CatalogGenerator) -> usize {
    let sigma = gen.collection_constants().0;
    let per = match gen {
        CatalogGenerator::Dyadic(d) => 1usize << d.dim().min(12),
        _ => gen.branching().unwrap_or(2),
    };
    if per <= 1 {
        return 12;
    }
    let mut n = 1;
    while n < 12
        && per.checked_pow(n as u32 + 1).is_some_and(|c| c <= ESTIMATE_ATOMS)
        && sigma.powi(n as i32 + 1) >= MIN_CELL_SCALE
    {
        n += 1;
    }
    n.max(3)
}

/// `inf 1/(1−α)` over the `α` at which the generator's step costs decay.
pub fn transport_dim_estimate(gen: &CatalogGenerator) -> Result<f64, DimensionError> {
    TransportProfile::from_generator(gen)?.critical_dimension()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub family: String,
    pub dim_t_estimate: f64,
    pub dim_h_analytic: Option<f64>,
    pub dim_m_collection: f64,
    pub dim_u_bound: Option<f64>,
    pub evenly_concentrated_lambda: Option<f64>,
    pub sandwich_ok: bool,
    /// How the transport dimension was obtained.
    pub via: &'static str,
}

/// Transport dimension together with the bounds that sandwich it.
pub fn sandwich_check(gen: &CatalogGenerator) -> Result<DimensionReport, DimensionError> {
    let depth = estimate_depth(gen);
    let (f, masses) = NestedCollection::from_generator(gen, depth)?;
    let dim_m = nested_minkowski_dim(&f, depth)?;
    let lambda = evenly_concentrated(&masses, &f);
    let dim_u = lambda.map(|_| dim_m);
    let dim_t = transport_dim_estimate(gen)?;
    let dim_h = gen.analytic_dim_h();
    let upper = dim_m.max(1.0).min(dim_u.unwrap_or(f64::INFINITY));
    let sandwich_ok = dim_h.is_none_or(|h| h - SANDWICH_TOL <= dim_t) && dim_t <= upper + SANDWICH_TOL;
    Ok(DimensionReport {
        family: gen.name().to_string(),
        dim_t_estimate: dim_t,
        dim_h_analytic: dim_h,
        dim_m_collection: dim_m,
        dim_u_bound: dim_u,
        evenly_concentrated_lambda: lambda,
        sandwich_ok,
        via: "generator",
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureArg {
    Generator(CatalogGenerator),
    Atomic(AtomicMeasure),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceReport {
    pub value: f64,
    /// `false` when `value` is only an upper bound.
    pub exact: bool,
}

/// Dimensional distance. Exact against atomic measures and between equal
/// generators; otherwise the upper bound `max(dim_T μ, dim_T ν)`.
pub fn dimensional_distance(x: &MeasureArg, y: &MeasureArg) -> Result<DistanceReport, DimensionError> {
    let report = match (x, y) {
        (MeasureArg::Atomic(_), MeasureArg::Atomic(_)) => DistanceReport {
            value: 0.0,
            exact: true,
        },
        (MeasureArg::Generator(g), MeasureArg::Atomic(_)) | (MeasureArg::Atomic(_), MeasureArg::Generator(g)) => {
            DistanceReport {
                value: transport_dim_estimate(g)?,
                exact: true,
            }
        }
        (MeasureArg::Generator(g), MeasureArg::Generator(h)) if g == h => DistanceReport {
            value: 0.0,
            exact: true,
        },
        (MeasureArg::Generator(g), MeasureArg::Generator(h)) => DistanceReport {
            value: transport_dim_estimate(g)?.max(transport_dim_estimate(h)?),
            exact: false,
        },
    };
    Ok(report)
}
