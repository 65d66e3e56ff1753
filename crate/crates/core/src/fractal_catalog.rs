//! Fractal measures approximated by atomic sequences.
//!
//! Each generator builds a hierarchy of cells. Generation `n` puts the mass
//! of every cell at its center, giving `a_n`, and the step path `G_n^{n-1}`
//! moves each parent's mass straight to the centers of its children.

use std::fmt;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::measures::{canonical_bits, AtomicMeasure, MeasureError, Point};
use crate::transport_graph::{cost_malpha, PathBuilder, PathError, TransportPath};

/// Largest number of atoms a single generation may have.
pub const MAX_ATOMS: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Path(#[from] PathError),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CatalogError> {
    Err(CatalogError::BadParameters(msg.into()))
}

/// `μ(Q)` for an axis-parallel box `[lo, hi)`.
pub type BoxMeasure = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DyadicMeasure {
    /// Lebesgue measure normalized on the box.
    Uniform,
    /// A probability measure supported in the box.
    Empirical(AtomicMeasure),
    Callback(BoxMeasure),
}

impl fmt::Debug for DyadicMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DyadicMeasure::Uniform => f.write_str("Uniform"),
            DyadicMeasure::Empirical(m) => f.debug_tuple("Empirical").field(m).finish(),
            DyadicMeasure::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

impl PartialEq for DyadicMeasure {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (DyadicMeasure::Uniform, DyadicMeasure::Uniform) => true,
            (DyadicMeasure::Empirical(a), DyadicMeasure::Empirical(b)) => a == b,
            (DyadicMeasure::Callback(a), DyadicMeasure::Callback(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestedBoxMode {
    /// The lexicographically first `h` sub-boxes of every box.
    Determinate,
    /// `h` sub-boxes drawn independently for every box.
    Random(u64),
}

/// `k` homotheties `x ↦ σ (x − f_i) + f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilar {
    pub sigma: f64,
    pub fixed_points: Vec<Point>,
    /// The point `x*` whose images are the atoms.
    pub center: Point,
}

impl SelfSimilar {
    /// Fixed points `0, 1` on the line for `k = 2`, otherwise the vertices
    /// of a regular `k`-gon with unit side in the plane. The center is the
    /// first fixed point.
    pub fn regular(k: usize, sigma: f64) -> Result<Self, CatalogError> {
        if k < 2 {
            return bad(format!("need at least two maps, got {k}"));
        }
        let fixed_points: Vec<Point> = if k == 2 {
            vec![Point::new(vec![0.0]), Point::new(vec![1.0])]
        } else {
            let radius = 0.5 / (std::f64::consts::PI / k as f64).sin();
            (0..k)
                .map(|i| {
                    let t = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                    Point::new(vec![radius * t.cos(), radius * t.sin()])
                })
                .collect()
        };
        let s = SelfSimilar {
            sigma,
            center: fixed_points[0].clone(),
            fixed_points,
        };
        s.check()?;
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.fixed_points.len()
    }

    /// Diameter of the attractor: the largest distance between fixed points.
    pub fn diameter(&self) -> f64 {
        let f = &self.fixed_points;
        let mut d: f64 = 0.0;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                d = d.max(f[i].distance(&f[j]));
            }
        }
        d
    }

    fn check(&self) -> Result<(), CatalogError> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("ratio {} must lie in (0, 1)", self.sigma));
        }
        if self.fixed_points.len() < 2 {
            return bad("need at least two maps");
        }
        let dim = self.center.dim();
        if self.fixed_points.iter().any(|p| p.dim() != dim || !p.is_finite()) || !self.center.is_finite() {
            return bad("fixed points and center must share one finite dimension");
        }
        let l = self.diameter();
        if l == 0.0 {
            return bad("fixed points must not all coincide");
        }
        if self.fixed_points.iter().any(|f| f.distance(&self.center) > l * (1.0 + 1e-12)) {
            return bad("center must lie within the attractor's diameter of every fixed point");
        }
        Ok(())
    }

    /// Open set condition by a sufficient test: balls around the images of
    /// the centroid that cover the attractor are pairwise disjoint. Regular
    /// configurations with `k <= 4` and `σ <= 1/2` are known to satisfy it.
    fn separated(&self) -> bool {
        let k = self.k();
        let dim = self.center.dim();
        if self.sigma <= 0.5 && ((k == 2 && dim == 1) || (k <= 4 && self.is_regular_polygon())) {
            return true;
        }
        let g: Vec<f64> = (0..dim)
            .map(|c| self.fixed_points.iter().map(|p| p.coords()[c]).sum::<f64>() / k as f64)
            .collect();
        let g = Point::new(g);
        let r = self.fixed_points.iter().map(|p| p.distance(&g)).fold(0.0, f64::max);
        for i in 0..k {
            for j in i + 1..k {
                let sep = (1.0 - self.sigma) * self.fixed_points[i].distance(&self.fixed_points[j]);
                if sep < 2.0 * self.sigma * r {
                    return false;
                }
            }
        }
        true
    }

    fn is_regular_polygon(&self) -> bool {
        match SelfSimilar::regular_points(self.k()) {
            Some(p) => p == self.fixed_points,
            None => false,
        }
    }

    fn regular_points(k: usize) -> Option<Vec<Point>> {
        if k < 3 {
            return None;
        }
        SelfSimilar::regular(k, 0.5).ok().map(|s| s.fixed_points)
    }
}

/// Measure on dyadic cubes of the box `origin + [0, side]^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dyadic {
    pub measure: DyadicMeasure,
    pub origin: Point,
    pub side: f64,
}

impl Dyadic {
    pub fn uniform(m: usize) -> Self {
        Dyadic {
            measure: DyadicMeasure::Uniform,
            origin: Point::origin(m),
            side: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.dim()
    }
}

/// Unit box in `R^m` split into `k^m` boxes, `h` of which are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedBox {
    pub k: usize,
    pub m: usize,
    pub h: usize,
    pub mode: NestedBoxMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogGenerator {
    Cantor,
    FatCantor { lambda: f64 },
    SelfSimilar(SelfSimilar),
    Dyadic(Dyadic),
    NestedBox(NestedBox),
}

impl CatalogGenerator {
    pub fn fat_cantor(lambda: f64) -> Result<Self, CatalogError> {
        let g = CatalogGenerator::FatCantor { lambda };
        g.check()?;
        Ok(g)
    }

    pub fn self_similar(k: usize, sigma: f64) -> Result<Self, CatalogError> {
        Ok(CatalogGenerator::SelfSimilar(SelfSimilar::regular(k, sigma)?))
    }

    pub fn nested_box(k: usize, m: usize, h: usize, mode: NestedBoxMode) -> Result<Self, CatalogError> {
        let g = CatalogGenerator::NestedBox(NestedBox { k, m, h, mode });
        g.check()?;
        Ok(g)
    }

    pub fn dyadic(d: Dyadic) -> Result<Self, CatalogError> {
        let g = CatalogGenerator::Dyadic(d);
        g.check()?;
        Ok(g)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CatalogGenerator::Cantor => "cantor",
            CatalogGenerator::FatCantor { .. } => "fat_cantor",
            CatalogGenerator::SelfSimilar(_) => "self_similar",
            CatalogGenerator::Dyadic(_) => "dyadic",
            CatalogGenerator::NestedBox(_) => "nested_box",
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            CatalogGenerator::Cantor | CatalogGenerator::FatCantor { .. } => 1,
            CatalogGenerator::SelfSimilar(s) => s.center.dim(),
            CatalogGenerator::Dyadic(d) => d.dim(),
            CatalogGenerator::NestedBox(b) => b.m,
        }
    }

    /// Children per cell, when constant.
    pub fn branching(&self) -> Option<usize> {
        match self {
            CatalogGenerator::Cantor | CatalogGenerator::FatCantor { .. } => Some(2),
            CatalogGenerator::SelfSimilar(s) => Some(s.k()),
            CatalogGenerator::Dyadic(d) => match d.measure {
                DyadicMeasure::Uniform => 1usize.checked_shl(d.dim() as u32),
                _ => None,
            },
            CatalogGenerator::NestedBox(b) => Some(b.h),
        }
    }

    pub fn check(&self) -> Result<(), CatalogError> {
        match self {
            CatalogGenerator::Cantor => Ok(()),
            CatalogGenerator::FatCantor { lambda } => {
                if *lambda > 0.0 && *lambda < 1.0 {
                    Ok(())
                } else {
                    bad(format!("lambda {lambda} must lie in (0, 1)"))
                }
            }
            CatalogGenerator::SelfSimilar(s) => s.check(),
            CatalogGenerator::Dyadic(d) => {
                if d.dim() == 0 || !d.origin.is_finite() {
                    return bad("dyadic box needs a finite origin in R^m, m >= 1");
                }
                if !(d.side > 0.0 && d.side.is_finite()) {
                    return bad(format!("side {} must be positive", d.side));
                }
                let hi: Vec<f64> = d.origin.coords().iter().map(|x| x + d.side).collect();
                match &d.measure {
                    DyadicMeasure::Uniform => Ok(()),
                    DyadicMeasure::Empirical(mu) => {
                        if mu.ambient_dim() != d.dim() {
                            return bad("sample measure has the wrong dimension");
                        }
                        if !mu.is_probability(1e-12) {
                            return bad("sample measure must be a probability measure");
                        }
                        let outside = mu.support().any(|p| {
                            p.coords()
                                .iter()
                                .zip(d.origin.coords())
                                .zip(&hi)
                                .any(|((x, lo), hi)| x < lo || x > hi)
                        });
                        if outside {
                            return bad("sample measure leaves the box");
                        }
                        Ok(())
                    }
                    DyadicMeasure::Callback(f) => {
                        let total = f(d.origin.coords(), &hi);
                        if (total - 1.0).abs() > 1e-9 {
                            return bad(format!("callback gives the box mass {total}, expected 1"));
                        }
                        Ok(())
                    }
                }
            }
            CatalogGenerator::NestedBox(b) => {
                if b.k < 2 || b.m == 0 {
                    return bad("nested box needs k >= 2 and m >= 1");
                }
                let cells = (b.k as u64).checked_pow(b.m as u32);
                match cells {
                    Some(c) if b.h >= 1 && (b.h as u64) <= c && c <= u32::MAX as u64 => Ok(()),
                    _ => bad(format!("h = {} must lie in 1..=k^m", b.h)),
                }
            }
        }
    }

    /// The critical value of `1/(1−α)` above which the generated sequence
    /// has geometrically decaying step costs, when known.
    pub fn dim_threshold(&self) -> Option<f64> {
        match self {
            CatalogGenerator::Cantor => Some(2f64.ln() / 3f64.ln()),
            CatalogGenerator::FatCantor { lambda } => Some(2f64.ln() / (2f64.ln() - (1.0 - lambda).ln())),
            CatalogGenerator::SelfSimilar(s) => Some(-(s.k() as f64).ln() / s.sigma.ln()),
            CatalogGenerator::Dyadic(d) => match d.measure {
                DyadicMeasure::Uniform => Some(d.dim() as f64),
                _ => None,
            },
            CatalogGenerator::NestedBox(b) => Some((b.h as f64).ln() / (b.k as f64).ln()),
        }
    }

    /// Hausdorff dimension of the limit measure, when known in closed form.
    pub fn analytic_dim_h(&self) -> Option<f64> {
        match self {
            CatalogGenerator::SelfSimilar(s) => s.separated().then(|| -(s.k() as f64).ln() / s.sigma.ln()),
            CatalogGenerator::Dyadic(d) => match d.measure {
                DyadicMeasure::Uniform => Some(d.dim() as f64),
                DyadicMeasure::Empirical(_) => Some(0.0),
                DyadicMeasure::Callback(_) => None,
            },
            _ => self.dim_threshold(),
        }
    }

    /// Contraction ratio `σ` and constants with `C1 σ^n <= diam <= C2 σ^n`.
    pub fn collection_constants(&self) -> (f64, f64, f64) {
        match self {
            CatalogGenerator::Cantor => (1.0 / 3.0, 1.0, 1.0),
            CatalogGenerator::FatCantor { lambda } => ((1.0 - lambda) / 2.0, 1.0, 1.0),
            CatalogGenerator::SelfSimilar(s) => (s.sigma, s.diameter(), s.diameter()),
            CatalogGenerator::Dyadic(d) => {
                let c = (d.dim() as f64).sqrt() * d.side;
                (0.5, c, c)
            }
            CatalogGenerator::NestedBox(b) => {
                let c = (b.m as f64).sqrt();
                (1.0 / b.k as f64, c, c)
            }
        }
    }

    fn atom_count_bound(&self, n: usize) -> Option<usize> {
        let per = match self {
            CatalogGenerator::Dyadic(d) => 1usize.checked_shl(d.dim() as u32)?,
            _ => self.branching()?,
        };
        per.checked_pow(n as u32)
    }
}

/// A cell of the hierarchy behind a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub center: Point,
    /// Lower corner of the bounding box of the cell.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub diameter: f64,
    /// Index of the parent in the previous generation.
    pub parent: Option<usize>,
    pub mass: f64,
}

/// Generation `n` of a sequence and the step that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStep {
    pub n: usize,
    pub previous: AtomicMeasure,
    pub measure: AtomicMeasure,
    /// Transport path from `previous` to `measure`.
    pub step_path: TransportPath,
    /// For every atom of `previous`, the indices of its children in `measure`.
    pub partition: Vec<Vec<usize>>,
}

impl SequenceStep {
    /// `(weight, length)` of every edge of positive length.
    pub fn edge_profile(&self) -> Vec<(f64, f64)> {
        self.step_path
            .edges()
            .iter()
            .map(|e| (e.weight, self.step_path.edge_length(e)))
            .filter(|&(_, l)| l > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub computed: f64,
    /// Exact value for Cantor, fat Cantor, uniform dyadic and determinate
    /// nested boxes; an upper envelope for self-similar families; the
    /// expectation for random nested boxes.
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    center: Vec<f64>,
    mass: f64,
    /// Translation of the composed map, self-similar families only.
    shift: Vec<f64>,
    /// Sample atoms inside the cell, empirical dyadic only.
    atoms: Vec<usize>,
}

/// Cells of generations `0..=n`.
pub fn cell_hierarchy(gen: &CatalogGenerator, n: usize) -> Result<Vec<Vec<Cell>>, CatalogError> {
    gen.check()?;
    match gen {
        // sampled measures only keep cells of positive mass
        CatalogGenerator::Dyadic(d) if d.measure != DyadicMeasure::Uniform => {
            if n > 60 {
                return bad(format!("generation {n} is too deep"));
            }
        }
        _ => match gen.atom_count_bound(n) {
            Some(bound) if bound <= MAX_ATOMS => {}
            _ => return bad(format!("generation {n} would exceed {MAX_ATOMS} atoms")),
        },
    }
    let (sigma, _, c2) = gen.collection_constants();
    let mut rng = match gen {
        CatalogGenerator::NestedBox(NestedBox {
            mode: NestedBoxMode::Random(seed),
            ..
        }) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut level = vec![root(gen)];
    let mut out = vec![to_cells(&level, None, c2)];
    for depth in 1..=n {
        let mut next = Vec::new();
        let mut parents = Vec::new();
        for (pi, node) in level.iter().enumerate() {
            for child in children(gen, node, depth, rng.as_mut()) {
                if child.mass > 0.0 {
                    next.push(child);
                    parents.push(pi);
                }
            }
        }
        if next.len() > MAX_ATOMS {
            return bad(format!("generation {depth} exceeds {MAX_ATOMS} atoms"));
        }
        let diam = c2 * sigma.powi(depth as i32);
        out.push(to_cells(&next, Some(&parents), diam));
        level = next;
    }
    Ok(out)
}

fn to_cells(nodes: &[Node], parents: Option<&[usize]>, diameter: f64) -> Vec<Cell> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, nd)| Cell {
            center: Point::new(nd.center.clone()),
            lo: nd.lo.clone(),
            hi: nd.hi.clone(),
            diameter,
            parent: parents.map(|p| p[i]),
            mass: nd.mass,
        })
        .collect()
}

fn root(gen: &CatalogGenerator) -> Node {
    let node = |lo: Vec<f64>, hi: Vec<f64>| {
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        Node {
            lo,
            hi,
            center,
            mass: 1.0,
            shift: Vec::new(),
            atoms: Vec::new(),
        }
    };
    match gen {
        CatalogGenerator::Cantor | CatalogGenerator::FatCantor { .. } => node(vec![0.0], vec![1.0]),
        CatalogGenerator::SelfSimilar(s) => {
            let dim = s.center.dim();
            let lo = (0..dim)
                .map(|c| s.fixed_points.iter().map(|p| p.coords()[c]).fold(f64::INFINITY, f64::min))
                .collect();
            let hi = (0..dim)
                .map(|c| s.fixed_points.iter().map(|p| p.coords()[c]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            Node {
                lo,
                hi,
                center: s.center.coords().to_vec(),
                mass: 1.0,
                shift: vec![0.0; dim],
                atoms: Vec::new(),
            }
        }
        CatalogGenerator::Dyadic(d) => {
            let lo = d.origin.coords().to_vec();
            let hi = lo.iter().map(|x| x + d.side).collect();
            let mut nd = node(lo, hi);
            if let DyadicMeasure::Empirical(mu) = &d.measure {
                nd.atoms = (0..mu.len()).collect();
            }
            nd
        }
        CatalogGenerator::NestedBox(b) => node(vec![0.0; b.m], vec![1.0; b.m]),
    }
}

fn children(gen: &CatalogGenerator, p: &Node, depth: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Node> {
    let simple = |lo: Vec<f64>, hi: Vec<f64>, mass: f64| {
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        Node {
            lo,
            hi,
            center,
            mass,
            shift: Vec::new(),
            atoms: Vec::new(),
        }
    };
    match gen {
        CatalogGenerator::Cantor | CatalogGenerator::FatCantor { .. } => {
            let ratio = match gen {
                CatalogGenerator::FatCantor { lambda } => (1.0 - lambda) / 2.0,
                _ => 1.0 / 3.0,
            };
            let (lo, hi) = (p.lo[0], p.hi[0]);
            let len = ratio * (hi - lo);
            vec![
                simple(vec![lo], vec![lo + len], p.mass / 2.0),
                simple(vec![hi - len], vec![hi], p.mass / 2.0),
            ]
        }
        CatalogGenerator::SelfSimilar(s) => {
            let scale = s.sigma.powi(depth as i32 - 1);
            let root = root(gen);
            let k = s.k();
            s.fixed_points
                .iter()
                .map(|f| {
                    let shift: Vec<f64> = p
                        .shift
                        .iter()
                        .zip(f.coords())
                        .map(|(t, fc)| t + scale * (1.0 - s.sigma) * fc)
                        .collect();
                    let child_scale = scale * s.sigma;
                    let at = |x: &[f64]| -> Vec<f64> { x.iter().zip(&shift).map(|(x, t)| child_scale * x + t).collect() };
                    Node {
                        lo: at(&root.lo),
                        hi: at(&root.hi),
                        center: at(s.center.coords()),
                        mass: p.mass / k as f64,
                        shift: shift.clone(),
                        atoms: Vec::new(),
                    }
                })
                .collect()
        }
        CatalogGenerator::Dyadic(d) => {
            let m = d.dim();
            let outer_hi: Vec<f64> = d.origin.coords().iter().map(|x| x + d.side).collect();
            (0..1usize << m)
                .map(|bits| {
                    let mut lo = p.lo.clone();
                    let mut hi = p.hi.clone();
                    for c in 0..m {
                        let mid = 0.5 * (p.lo[c] + p.hi[c]);
                        if bits & (1 << (m - 1 - c)) != 0 {
                            lo[c] = mid;
                        } else {
                            hi[c] = mid;
                        }
                    }
                    let (mass, atoms) = match &d.measure {
                        DyadicMeasure::Uniform => (p.mass / (1usize << m) as f64, Vec::new()),
                        DyadicMeasure::Callback(f) => (f(&lo, &hi).max(0.0), Vec::new()),
                        DyadicMeasure::Empirical(mu) => {
                            let inside: Vec<usize> = p
                                .atoms
                                .iter()
                                .copied()
                                .filter(|&i| {
                                    let x = mu.atoms()[i].location.coords();
                                    (0..m).all(|c| {
                                        x[c] >= lo[c] && (x[c] < hi[c] || (x[c] == hi[c] && hi[c] == outer_hi[c]))
                                    })
                                })
                                .collect();
                            (inside.iter().map(|&i| mu.atoms()[i].mass).sum(), inside)
                        }
                    };
                    let mut nd = simple(lo, hi, mass);
                    nd.atoms = atoms;
                    nd
                })
                .collect()
        }
        CatalogGenerator::NestedBox(b) => {
            let total = b.k.pow(b.m as u32);
            let chosen: Vec<usize> = match (b.mode, rng) {
                (NestedBoxMode::Random(_), Some(rng)) => {
                    let mut v = sample(rng, total, b.h).into_vec();
                    v.sort_unstable();
                    v
                }
                _ => (0..b.h).collect(),
            };
            let side = (p.hi[0] - p.lo[0]) / b.k as f64;
            chosen
                .into_iter()
                .map(|idx| {
                    let digits = box_digits(idx, b.k, b.m);
                    let lo: Vec<f64> = digits.iter().zip(&p.lo).map(|(&j, l)| l + j as f64 * side).collect();
                    let hi: Vec<f64> = lo.iter().map(|l| l + side).collect();
                    simple(lo, hi, p.mass / b.h as f64)
                })
                .collect()
        }
    }
}

/// Base-`k` digits of `idx`, most significant first, as a sub-box position.
fn box_digits(mut idx: usize, k: usize, m: usize) -> Vec<usize> {
    let mut d = vec![0; m];
    for c in (0..m).rev() {
        d[c] = idx % k;
        idx /= k;
    }
    d
}

/// Steps `1..=n` of the sequence.
pub fn generate_all(gen: &CatalogGenerator, n: usize) -> Result<Vec<SequenceStep>, CatalogError> {
    if n == 0 {
        return bad("generation must be at least 1");
    }
    let cells = cell_hierarchy(gen, n)?;
    let measures: Vec<AtomicMeasure> = cells.iter().map(|g| measure_of(g)).collect::<Result<_, _>>()?;
    (1..=n)
        .map(|k| step_from(k, &cells[k - 1], &cells[k], &measures[k - 1], &measures[k]))
        .collect()
}

/// Step `n` of the sequence.
pub fn generate(gen: &CatalogGenerator, n: usize) -> Result<SequenceStep, CatalogError> {
    if n == 0 {
        return bad("generation must be at least 1");
    }
    let cells = cell_hierarchy(gen, n)?;
    let prev = measure_of(&cells[n - 1])?;
    let cur = measure_of(&cells[n])?;
    step_from(n, &cells[n - 1], &cells[n], &prev, &cur)
}

fn measure_of(cells: &[Cell]) -> Result<AtomicMeasure, CatalogError> {
    let m = AtomicMeasure::from_atoms(cells.iter().map(|c| (c.center.clone(), c.mass)))?;
    if m.len() != cells.len() {
        return bad("atoms of one generation coincide; overlapping maps are not supported");
    }
    Ok(m)
}

fn step_from(
    n: usize,
    parents: &[Cell],
    kids: &[Cell],
    prev: &AtomicMeasure,
    cur: &AtomicMeasure,
) -> Result<SequenceStep, CatalogError> {
    let mut builder = PathBuilder::new();
    let mut partition = vec![Vec::new(); prev.len()];
    let parent_vertex: Vec<usize> = parents
        .iter()
        .map(|c| {
            let v = builder.vertex(&c.center);
            builder.source(v, c.mass);
            v
        })
        .collect();
    for child in kids {
        let p = child.parent.expect("cells below the root have parents");
        let pv = parent_vertex[p];
        let same = child
            .center
            .coords()
            .iter()
            .zip(parents[p].center.coords())
            .all(|(a, b)| canonical_bits(*a) == canonical_bits(*b));
        let cv = if same { pv } else { builder.vertex(&child.center) };
        if cv != pv {
            builder.edge(pv, cv, child.mass);
        }
        builder.sink(cv, child.mass);
        let pi = prev.index_of(&parents[p].center).expect("parent is an atom");
        let ci = cur.index_of(&child.center).expect("child is an atom");
        partition[pi].push(ci);
    }
    for group in &mut partition {
        group.sort_unstable();
    }
    Ok(SequenceStep {
        n,
        previous: prev.clone(),
        measure: cur.clone(),
        step_path: builder.build()?,
        partition,
    })
}

/// `Mα(G_n^{n−1})` of the generated step and the family's closed form.
pub fn step_cost(gen: &CatalogGenerator, n: usize, alpha: f64) -> Result<StepCost, CatalogError> {
    let step = generate(gen, n)?;
    Ok(StepCost {
        computed: cost_malpha(&step.step_path, alpha)?,
        closed_form: closed_form(gen, n, alpha),
    })
}

/// Step costs of generations `1..=n`.
pub fn step_costs(gen: &CatalogGenerator, n: usize, alpha: f64) -> Result<Vec<StepCost>, CatalogError> {
    generate_all(gen, n)?
        .iter()
        .map(|s| {
            Ok(StepCost {
                computed: cost_malpha(&s.step_path, alpha)?,
                closed_form: closed_form(gen, s.n, alpha),
            })
        })
        .collect()
}

/// Closed-form step cost of generation `n`.
pub fn closed_form(gen: &CatalogGenerator, n: usize, alpha: f64) -> Option<f64> {
    let n = n as i32;
    match gen {
        CatalogGenerator::Cantor => Some((2f64.powf(1.0 - alpha) / 3.0).powi(n)),
        CatalogGenerator::FatCantor { lambda } => {
            let p = (1.0 - lambda) / 2.0;
            Some((1.0 + lambda) / (2.0 * (1.0 - lambda)) * (2f64.powf(1.0 - alpha) * p).powi(n))
        }
        CatalogGenerator::SelfSimilar(s) => {
            let k = s.k() as f64;
            Some(s.diameter() / s.sigma * (k.powf(1.0 - alpha) * s.sigma).powi(n))
        }
        CatalogGenerator::Dyadic(d) => match d.measure {
            DyadicMeasure::Uniform => {
                let m = d.dim() as f64;
                Some(m.sqrt() * d.side / 2.0 * (2f64.powf(m * (1.0 - alpha)) / 2.0).powi(n))
            }
            _ => None,
        },
        CatalogGenerator::NestedBox(b) => {
            let (k, h) = (b.k as f64, b.h as f64);
            let offsets: Vec<f64> = (0..b.k.pow(b.m as u32))
                .map(|idx| {
                    box_digits(idx, b.k, b.m)
                        .iter()
                        .map(|&j| {
                            let o = (j as f64 + 0.5) / k - 0.5;
                            o * o
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let delta: f64 = match b.mode {
                NestedBoxMode::Determinate => offsets[..b.h].iter().sum(),
                NestedBoxMode::Random(_) => h * offsets.iter().sum::<f64>() / offsets.len() as f64,
            };
            Some(k * delta / h * (h.powf(1.0 - alpha) / k).powi(n))
        }
    }
}
