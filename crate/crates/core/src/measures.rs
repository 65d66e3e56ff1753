//! Finite atomic measures on R^m.
//!
//! An [`AtomicMeasure`] is a finite weighted sum of Dirac masses. Construction
//! merges coincident locations and stores atoms in lexicographic order of
//! their coordinates, so two measures that are equal as functionals have the
//! same representation.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default absolute tolerance used when comparing masses.
pub const DEFAULT_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atom {index} has non-positive mass {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("atom {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("{points} points but {masses} masses")]
    LengthMismatch { points: usize, masses: usize },
    #[error("non-finite value in atom {index}")]
    NonFinite { index: usize },
    #[error("points must have at least one coordinate")]
    ZeroDimension,
    #[error("scale factor must be positive and finite, got {0}")]
    NonPositiveScale(f64),
}

/// A point of R^m.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.0, &other.0)
    }

    /// Lexicographic total order on coordinates.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        lex_cmp(&self.0, &other.0)
    }

    /// Bit pattern of the coordinates, usable as an exact hash key.
    pub fn key(&self) -> Vec<u64> {
        self.0.iter().map(|c| canonical_bits(*c)).collect()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point(coords)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.len().cmp(&b.len())
}

// -0.0 and 0.0 are the same location.
pub(crate) fn canonical_bits(c: f64) -> u64 {
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}

/// One Dirac mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "x")]
    pub location: Point,
    pub mass: f64,
}

/// A finite atomic measure `Σ m_i δ_{x_i}` with distinct locations and
/// positive masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    dim: usize,
    total: f64,
}

impl AtomicMeasure {
    /// Builds a measure from parallel lists of points and masses.
    ///
    /// Coincident points are merged by summing their masses; atoms are
    /// stored in lexicographic order of location, ties broken by input order.
    pub fn new(points: Vec<Point>, masses: Vec<f64>) -> Result<Self, MeasureError> {
        if points.len() != masses.len() {
            return Err(MeasureError::LengthMismatch {
                points: points.len(),
                masses: masses.len(),
            });
        }
        if points.is_empty() {
            return Err(MeasureError::EmptyMeasure);
        }
        let dim = points[0].dim();
        if dim == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        for (index, (p, &mass)) in points.iter().zip(&masses).enumerate() {
            if p.dim() != dim {
                return Err(MeasureError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.dim(),
                });
            }
            if !p.is_finite() || !mass.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if mass <= 0.0 {
                return Err(MeasureError::NonPositiveMass { index, mass });
            }
        }

        let mut order: Vec<usize> = (0..points.len()).collect();
        // stable sort keeps the original index as tie-break
        order.sort_by(|&i, &j| points[i].lex_cmp(&points[j]));

        let mut atoms: Vec<Atom> = Vec::with_capacity(points.len());
        for i in order {
            match atoms.last_mut() {
                Some(last) if last.location.key() == points[i].key() => last.mass += masses[i],
                _ => atoms.push(Atom {
                    location: points[i].clone(),
                    mass: masses[i],
                }),
            }
        }
        let total = atoms.iter().map(|a| a.mass).sum();
        Ok(AtomicMeasure { atoms, dim, total })
    }

    /// Builds a measure from `(location, mass)` pairs.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (Point, f64)>) -> Result<Self, MeasureError> {
        let (points, masses) = atoms.into_iter().unzip();
        Self::new(points, masses)
    }

    /// `mass · δ_p`.
    pub fn dirac(location: Point, mass: f64) -> Result<Self, MeasureError> {
        Self::new(vec![location], vec![mass])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// `||a|| = Σ m_i`, summed in stored atom order.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total - 1.0).abs() <= tol
    }

    pub fn scale(&self, factor: f64) -> Result<Self, MeasureError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(MeasureError::NonPositiveScale(factor));
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location.clone(),
                mass: a.mass * factor,
            })
            .collect();
        if atoms.iter().any(|a| !(a.mass > 0.0 && a.mass.is_finite())) {
            return Err(MeasureError::NonPositiveScale(factor));
        }
        let total = atoms.iter().map(|a| a.mass).sum();
        Ok(AtomicMeasure {
            atoms,
            dim: self.dim,
            total,
        })
    }

    /// The probability measure `a / ||a||`.
    pub fn normalize(&self) -> Self {
        self.scale(1.0 / self.total)
            .expect("total mass of a valid measure is positive")
    }

    /// Index of the atom located exactly at `p`.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.atoms
            .binary_search_by(|a| a.location.lex_cmp(p))
            .ok()
    }

    /// Mass at the exact location `p` (zero if `p` is not in the support).
    pub fn mass_at(&self, p: &Point) -> f64 {
        self.index_of(p).map_or(0.0, |i| self.atoms[i].mass)
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.atoms.iter().map(|a| &a.location)
    }

    /// `max_i |p - x_i|`.
    pub fn max_distance_from(&self, p: &Point) -> f64 {
        self.support().map(|x| x.distance(p)).fold(0.0, f64::max)
    }

    /// Same locations and masses within `tol` (absolute).
    pub fn approx_eq(&self, other: &AtomicMeasure, tol: f64) -> bool {
        self.dim == other.dim
            && self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                a.location.key() == b.location.key() && (a.mass - b.mass).abs() <= tol
            })
    }

    /// Signed difference `self - other` at every location of either support.
    pub fn signed_difference(&self, other: &AtomicMeasure) -> Vec<(Point, f64)> {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() || j < other.atoms.len() {
            let ord = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(a), Some(b)) => a.location.lex_cmp(&b.location),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    out.push((self.atoms[i].location.clone(), self.atoms[i].mass));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((other.atoms[j].location.clone(), -other.atoms[j].mass));
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((
                        self.atoms[i].location.clone(),
                        self.atoms[i].mass - other.atoms[j].mass,
                    ));
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    dim: usize,
    atoms: Vec<Atom>,
}

impl Serialize for AtomicMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MeasureRepr {
            dim: self.dim,
            atoms: self.atoms.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = MeasureRepr::deserialize(deserializer)?;
        if let Some(a) = repr.atoms.iter().find(|a| a.location.dim() != repr.dim) {
            return Err(D::Error::custom(format!(
                "atom at {:?} does not have dimension {}",
                a.location, repr.dim
            )));
        }
        AtomicMeasure::from_atoms(repr.atoms.into_iter().map(|a| (a.location, a.mass)))
            .map_err(D::Error::custom)
    }
}
