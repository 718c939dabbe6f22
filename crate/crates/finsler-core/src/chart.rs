//! Coordinate charts, points, tangent vectors and covectors.
//!
//! A chart is an axis-aligned open box in `R^n` (axes may be unbounded);
//! all geometry in this crate is expressed in the coordinates of one chart.

use crate::error::{FinslerError, Result};
use nalgebra::DVector;

/// Chart points are coordinate vectors.
pub type Point = DVector<f64>;

/// An axis-aligned open box in `R^n`, `n >= 2`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldChart {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ManifoldChart {
    pub fn new(dim: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(FinslerError::invalid("chart", "dimension must be >= 2"));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(FinslerError::DimensionMismatch {
                expected: dim,
                got: lower.len().min(upper.len()),
            });
        }
        for i in 0..dim {
            if !(lower[i] < upper[i]) {
                return Err(FinslerError::invalid(
                    "chart",
                    format!("lower[{i}] = {} must be < upper[{i}] = {}", lower[i], upper[i]),
                ));
            }
        }
        Ok(Self { dim, lower, upper })
    }

    /// All of `R^n`.
    pub fn unbounded(dim: usize) -> Self {
        Self::new(dim, vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
            .expect("dim >= 2 checked by caller")
    }

    /// Upper half space `{ x_n > 0 }`.
    pub fn upper_half_space(dim: usize) -> Self {
        let mut lower = vec![f64::NEG_INFINITY; dim];
        lower[dim - 1] = 0.0;
        Self::new(dim, lower, vec![f64::INFINITY; dim]).expect("dim >= 2 checked by caller")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&xi, (&lo, &hi))| xi.is_finite() && xi > lo && xi < hi)
    }

    pub fn check_contains(&self, x: &Point) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(FinslerError::OutsideDomain {
                point: x.iter().copied().collect(),
            })
        }
    }
}

/// A tangent vector `(x, y)` with base point in the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Self {
        Self {
            base: DVector::from_row_slice(base),
            components: DVector::from_row_slice(components),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0.0)
    }
}

/// A covector `(x, alpha)` with base point in the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl Covector {
    pub fn new(base: Point, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Self {
        Self {
            base: DVector::from_row_slice(base),
            components: DVector::from_row_slice(components),
        }
    }

    /// Natural pairing `alpha(v)` (base points must agree; not checked).
    pub fn pair(&self, v: &DVector<f64>) -> f64 {
        self.components.dot(v)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0.0)
    }
}

/// A closed axis-aligned box used for grids, quadrature domains and samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(FinslerError::invalid("box", "bound lengths differ or empty"));
        }
        for i in 0..lower.len() {
            if !(lower[i] <= upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(FinslerError::invalid(
                    "box",
                    format!("need finite lower[{i}] <= upper[{i}]"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Point {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(&a, &b)| 0.5 * (a + b)),
        )
    }

    /// The box shrunk towards its center by `factor` in every axis.
    pub fn shrunk(&self, factor: f64) -> BoxRegion {
        let c = self.center();
        let lower = self
            .lower
            .iter()
            .enumerate()
            .map(|(i, &a)| c[i] + factor * (a - c[i]))
            .collect();
        let upper = self
            .upper
            .iter()
            .enumerate()
            .map(|(i, &b)| c[i] + factor * (b - c[i]))
            .collect();
        BoxRegion { lower, upper }
    }

    /// Row-major lattice of points, `resolution[i] >= 2` nodes per axis
    /// (endpoints included).
    pub fn lattice(&self, resolution: &[usize]) -> Result<Vec<Point>> {
        if resolution.len() != self.dim() {
            return Err(FinslerError::DimensionMismatch {
                expected: self.dim(),
                got: resolution.len(),
            });
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(FinslerError::invalid("lattice", "resolution must be >= 2 per axis"));
        }
        let n = self.dim();
        let total: usize = resolution.iter().product();
        let mut pts = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        loop {
            let p = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let t = idx[i] as f64 / (resolution[i] - 1) as f64;
                    self.lower[i] + t * (self.upper[i] - self.lower[i])
                }),
            );
            pts.push(p);
            // increment multi-index, last axis fastest
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(pts);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < resolution[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}
