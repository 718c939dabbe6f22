//! Numerical Finsler geometry on coordinate charts.
//!
//! This crate implements the computational core of a Finsler geometry
//! toolbox: norm families with their fundamental tensors and Legendre
//! transforms, geodesic integration and nonsymmetric two-point distances,
//! measure-dependent Laplacians and mean curvature of level sets, and
//! Busemann functions with certified monotone truncation together with
//! asymptote construction, horosphere extraction and asymptotic-harmonicity
//! diagnostics.
//!
//! Everything lives on a single coordinate chart (an axis-aligned box in
//! `R^n`, axes may be unbounded). All types are immutable values after
//! construction and all operations are pure functions of their inputs, so
//! the crate is safe to drive from a thread pool; the only interior
//! mutability is the lazily extended geodesic trace of a [`Ray`] and the
//! memoization table of a [`busemann::BusemannField`], both synchronized
//! and both transparent to observed values.

pub mod busemann;
pub mod chart;
pub mod distance;
pub mod error;
pub mod fields;
pub mod geodesic;
pub mod laplacian;
pub mod metric;
pub mod structure;
pub mod volume;

pub use volume::{VolumeForm, VolumeKind};

pub use chart::{BoxRegion, Covector, ManifoldChart, Point, TangentVector};
pub use distance::{distance, DistanceMethod, DistanceOptions, DistanceResult};
pub use error::{FinslerError, Result};
pub use geodesic::{exp_map, make_ray, minimizer_sequence, spray_step, GeodesicRecord, Ray};
pub use metric::FundamentalTensor;
pub use structure::{DerivativeProvider, Family, FinslerStructure, RiemannianPreset};

