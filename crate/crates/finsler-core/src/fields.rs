//! Scalar fields: the built-in catalogue and wrappers around evaluators.
//!
//! Fields carry an optional exact differential. Without one, gradients and
//! Laplacians use central differences with a field-specific step (Busemann
//! fields are noisier than closed forms and want a larger step).

use crate::chart::Point;
use crate::metric::central_differential;
use nalgebra::DVector;
use std::fmt;
use std::sync::Arc;

type EvalFn = dyn Fn(&Point) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Point) -> DVector<f64> + Send + Sync;

#[derive(Clone)]
pub struct ScalarField {
    name: String,
    eval: Arc<EvalFn>,
    exact_grad: Option<Arc<GradFn>>,
    fd_step: Option<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("exact_grad", &self.exact_grad.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl ScalarField {
    pub fn new(name: impl Into<String>, eval: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            exact_grad: None,
            fd_step: None,
        }
    }

    pub fn with_exact_grad(
        mut self,
        grad: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.exact_grad = Some(Arc::new(grad));
        self
    }

    /// Override the central-difference step used for the differential.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = Some(h);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.eval)(x)
    }

    pub fn fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    pub fn differential_is_exact(&self) -> bool {
        self.exact_grad.is_some()
    }

    /// `df(x)`: exact if available, else central differences.
    pub fn differential(&self, x: &Point) -> DVector<f64> {
        match &self.exact_grad {
            Some(g) => g(x),
            None => central_differential(&*self.eval, x, self.fd_step),
        }
    }

    // ----- catalogue -----

    /// `f(x) = x^i` (coordinate function).
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("coord{}", i + 1), move |x| x[i]).with_exact_grad(move |x| {
            let mut g = DVector::zeros(x.len());
            g[i] = 1.0;
            g
        })
    }

    /// `f(x) = 1/2 |x|^2`.
    pub fn half_sqnorm() -> Self {
        Self::new("half_sqnorm", |x| 0.5 * x.norm_squared()).with_exact_grad(|x| x.clone())
    }

    /// `f(x) = |x - c|` (euclidean distance from a center).
    pub fn norm_from(center: Point) -> Self {
        let c2 = center.clone();
        Self::new("norm", move |x| (x - &center).norm()).with_exact_grad(move |x| {
            let d = x - &c2;
            let n = d.norm();
            d / n
        })
    }

    /// `f(x) = -log(x_n)`; on the hyperbolic half space this is the
    /// closed-form Busemann field of the upward vertical ray through
    /// `x_n = 1`.
    pub fn neg_log_last() -> Self {
        Self::new("neg_log_last", |x| -x[x.len() - 1].ln()).with_exact_grad(|x| {
            let n = x.len();
            let mut g = DVector::zeros(n);
            g[n - 1] = -1.0 / x[n - 1];
            g
        })
    }

    /// Linear field `f(x) = c . x + offset`.
    pub fn linear(c: DVector<f64>, offset: f64) -> Self {
        let c2 = c.clone();
        Self::new("linear", move |x| c.dot(x) + offset).with_exact_grad(move |_x| c2.clone())
    }
}
