//! Finite-volume residuals on implicit cells with jump conditions.
//!
//! Residuals are assembled symbolically as affine forms over network
//! evaluations ([`Evaluation`]), so the same assembly serves loss
//! evaluation, gradients and consistency checks.

mod assemble;
mod rules;
mod stencil;

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{vec3, GeometryError, LevelSetField, Point, ScalarFn};

pub use assemble::{
    assemble_point, dirichlet_row, fv_residual, neural_extrapolation_pair, node_value_form, pinn_bulk_row,
    pinn_interface_residual, pinn_interface_row, Approach, AssemblyOptions,
};
#[cfg(test)]
pub(crate) use assemble::tests::exact_outputs;
pub use rules::{extrapolation_rules, opposite_rule, zeta_gamma, BiasMode, ExtrapolationRule, NodeFrame, ZetaGamma};
pub use stencil::{build_stencil, ls_normal_coeffs, ls_normal_coeffs_unweighted, NeighborStencil, OFFSETS};

pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Minus, Side::Plus];

    /// Points with `phi <= 0` belong to Ω−.
    #[inline]
    pub fn of(phi: f64) -> Side {
        if phi <= 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error)]
pub enum DiscretizationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("least-squares stencil on side {side:?} at {point:?} is rank deficient")]
    DegenerateStencil { point: Point, side: Side },
    #[error("extrapolation denominator 1 ± zeta vanishes at {point:?}")]
    SingularExtrapolation { point: Point },
}

/// A boundary-value problem `k u − ∇·(μ∇u) = f` in Ω± with `[u] = α`,
/// `[μ ∂n u] = β` on Γ and Dirichlet data on the box boundary.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub lo: Point,
    pub hi: Point,
    pub phi: LevelSetField,
    pub mu_minus: ScalarFn,
    pub mu_plus: ScalarFn,
    pub k_minus: ScalarFn,
    pub k_plus: ScalarFn,
    pub f_minus: ScalarFn,
    pub f_plus: ScalarFn,
    pub alpha: ScalarFn,
    pub beta: ScalarFn,
    pub dirichlet: ScalarFn,
    pub exact_minus: Option<ScalarFn>,
    pub exact_plus: Option<ScalarFn>,
    /// Analytic ∇μ± when known; finite differences otherwise.
    pub grad_mu_minus: Option<VectorFn>,
    pub grad_mu_plus: Option<VectorFn>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec").field("name", &self.name).field("lo", &self.lo).field("hi", &self.hi).finish()
    }
}

pub fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

impl ProblemSpec {
    /// A problem with constant coefficients μ = 1, k = 0 and zero data, to be
    /// customised field by field.
    pub fn template(name: &str, lo: Point, hi: Point, phi: LevelSetField) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            phi,
            mu_minus: constant(1.0),
            mu_plus: constant(1.0),
            k_minus: constant(0.0),
            k_plus: constant(0.0),
            f_minus: constant(0.0),
            f_plus: constant(0.0),
            alpha: constant(0.0),
            beta: constant(0.0),
            dirichlet: constant(0.0),
            exact_minus: None,
            exact_plus: None,
            grad_mu_minus: None,
            grad_mu_plus: None,
        }
    }

    #[inline]
    pub fn mu(&self, side: Side, x: Point) -> f64 {
        match side {
            Side::Minus => (self.mu_minus)(x),
            Side::Plus => (self.mu_plus)(x),
        }
    }

    #[inline]
    pub fn k(&self, side: Side, x: Point) -> f64 {
        match side {
            Side::Minus => (self.k_minus)(x),
            Side::Plus => (self.k_plus)(x),
        }
    }

    #[inline]
    pub fn f(&self, side: Side, x: Point) -> f64 {
        match side {
            Side::Minus => (self.f_minus)(x),
            Side::Plus => (self.f_plus)(x),
        }
    }

    pub fn exact(&self, side: Side) -> Option<&ScalarFn> {
        match side {
            Side::Minus => self.exact_minus.as_ref(),
            Side::Plus => self.exact_plus.as_ref(),
        }
    }

    /// Exact solution on the side containing `x`.
    pub fn exact_at(&self, x: Point) -> Option<f64> {
        let side = self.side_of(x).ok()?;
        self.exact(side).map(|u| u(x))
    }

    pub fn grad_mu(&self, side: Side, x: Point) -> Point {
        let analytic = match side {
            Side::Minus => self.grad_mu_minus.as_ref(),
            Side::Plus => self.grad_mu_plus.as_ref(),
        };
        match analytic {
            Some(g) => g(x),
            None => {
                let s = 1e-5;
                std::array::from_fn(|a| {
                    let e = vec3::axis(a, s);
                    (self.mu(side, vec3::add(x, e)) - self.mu(side, vec3::sub(x, e))) / (2.0 * s)
                })
            }
        }
    }

    pub fn side_of(&self, x: Point) -> Result<Side, GeometryError> {
        Ok(Side::of(self.phi.value(x)?))
    }

    /// Distance from `x` to the nearest box face (negative outside).
    pub fn boundary_distance(&self, x: Point) -> f64 {
        (0..3).map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a])).fold(f64::INFINITY, f64::min)
    }
}

/// What a residual needs from a network at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalKind {
    /// Output 0: value.
    Value,
    /// Outputs 0: value, 1: derivative along the direction.
    Directional(Point),
    /// Outputs 0: value, 1..=3: ∂x, ∂y, ∂z, 4..=6: ∂xx, ∂yy, ∂zz.
    AxisJet2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub side: Side,
    pub pos: Point,
    pub kind: EvalKind,
}

impl Evaluation {
    pub fn value(side: Side, pos: Point) -> Self {
        Self { side, pos, kind: EvalKind::Value }
    }
}

/// `Σ coeff · output(evaluation) + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(Evaluation, u8, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn single(e: Evaluation, output: u8, coeff: f64) -> Self {
        Self { terms: vec![(e, output, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, e: Evaluation, output: u8, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((e, output, coeff));
        }
    }

    /// `self += factor · other`
    pub fn add_scaled(&mut self, other: &LinearForm, factor: f64) {
        if factor == 0.0 {
            return;
        }
        for &(e, o, c) in &other.terms {
            self.push(e, o, c * factor);
        }
        self.constant += factor * other.constant;
    }

    pub fn evaluate(&self, mut u: impl FnMut(&Evaluation, u8) -> f64) -> f64 {
        self.terms.iter().map(|(e, o, c)| c * u(e, *o)).sum::<f64>() + self.constant
    }
}

/// A per-point residual `r(u)` that is affine in network outputs, together
/// with its Jacobi scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineResidual {
    pub form: LinearForm,
    pub diag: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResidual {
    pub residual: f64,
    pub diag: f64,
    pub footprint: Vec<Evaluation>,
}

impl AffineResidual {
    pub fn evaluate(&self, u: impl FnMut(&Evaluation, u8) -> f64) -> PointResidual {
        PointResidual {
            residual: self.form.evaluate(u),
            diag: self.diag,
            footprint: self.form.terms.iter().map(|t| t.0).collect(),
        }
    }
}
