//! Built-in benchmark problems, error metrics and convergence orders.
//!
//! Exact fields are written once, generically over dual numbers, so that
//! gradients, Laplacians and jump data follow from the printed formulas by
//! forward-mode differentiation.

mod metrics;

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use num_dual::{Dual2, Dual64, DualNum};
use thiserror::Error;

use crate::discretization::{ProblemSpec, Side};
use crate::geometry::{star_phi, vec3, GeometryError, LevelSetField, Point};
use crate::model::Activation;

pub use metrics::{
    convergence_order, convergence_table, convergence_table_csv, evaluate_errors, evaluate_errors_with,
    ConvergenceRow, ErrorReport,
};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem {0:?} (expected one of bulk, sphere, star, lpbe)")]
    UnknownProblem(String),
    #[error("problem {0:?} has no exact solution")]
    MissingExact(String),
    #[error("convergence order needs positive errors, got {coarse} and {fine}")]
    NonPositiveError { coarse: f64, fine: f64 },
    #[error("evaluation resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A scalar field that can be evaluated on real or dual arguments.
pub trait Field: Send + Sync + 'static {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, p: [D; 3]) -> D;
}

/// Value, gradient and the diagonal of the Hessian.
pub fn jet2<F: Field + ?Sized>(f: &F, x: Point) -> (f64, Point, Point) {
    let (mut value, mut grad, mut diag) = (0.0, [0.0; 3], [0.0; 3]);
    for a in 0..3 {
        let p: [Dual2<f64>; 3] = std::array::from_fn(|b| {
            let d = Dual2::from_re(x[b]);
            if a == b {
                d.derivative()
            } else {
                d
            }
        });
        let r = f.eval(p);
        value = r.re;
        grad[a] = r.v1;
        diag[a] = r.v2;
    }
    (value, grad, diag)
}

pub fn gradient<F: Field + ?Sized>(f: &F, x: Point) -> Point {
    std::array::from_fn(|a| {
        let p: [Dual64; 3] = std::array::from_fn(|b| {
            let d = Dual64::from_re(x[b]);
            if a == b {
                d.derivative()
            } else {
                d
            }
        });
        f.eval(p).eps
    })
}

macro_rules! field {
    ($(#[$m:meta])* $name:ident, |$p:ident| $body:expr) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, Default)]
        pub struct $name;
        impl Field for $name {
            #[inline]
            fn eval<D: DualNum<Primitive = f64> + Copy>(&self, $p: [D; 3]) -> D {
                $body
            }
        }
    };
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub f64);

impl Field for ConstantField {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, _p: [D; 3]) -> D {
        D::from(self.0)
    }
}

field!(BulkU, |p| p[0].cos() * p[1].sin() * p[2].cos());
field!(SpherePhi, |p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.5);
field!(SphereUMinus, |p| p[2].exp());
field!(SphereUPlus, |p| p[0].cos() * p[1].sin());
field!(SphereMuMinus, |p| p[1] * p[1] * (p[0] + 2.0).ln() + 4.0);
field!(SphereMuPlus, |p| (-p[2]).exp());
field!(StarPhi, |p| star_phi(p));
field!(StarUMinus, |p| (p[0] * 2.0).sin() * (p[1] * 2.0).cos() * p[2].exp());
field!(StarUPlus, |p| {
    let t = (p[1] - p[0]) / 3.0;
    let t2 = t * t;
    let chebyshev = ((t2 * 16.0 - 20.0) * t2 + 5.0) * t;
    chebyshev * (p[0] + p[1] + 3.0).ln() * p[2].cos()
});
field!(StarMuMinus, |p| {
    let osc = ((p[0] + p[1]) * (2.0 * PI)).cos() * ((p[0] - p[1]) * (2.0 * PI)).sin() * p[2].cos();
    (osc * 0.2 + 1.0) * 10.0
});

/// Constants of the linearised Poisson-Boltzmann benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpbeParams {
    pub sigma: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub kappa: f64,
    pub omega: f64,
}

pub const LPBE_OMEGA: f64 = 7.0465e3;
pub const LPBE_OMEGA_SCALE: f64 = 293.6;

impl Default for LpbeParams {
    /// Charge scaled by [`LPBE_OMEGA_SCALE`] so solution values are O(1).
    fn default() -> Self {
        Self::unscaled().scaled(LPBE_OMEGA_SCALE)
    }
}

impl LpbeParams {
    pub fn unscaled() -> Self {
        Self { sigma: 1.0, mu_minus: 2.0, mu_plus: 80.0, kappa: 1.0299e-3, omega: LPBE_OMEGA }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self { omega: self.omega / factor, ..self }
    }

    /// Constant interior value of the regular component.
    pub fn u_minus(&self) -> f64 {
        self.omega / (4.0 * PI * self.sigma)
            * (1.0 / (self.mu_plus * (1.0 + self.kappa * self.sigma)) - 1.0 / self.mu_minus)
    }
}

#[derive(Clone, Copy, Debug)]
struct LpbeUPlus(LpbeParams);

impl Field for LpbeUPlus {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, p: [D; 3]) -> D {
        let q = self.0;
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let c = q.omega / (4.0 * PI * q.mu_plus * (1.0 + q.kappa * q.sigma));
        ((-r + q.sigma) * q.kappa).exp() / r * c
    }
}

#[derive(Clone, Copy, Debug)]
struct LpbePhi(f64);

impl Field for LpbePhi {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, p: [D; 3]) -> D {
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Bulk,
    Sphere,
    Star,
    Lpbe,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [Builtin::Bulk, Builtin::Sphere, Builtin::Star, Builtin::Lpbe];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Bulk => "bulk",
            Builtin::Sphere => "sphere",
            Builtin::Star => "star",
            Builtin::Lpbe => "lpbe",
        }
    }

    /// Network sizes and activations for Ω− and Ω+.
    pub fn architectures(self) -> [(Vec<usize>, Activation); 2] {
        match self {
            Builtin::Bulk => {
                let a = (vec![3, 10, 10, 10, 10, 10, 1], Activation::Celu);
                [a.clone(), a]
            }
            Builtin::Sphere => {
                let a = (vec![3, 10, 10, 10, 10, 10, 1], Activation::Sine);
                [a.clone(), a]
            }
            Builtin::Star => {
                let a = (vec![3, 100, 1], Activation::Sine);
                [a.clone(), a]
            }
            Builtin::Lpbe => [(vec![3, 1, 1], Activation::Tanh), (vec![3, 10, 10, 1], Activation::Celu)],
        }
    }
}

impl FromStr for Builtin {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| ProblemError::UnknownProblem(s.to_string()))
    }
}

pub fn builtin_problem(name: &str) -> Result<ProblemSpec, ProblemError> {
    Ok(build(name.parse()?, None))
}

/// The built-in problem with its level set replaced, e.g. by a sampled
/// field; β is rebuilt with normals of the new level set.
pub fn builtin_with_level_set(name: &str, phi: LevelSetField) -> Result<ProblemSpec, ProblemError> {
    Ok(build(name.parse()?, Some(phi)))
}

pub fn lpbe_problem(params: LpbeParams) -> ProblemSpec {
    lpbe(params, None)
}

fn build(which: Builtin, phi: Option<LevelSetField>) -> ProblemSpec {
    match which {
        Builtin::Bulk => bulk(phi),
        Builtin::Sphere => sphere(phi),
        Builtin::Star => star(phi),
        Builtin::Lpbe => lpbe(LpbeParams::default(), phi),
    }
}

/// Fields of a two-phase problem with constant reaction coefficients.
struct Phases<P, UM, UP, MM, MP> {
    phi: P,
    u_minus: UM,
    u_plus: UP,
    mu_minus: MM,
    mu_plus: MP,
    k: [f64; 2],
}

/// `k u − μΔu − ∇μ·∇u` for the exact fields.
fn generated_source<U: Field, M: Field>(u: &U, mu: &M, k: f64, x: Point) -> f64 {
    let (val, grad_u, diag) = jet2(u, x);
    let (m, grad_mu, _) = jet2(mu, x);
    k * val - m * (diag[0] + diag[1] + diag[2]) - vec3::dot(grad_mu, grad_u)
}

fn assemble<P, UM, UP, MM, MP>(
    name: &str,
    lo: Point,
    hi: Point,
    fields: Phases<P, UM, UP, MM, MP>,
    phi_override: Option<LevelSetField>,
) -> ProblemSpec
where
    P: Field + Clone,
    UM: Field + Clone,
    UP: Field + Clone,
    MM: Field + Clone,
    MP: Field + Clone,
{
    let Phases { phi, u_minus, u_plus, mu_minus, mu_plus, k } = fields;
    let phi = Arc::new(phi);
    let (um, up) = (Arc::new(u_minus), Arc::new(u_plus));
    let (mm, mp) = (Arc::new(mu_minus), Arc::new(mu_plus));

    let level_set = match &phi_override {
        Some(ls) => ls.clone(),
        None => {
            let phi = phi.clone();
            LevelSetField::analytic(move |x| phi.eval(x))
        }
    };
    let mut spec = ProblemSpec::template(name, lo, hi, level_set.clone());

    let normal: Arc<dyn Fn(Point) -> Point + Send + Sync> = match phi_override {
        Some(ls) => {
            let h = ls.grid().map(|g| g.spacing()[0]).unwrap_or(1e-4);
            Arc::new(move |x| ls.normal(x, h).unwrap_or([0.0; 3]))
        }
        None => {
            let phi = phi.clone();
            let fallback = level_set;
            Arc::new(move |x| {
                let g = gradient(phi.as_ref(), x);
                let m = vec3::norm(g);
                if m.is_finite() && m > 1e-12 {
                    vec3::scale(g, 1.0 / m)
                } else {
                    fallback.normal(x, 1e-4).unwrap_or([0.0; 3])
                }
            })
        }
    };

    spec.exact_minus = Some({
        let um = um.clone();
        Arc::new(move |x| um.eval(x))
    });
    spec.exact_plus = Some({
        let up = up.clone();
        Arc::new(move |x| up.eval(x))
    });
    spec.mu_minus = {
        let mm = mm.clone();
        Arc::new(move |x| mm.eval(x))
    };
    spec.mu_plus = {
        let mp = mp.clone();
        Arc::new(move |x| mp.eval(x))
    };
    spec.grad_mu_minus = Some({
        let mm = mm.clone();
        Arc::new(move |x| gradient(mm.as_ref(), x))
    });
    spec.grad_mu_plus = Some({
        let mp = mp.clone();
        Arc::new(move |x| gradient(mp.as_ref(), x))
    });
    spec.k_minus = Arc::new(move |_| k[0]);
    spec.k_plus = Arc::new(move |_| k[1]);
    spec.f_minus = {
        let (um, mm) = (um.clone(), mm.clone());
        Arc::new(move |x| generated_source(um.as_ref(), mm.as_ref(), k[0], x))
    };
    spec.f_plus = {
        let (up, mp) = (up.clone(), mp.clone());
        Arc::new(move |x| generated_source(up.as_ref(), mp.as_ref(), k[1], x))
    };
    spec.alpha = {
        let (um, up) = (um.clone(), up.clone());
        Arc::new(move |x| up.eval(x) - um.eval(x))
    };
    spec.beta = {
        let (um, up, mm, mp) = (um.clone(), up.clone(), mm.clone(), mp.clone());
        Arc::new(move |x| {
            let n = normal(x);
            mp.eval(x) * vec3::dot(gradient(up.as_ref(), x), n) - mm.eval(x) * vec3::dot(gradient(um.as_ref(), x), n)
        })
    };
    spec.dirichlet = {
        let phi = spec.phi.clone();
        Arc::new(move |x| match Side::of(phi.value(x).unwrap_or(0.0)) {
            Side::Minus => um.eval(x),
            Side::Plus => up.eval(x),
        })
    };
    spec
}

/// `u = cos x sin y cos z` on [−1,1]³ without an interface (φ ≡ −1).
fn bulk(phi: Option<LevelSetField>) -> ProblemSpec {
    let fields = Phases {
        phi: ConstantField(-1.0),
        u_minus: BulkU,
        u_plus: BulkU,
        mu_minus: ConstantField(1.0),
        mu_plus: ConstantField(1.0),
        k: [0.0, 0.0],
    };
    let mut spec = assemble("bulk", [-1.0; 3], [1.0; 3], fields, phi);
    let f: crate::geometry::ScalarFn = Arc::new(|x| 3.0 * BulkU.eval(x));
    spec.f_minus = f.clone();
    spec.f_plus = f;
    spec
}

/// Sphere of radius 0.5 with variable μ±.
fn sphere(phi: Option<LevelSetField>) -> ProblemSpec {
    let fields = Phases {
        phi: SpherePhi,
        u_minus: SphereUMinus,
        u_plus: SphereUPlus,
        mu_minus: SphereMuMinus,
        mu_plus: SphereMuPlus,
        k: [0.0, 0.0],
    };
    let mut spec = assemble("sphere", [-1.0; 3], [1.0; 3], fields, phi);
    spec.f_minus = Arc::new(|x| -(x[1] * x[1] * (x[0] + 2.0).ln() + 4.0) * x[2].exp());
    spec.f_plus = Arc::new(|x| 2.0 * x[0].cos() * x[1].sin() * (-x[2]).exp());
    spec
}

/// Star-shaped interface with oscillatory μ⁻ = 10[...] and μ⁺ = 1.
fn star(phi: Option<LevelSetField>) -> ProblemSpec {
    let fields = Phases {
        phi: StarPhi,
        u_minus: StarUMinus,
        u_plus: StarUPlus,
        mu_minus: StarMuMinus,
        mu_plus: ConstantField(1.0),
        k: [0.0, 0.0],
    };
    assemble("star", [-1.0; 3], [1.0; 3], fields, phi)
}

/// Regular component of the linearised Poisson-Boltzmann equation around a
/// unit charge at the origin inside a sphere of radius σ.
fn lpbe(q: LpbeParams, phi: Option<LevelSetField>) -> ProblemSpec {
    let fields = Phases {
        phi: LpbePhi(q.sigma),
        u_minus: ConstantField(q.u_minus()),
        u_plus: LpbeUPlus(q),
        mu_minus: ConstantField(q.mu_minus),
        mu_plus: ConstantField(q.mu_plus),
        k: [0.0, q.mu_plus * q.kappa * q.kappa],
    };
    assemble("lpbe", [-2.5; 3], [2.5; 3], fields, phi)
}

/// `g = ω / (4π μ⁻ |x|)`, the singular charge potential subtracted from the
/// interior solution.
pub fn lpbe_singular(q: &LpbeParams, x: Point) -> f64 {
    q.omega / (4.0 * PI * q.mu_minus * vec3::norm(x))
}
