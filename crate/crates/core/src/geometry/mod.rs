//! Level-set fields, interpolation and quadrature over implicit cells.

pub mod cell;
pub mod grid;
pub mod simplex;
pub mod vec3;

use std::sync::Arc;

use thiserror::Error;
use num_dual::DualNum;

pub use cell::{cell_geometry, normal_with_fallback, CellGeometry, FACES};
pub use grid::{interp_quadratic, interp_trilinear, InterpMode, SampledGrid};
pub use simplex::{edge_intersection, integrate_simplex, intersect_simplex, triangulate_cell, Simplex, Tetrahedron, Triangle};
pub use vec3::Point;

/// Gradient magnitudes below this are treated as degenerate.
pub const MIN_GRADIENT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point {point:?} lies outside the sampled grid")]
    OutOfBounds { point: Point },
    #[error("level-set gradient vanishes near {point:?}")]
    DegenerateGradient { point: Point },
    #[error("edge endpoints do not straddle the interface (phi {phi_i}, {phi_j})")]
    SameSign { phi_i: f64, phi_j: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed level-set file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Analytic(ScalarFn),
    Sampled {
        grid: Arc<SampledGrid>,
        /// Nodal central-difference gradient components.
        grad: Arc<[SampledGrid; 3]>,
        mode: InterpMode,
    },
}

/// Implicit interface, negative inside Ω−.
#[derive(Clone)]
pub struct LevelSetField {
    source: Source,
}

impl std::fmt::Debug for LevelSetField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.source {
            Source::Analytic(_) => f.write_str("LevelSetField::Analytic"),
            Source::Sampled { grid, mode, .. } => write!(f, "LevelSetField::Sampled({:?}, {mode:?})", grid.n),
        }
    }
}

impl LevelSetField {
    pub fn analytic(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self { source: Source::Analytic(Arc::new(f)) }
    }

    pub fn from_fn(f: ScalarFn) -> Self {
        Self { source: Source::Analytic(f) }
    }

    pub fn sampled(grid: SampledGrid, mode: InterpMode) -> Self {
        let d = grid.spacing();
        let grad = std::array::from_fn(|axis| {
            let mut values = Vec::with_capacity(grid.values.len());
            for k in 0..grid.n[2] {
                for j in 0..grid.n[1] {
                    for i in 0..grid.n[0] {
                        let idx = [i, j, k];
                        let (mut a, mut b) = (idx, idx);
                        a[axis] = idx[axis].saturating_sub(1);
                        b[axis] = (idx[axis] + 1).min(grid.n[axis] - 1);
                        let span = (b[axis] - a[axis]) as f64 * d[axis];
                        values.push((grid.node(b[0], b[1], b[2]) - grid.node(a[0], a[1], a[2])) / span);
                    }
                }
            }
            SampledGrid { values, ..grid.clone() }
        });
        Self { source: Source::Sampled { grid: Arc::new(grid), grad: Arc::new(grad), mode } }
    }

    pub fn grid(&self) -> Option<&SampledGrid> {
        match &self.source {
            Source::Sampled { grid, .. } => Some(grid),
            Source::Analytic(_) => None,
        }
    }

    /// φ(x). Sampled fields are extended by clamping queries to the grid box.
    pub fn value(&self, x: Point) -> Result<f64, GeometryError> {
        match &self.source {
            Source::Analytic(f) => Ok(f(x)),
            Source::Sampled { grid, mode, .. } => grid::interpolate(grid, *mode, grid.clamp(x)),
        }
    }

    /// ∇φ(x): symmetric differences with step `h/100` for analytic fields,
    /// interpolated nodal differences for sampled ones.
    pub fn gradient(&self, x: Point, h: f64) -> Result<Point, GeometryError> {
        match &self.source {
            Source::Analytic(f) => {
                let s = h / 100.0;
                Ok(std::array::from_fn(|a| {
                    let e = vec3::axis(a, s);
                    (f(vec3::add(x, e)) - f(vec3::sub(x, e))) / (2.0 * s)
                }))
            }
            Source::Sampled { grid, grad, .. } => {
                let x = grid.clamp(x);
                Ok([
                    interp_trilinear(&grad[0], x)?,
                    interp_trilinear(&grad[1], x)?,
                    interp_trilinear(&grad[2], x)?,
                ])
            }
        }
    }

    /// Unit normal at `x`.
    pub fn normal(&self, x: Point, h: f64) -> Result<Point, GeometryError> {
        let g = self.gradient(x, h)?;
        let m = vec3::norm(g);
        if m < MIN_GRADIENT {
            return Err(GeometryError::DegenerateGradient { point: x });
        }
        Ok(vec3::scale(g, 1.0 / m))
    }
}

/// Unit normal, signed distance estimate φ/|∇φ| and projection onto Γ.
pub fn normal_and_delta(phi: &LevelSetField, x: Point, h: f64) -> Result<(Point, f64, Point), GeometryError> {
    let g = phi.gradient(x, h)?;
    let m = vec3::norm(g);
    if m < MIN_GRADIENT {
        return Err(GeometryError::DegenerateGradient { point: x });
    }
    let n = vec3::scale(g, 1.0 / m);
    let delta = phi.value(x)? / m;
    Ok((n, delta, vec3::axpy(x, -delta, n)))
}

/// ∇·n by central differences of the normal with spacing `h`.
pub fn curvature(phi: &LevelSetField, x: Point, h: f64) -> Result<f64, GeometryError> {
    let mut kappa = 0.0;
    for a in 0..3 {
        let e = vec3::axis(a, h);
        let np = phi.normal(vec3::add(x, e), h)?;
        let nm = phi.normal(vec3::sub(x, e), h)?;
        kappa += (np[a] - nm[a]) / (2.0 * h);
    }
    Ok(kappa)
}

pub fn sphere_phi(center: Point, radius: f64) -> impl Fn(Point) -> f64 + Send + Sync + Clone {
    move |p| vec3::norm(vec3::sub(p, center)) - radius
}

/// Lobes `(n_k, beta_k, theta_k)` of the star-shaped interface.
pub const STAR_LOBES: [(f64, f64, f64); 3] = [(3.0, 0.1, 0.5), (4.0, -0.1, 1.8), (7.0, 0.15, 0.0)];
pub const STAR_R0: f64 = 0.483;

/// Star-shaped level set `r − r0 (1 + ((x²+y²)/r²)² Σ β_k cos(n_k(θ − θ_k)))`,
/// generic over dual numbers so that exact normals can be differentiated.
pub fn star_phi<D: DualNum<Primitive = f64> + Copy>(p: [D; 3]) -> D {
    let rxy2 = p[0] * p[0] + p[1] * p[1];
    let r2 = rxy2 + p[2] * p[2];
    let r = r2.sqrt();
    let theta = p[1].atan2(p[0]);
    let w = rxy2 / (r2 + 1e-30);
    let mut lobes = D::from(0.0);
    for &(n, b, t) in &STAR_LOBES {
        lobes += ((theta - t) * n).cos() * b;
    }
    r - (w * w * lobes + 1.0) * STAR_R0
}
