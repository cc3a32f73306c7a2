use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::discretization::{ProblemSpec, Side};
use crate::geometry::{vec3, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    Interior,
    Boundary,
    Interface,
}

/// A collocation point with the cell size used around it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Collocation {
    pub x: Point,
    pub h: f64,
    pub kind: PointKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingMode {
    /// The `n³` lattice spanning the box, `h = (hi − lo)/(n − 1)`.
    UniformGrid(usize),
    /// Random points by φ sign, on the box faces and on Γ, each with a cell
    /// of side `voxel`.
    PointCloud { n_plus: usize, n_minus: usize, n_boundary: usize, n_interface: usize, voxel: f64 },
}

pub const INTERFACE_TOLERANCE: f64 = 1e-6;
const MAX_REJECTIONS: usize = 10_000_000;

pub fn sample_collocation(spec: &ProblemSpec, mode: SamplingMode, seed: u64) -> Result<Vec<Collocation>, TrainError> {
    match mode {
        SamplingMode::UniformGrid(n) => uniform_grid(spec, n),
        SamplingMode::PointCloud { n_plus, n_minus, n_boundary, n_interface, voxel } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::with_capacity(n_plus + n_minus + n_boundary + n_interface);
            for (side, count) in [(Side::Plus, n_plus), (Side::Minus, n_minus)] {
                let mut tries = 0;
                let mut got = 0;
                while got < count {
                    tries += 1;
                    if tries > MAX_REJECTIONS {
                        return Err(TrainError::Sampling(format!("no {side:?} points found by rejection")));
                    }
                    let x = random_in_box(spec, &mut rng);
                    if spec.side_of(x)? == side && spec.boundary_distance(x) > 0.5 * voxel {
                        pts.push(Collocation { x, h: voxel, kind: PointKind::Interior });
                        got += 1;
                    }
                }
            }
            for i in 0..n_boundary {
                let (axis, upper) = (i % 6 / 2, i % 2 == 1);
                let mut x = random_in_box(spec, &mut rng);
                x[axis] = if upper { spec.hi[axis] } else { spec.lo[axis] };
                pts.push(Collocation { x, h: voxel, kind: PointKind::Boundary });
            }
            let band = 0.1 * (0..3).map(|a| spec.hi[a] - spec.lo[a]).fold(f64::INFINITY, f64::min);
            let mut tries = 0;
            let mut got = 0;
            while got < n_interface {
                tries += 1;
                if tries > MAX_REJECTIONS {
                    return Err(TrainError::Sampling("no interface points found".into()));
                }
                let x = random_in_box(spec, &mut rng);
                if spec.phi.value(x)?.abs() > band {
                    continue;
                }
                if let Some(p) = project_to_interface(spec, x) {
                    if spec.boundary_distance(p) > 0.5 * voxel {
                        pts.push(Collocation { x: p, h: voxel, kind: PointKind::Interface });
                        got += 1;
                    }
                }
            }
            Ok(pts)
        }
    }
}

fn uniform_grid(spec: &ProblemSpec, n: usize) -> Result<Vec<Collocation>, TrainError> {
    if n < 2 {
        return Err(TrainError::InvalidConfig(format!("grid resolution must be at least 2, got {n}")));
    }
    let coord = |a: usize, i: usize| spec.lo[a] + (spec.hi[a] - spec.lo[a]) * i as f64 / (n - 1) as f64;
    let h = (spec.hi[0] - spec.lo[0]) / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let x = [coord(0, i), coord(1, j), coord(2, k)];
                let on_face = [i, j, k].iter().any(|&c| c == 0 || c == n - 1);
                let kind = if on_face { PointKind::Boundary } else { PointKind::Interior };
                pts.push(Collocation { x, h, kind });
            }
        }
    }
    Ok(pts)
}

fn random_in_box(spec: &ProblemSpec, rng: &mut impl Rng) -> Point {
    std::array::from_fn(|a| rng.random_range(spec.lo[a]..spec.hi[a]))
}

/// Newton-like steps `x ← x − φ ∇φ/|∇φ|²` until `|φ| ≤ 1e-6`.
pub fn project_to_interface(spec: &ProblemSpec, mut x: Point) -> Option<Point> {
    let h = 1e-3 * (spec.hi[0] - spec.lo[0]);
    for _ in 0..100 {
        let phi = spec.phi.value(x).ok()?;
        if phi.abs() <= INTERFACE_TOLERANCE {
            return Some(x);
        }
        let g = spec.phi.gradient(x, h).ok()?;
        let g2 = vec3::dot(g, g);
        if g2 < 1e-24 {
            return None;
        }
        x = vec3::axpy(x, -phi / g2, g);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_problem;

    #[test]
    fn grid_of_two_is_the_corners() {
        let s = builtin_problem("bulk").unwrap();
        let p = sample_collocation(&s, SamplingMode::UniformGrid(2), 0).unwrap();
        assert_eq!(p.len(), 8);
        assert!(p.iter().all(|c| c.x.iter().all(|v| v.abs() == 1.0) && c.h == 2.0 && c.kind == PointKind::Boundary));
    }

    #[test]
    fn point_cloud_filters_and_projects() {
        let s = builtin_problem("sphere").unwrap();
        let mode = SamplingMode::PointCloud { n_plus: 100, n_minus: 0, n_boundary: 0, n_interface: 0, voxel: 0.01 };
        let p = sample_collocation(&s, mode, 1).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.iter().all(|c| s.phi.value(c.x).unwrap() > 0.0));
        let mode = SamplingMode::PointCloud { n_plus: 5, n_minus: 7, n_boundary: 12, n_interface: 50, voxel: 0.01 };
        let p = sample_collocation(&s, mode, 2).unwrap();
        assert_eq!(p.len(), 74);
        let gamma: Vec<_> = p.iter().filter(|c| c.kind == PointKind::Interface).collect();
        assert_eq!(gamma.len(), 50);
        assert!(gamma.iter().all(|c| s.phi.value(c.x).unwrap().abs() <= 1e-6));
        let faces = p.iter().filter(|c| c.kind == PointKind::Boundary);
        assert!(faces.clone().all(|c| s.boundary_distance(c.x) == 0.0));
        assert_eq!(faces.filter(|c| c.x[2] == -1.0).count(), 2);
        assert_eq!(p, sample_collocation(&s, mode, 2).unwrap());
    }
}
