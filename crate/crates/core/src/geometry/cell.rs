//! Geometric summary of an implicit cube cell around a collocation point.

use arrayvec::ArrayVec;

use super::simplex::{cube_corner, intersect_simplex, triangle_negative_area, Simplex, Triangle, MIDDLE_CUT};
use super::vec3::{self, Point};
use super::{normal_and_delta, GeometryError, LevelSetField};

/// Faces in the order x−, x+, y−, y+, z−, z+.
pub const FACES: [(usize, usize); 6] = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)];

#[derive(Clone, Debug)]
pub struct CellGeometry {
    pub center: Point,
    pub h: f64,
    pub vol_minus: f64,
    pub vol_plus: f64,
    pub face_area_minus: [f64; 6],
    pub face_area_plus: [f64; 6],
    pub interface_simplices: Vec<Triangle>,
    pub normal: Point,
    pub delta: f64,
    pub proj: Point,
    /// Whether φ changes sign among the corners and the center.
    pub crossed: bool,
}

impl CellGeometry {
    pub fn interface_area(&self) -> f64 {
        self.interface_simplices.iter().map(Triangle::area).sum()
    }

    /// Midpoint of face `f` (see [`FACES`]).
    pub fn face_center(&self, f: usize) -> Point {
        let (axis, side) = FACES[f];
        let s = if side == 1 { 0.5 } else { -0.5 };
        vec3::axpy(self.center, s * self.h, vec3::axis(axis, 1.0))
    }
}

/// For each face, the corner triples of the middle-cut tetrahedra that lie on it.
fn face_triangles() -> [ArrayVec<[usize; 3], 2>; 6] {
    std::array::from_fn(|f| {
        let (axis, side) = FACES[f];
        MIDDLE_CUT
            .iter()
            .filter_map(|tet| {
                let on: ArrayVec<usize, 4> = tet.iter().copied().filter(|c| (c >> axis) & 1 == side).collect();
                (on.len() == 3).then(|| [on[0], on[1], on[2]])
            })
            .collect()
    })
}

/// Corner values with exact zeros moved just inside Ω−.
pub fn corner_values(phi: &LevelSetField, lo: Point, h: f64) -> Result<[f64; 8], GeometryError> {
    let mut out = [0.0; 8];
    for (c, slot) in out.iter_mut().enumerate() {
        let v = phi.value(cube_corner(lo, h, c))?;
        *slot = if v == 0.0 { -1e-12 * h } else { v };
    }
    Ok(out)
}

pub fn cell_geometry(phi: &LevelSetField, center: Point, h: f64) -> Result<CellGeometry, GeometryError> {
    let lo = vec3::axpy(center, -0.5 * h, [1.0; 3]);
    let values = corner_values(phi, lo, h)?;
    let neg_corners = values.iter().filter(|&&v| v <= 0.0).count();
    let center_neg = phi.value(center)? <= 0.0;
    let corners_cut = neg_corners != 0 && neg_corners != 8;
    let crossed = corners_cut || center_neg != (neg_corners == 8);
    let cell_volume = h * h * h;
    let face_area = h * h;

    let (vol_minus, face_area_minus, interface_simplices) = if !corners_cut {
        let inside = neg_corners == 8;
        let v = if inside { cell_volume } else { 0.0 };
        let a = if inside { face_area } else { 0.0 };
        (v, [a; 6], Vec::new())
    } else {
        let mut vol = 0.0;
        let mut gamma = Vec::new();
        for tet in MIDDLE_CUT {
            let s = Simplex { vertices: tet.map(|c| cube_corner(lo, h, c)) };
            let cut = intersect_simplex(&s, tet.map(|c| values[c]));
            vol += cut.negative_volume();
            gamma.extend(cut.gamma);
        }
        let faces = face_triangles();
        let areas = std::array::from_fn(|f| {
            faces[f]
                .iter()
                .map(|tri| {
                    let t = Simplex { vertices: tri.map(|c| cube_corner(lo, h, c)) };
                    triangle_negative_area(&t, tri.map(|c| values[c]))
                })
                .sum::<f64>()
        });
        (vol.min(cell_volume), areas, gamma)
    };
    let face_area_plus = face_area_minus.map(|a| face_area - a);

    let (normal, delta, proj) = match normal_and_delta(phi, center, h) {
        Ok(ndp) => ndp,
        Err(GeometryError::DegenerateGradient { .. }) if crossed => corner_fallback(phi, center, lo, h)?,
        Err(GeometryError::DegenerateGradient { .. }) => ([0.0; 3], 0.0, center),
        Err(e) => return Err(e),
    };

    Ok(CellGeometry {
        center,
        h,
        vol_minus,
        vol_plus: cell_volume - vol_minus,
        face_area_minus,
        face_area_plus,
        interface_simplices,
        normal,
        delta,
        proj,
        crossed,
    })
}

/// [`normal_and_delta`] at `x`, falling back to the corner of the cell of
/// side `h` around `x` with the largest gradient when ∇φ(x) vanishes.
pub fn normal_with_fallback(phi: &LevelSetField, x: Point, h: f64) -> Result<(Point, f64, Point), GeometryError> {
    match normal_and_delta(phi, x, h) {
        Err(GeometryError::DegenerateGradient { .. }) => corner_fallback(phi, x, vec3::axpy(x, -0.5 * h, [1.0; 3]), h),
        other => other,
    }
}

/// Normal taken from the cell corner with the largest gradient magnitude.
pub(crate) fn corner_fallback(phi: &LevelSetField, center: Point, lo: Point, h: f64) -> Result<(Point, f64, Point), GeometryError> {
    let mut best: Option<(f64, Point)> = None;
    for c in 0..8 {
        let g = phi.gradient(cube_corner(lo, h, c), h)?;
        let m = vec3::norm(g);
        if best.map_or(true, |(bm, _)| m > bm) {
            best = Some((m, g));
        }
    }
    let (m, g) = best.unwrap();
    if m < super::MIN_GRADIENT {
        return Err(GeometryError::DegenerateGradient { point: center });
    }
    let n = vec3::scale(g, 1.0 / m);
    let delta = phi.value(center)? / m;
    Ok((n, delta, vec3::axpy(center, -delta, n)))
}
