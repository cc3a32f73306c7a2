//! Middle-cut cube triangulation and linear-interface clipping of simplices.

use arrayvec::ArrayVec;

use super::vec3::{self, Point};
use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simplex<const N: usize> {
    pub vertices: [Point; N],
}

pub type Tetrahedron = Simplex<4>;
pub type Triangle = Simplex<3>;

impl Tetrahedron {
    pub fn volume(&self) -> f64 {
        let [a, b, c, d] = self.vertices;
        vec3::det3(vec3::sub(b, a), vec3::sub(c, a), vec3::sub(d, a)).abs() / 6.0
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        barycentric(self, p).map_or(false, |l| l.iter().all(|&x| x >= -tol))
    }
}

impl Triangle {
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
    }
}

/// Measure of a simplex: area for triangles, volume for tetrahedra.
pub trait Measure {
    fn measure(&self) -> f64;
}

impl Measure for Triangle {
    fn measure(&self) -> f64 {
        self.area()
    }
}

impl Measure for Tetrahedron {
    fn measure(&self) -> f64 {
        self.volume()
    }
}

fn barycentric(t: &Tetrahedron, p: Point) -> Option<[f64; 4]> {
    let [a, b, c, d] = t.vertices;
    let (e1, e2, e3, q) = (vec3::sub(b, a), vec3::sub(c, a), vec3::sub(d, a), vec3::sub(p, a));
    let det = vec3::det3(e1, e2, e3);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = vec3::det3(q, e2, e3) / det;
    let l2 = vec3::det3(e1, q, e3) / det;
    let l3 = vec3::det3(e1, e2, q) / det;
    Some([1.0 - l1 - l2 - l3, l1, l2, l3])
}

/// Corner `c` of a cube (bit 0 → x, bit 1 → y, bit 2 → z).
#[inline]
pub fn cube_corner(lo: Point, h: f64, c: usize) -> Point {
    [
        lo[0] + h * (c & 1) as f64,
        lo[1] + h * ((c >> 1) & 1) as f64,
        lo[2] + h * ((c >> 2) & 1) as f64,
    ]
}

/// Corner indices of the five middle-cut tetrahedra. The last one is the
/// central tetrahedron with twice the volume of the others.
pub const MIDDLE_CUT: [[usize; 4]; 5] = [
    [0b000, 0b001, 0b010, 0b100],
    [0b011, 0b001, 0b010, 0b111],
    [0b101, 0b001, 0b111, 0b100],
    [0b110, 0b111, 0b010, 0b100],
    [0b111, 0b001, 0b010, 0b100],
];

/// The five tetrahedra of the cube `[lo, lo + h]^3`.
pub fn triangulate_cell(lo: Point, h: f64) -> [Tetrahedron; 5] {
    MIDDLE_CUT.map(|idx| Simplex { vertices: idx.map(|c| cube_corner(lo, h, c)) })
}

/// Root of the linear interpolant of `phi` along the segment `pi`-`pj`.
pub fn edge_intersection(pi: Point, pj: Point, phi_i: f64, phi_j: f64) -> Result<Point, GeometryError> {
    if phi_i * phi_j > 0.0 || phi_i == phi_j {
        return Err(GeometryError::SameSign { phi_i, phi_j });
    }
    Ok(edge_point(pi, pj, phi_i, phi_j))
}

#[inline]
fn edge_point(pi: Point, pj: Point, phi_i: f64, phi_j: f64) -> Point {
    let d = phi_i - phi_j;
    vec3::sub(vec3::scale(pj, phi_i / d), vec3::scale(pi, phi_j / d))
}

/// Pieces of a tetrahedron cut by the zero level of a linear field.
#[derive(Clone, Debug, Default)]
pub struct SimplexCut {
    pub gamma: ArrayVec<Triangle, 2>,
    pub negative: ArrayVec<Tetrahedron, 3>,
}

impl SimplexCut {
    pub fn negative_volume(&self) -> f64 {
        self.negative.iter().map(Tetrahedron::volume).sum()
    }
}

fn prism_tets(a: [Point; 3], b: [Point; 3]) -> [Tetrahedron; 3] {
    [
        Simplex { vertices: [a[0], a[1], a[2], b[0]] },
        Simplex { vertices: [a[1], a[2], b[0], b[1]] },
        Simplex { vertices: [a[2], b[0], b[1], b[2]] },
    ]
}

/// Clips `s` against `phi <= 0`, with `phi` linear between the vertex values.
/// Vertices with `phi == 0` count as negative.
pub fn intersect_simplex(s: &Tetrahedron, phi: [f64; 4]) -> SimplexCut {
    let mut neg: ArrayVec<usize, 4> = ArrayVec::new();
    let mut pos: ArrayVec<usize, 4> = ArrayVec::new();
    for (i, &p) in phi.iter().enumerate() {
        if p <= 0.0 {
            neg.push(i);
        } else {
            pos.push(i);
        }
    }
    let v = &s.vertices;
    let cut = |a: usize, b: usize| edge_point(v[a], v[b], phi[a], phi[b]);
    let mut out = SimplexCut::default();
    match neg.len() {
        0 => {}
        1 => {
            let n = neg[0];
            let p = [cut(n, pos[0]), cut(n, pos[1]), cut(n, pos[2])];
            out.gamma.push(Simplex { vertices: p });
            out.negative.push(Simplex { vertices: [v[n], p[0], p[1], p[2]] });
        }
        2 => {
            let (n0, n1, q0, q1) = (neg[0], neg[1], pos[0], pos[1]);
            let (p00, p01, p10, p11) = (cut(n0, q0), cut(n0, q1), cut(n1, q0), cut(n1, q1));
            out.gamma.push(Simplex { vertices: [p00, p01, p11] });
            out.gamma.push(Simplex { vertices: [p00, p11, p10] });
            out.negative.extend(prism_tets([v[n0], p00, p01], [v[n1], p10, p11]));
        }
        3 => {
            let q = pos[0];
            let p = [cut(neg[0], q), cut(neg[1], q), cut(neg[2], q)];
            out.gamma.push(Simplex { vertices: p });
            out.negative.extend(prism_tets([v[neg[0]], v[neg[1]], v[neg[2]]], p));
        }
        _ => out.negative.push(*s),
    }
    out
}

/// `∫_S f` for `f` linear on `S`, from its vertex values.
pub fn integrate_simplex<const N: usize>(s: &Simplex<N>, f: [f64; N]) -> f64
where
    Simplex<N>: Measure,
{
    s.measure() * f.iter().sum::<f64>() / N as f64
}

/// Area of the part of a triangle where the linear interpolant of `phi` is
/// nonpositive.
pub fn triangle_negative_area(t: &Triangle, phi: [f64; 3]) -> f64 {
    let area = t.area();
    let neg: ArrayVec<usize, 3> = (0..3).filter(|&i| phi[i] <= 0.0).collect();
    // fraction of the triangle cut off around a lone vertex `a`
    let corner_fraction = |a: usize| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        (phi[a] / (phi[a] - phi[b])) * (phi[a] / (phi[a] - phi[c]))
    };
    match neg.len() {
        0 => 0.0,
        1 => area * corner_fraction(neg[0]),
        2 => {
            let p = (0..3).find(|i| !neg.contains(i)).unwrap();
            area * (1.0 - corner_fraction(p))
        }
        _ => area,
    }
}
