//! 26-point neighbourhoods and one-sided least-squares normal derivatives.

use super::{DiscretizationError, ProblemSpec, Side};
use crate::geometry::{vec3, GeometryError, Point};

/// Neighbour offsets `(p, q, r)` with `p` varying fastest; the origin is skipped.
pub const OFFSETS: [[i32; 3]; 26] = {
    let mut out = [[0; 3]; 26];
    let mut n = 0;
    let mut r = -1;
    while r <= 1 {
        let mut q = -1;
        while q <= 1 {
            let mut p = -1;
            while p <= 1 {
                if !(p == 0 && q == 0 && r == 0) {
                    out[n] = [p, q, r];
                    n += 1;
                }
                p += 1;
            }
            q += 1;
        }
        r += 1;
    }
    out
};

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborStencil {
    pub center: Point,
    pub h: f64,
    pub positions: [Point; 26],
    pub membership_minus: [bool; 26],
    pub membership_plus: [bool; 26],
}

impl NeighborStencil {
    pub fn members(&self, side: Side) -> &[bool; 26] {
        match side {
            Side::Minus => &self.membership_minus,
            Side::Plus => &self.membership_plus,
        }
    }
}

pub fn build_stencil(spec: &ProblemSpec, center: Point, h: f64) -> Result<NeighborStencil, GeometryError> {
    let positions = OFFSETS.map(|o| {
        [center[0] + o[0] as f64 * h, center[1] + o[1] as f64 * h, center[2] + o[2] as f64 * h]
    });
    let mut membership_minus = [false; 26];
    for (m, p) in membership_minus.iter_mut().zip(&positions) {
        *m = spec.side_of(*p)? == Side::Minus;
    }
    Ok(NeighborStencil { center, h, positions, membership_minus, membership_plus: membership_minus.map(|m| !m) })
}

fn offset(i: usize) -> Point {
    OFFSETS[i].map(|v| v as f64)
}

fn solve_coeffs(mask: &[bool; 26], normal: Point, h: f64) -> Option<(f64, [f64; 26])> {
    let mut m = [[0.0f64; 3]; 3];
    for (i, _) in mask.iter().enumerate().filter(|(_, &on)| on) {
        let o = offset(i);
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += o[a] * o[b];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| vec3::det3(m[0], m[1], m[2]);
    // integer matrix: singular exactly when the determinant is zero
    if det(&m).abs() < 0.5 {
        return None;
    }
    let shift = 1e-12 * (m[0][0] + m[1][1] + m[2][2]);
    for a in 0..3 {
        m[a][a] += shift;
    }
    let d = det(&m);
    let inv: [[f64; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            let (r1, r2, c1, c2) = ((c + 1) % 3, (c + 2) % 3, (r + 1) % 3, (r + 2) % 3);
            (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / d
        })
    });
    // n^T (X^T W X)^{-1} with X rows h·o and the h² scaling folded in
    let w: Point = std::array::from_fn(|c| (0..3).map(|r| normal[r] * inv[r][c]).sum::<f64>() / h);
    let mut c = [0.0; 26];
    for (i, ci) in c.iter_mut().enumerate() {
        if mask[i] {
            *ci = vec3::dot(w, offset(i));
        }
    }
    Some((-c.iter().sum::<f64>(), c))
}

/// Coefficients of `∂n u ≈ c_center u_center + Σ c_i u_i` fitted on the
/// neighbours of `side`.
pub fn ls_normal_coeffs(
    st: &NeighborStencil,
    normal: Point,
    side: Side,
    h: f64,
) -> Result<(f64, [f64; 26]), DiscretizationError> {
    let mask = st.members(side);
    if mask.iter().filter(|&&m| m).count() < 3 {
        return Err(DiscretizationError::DegenerateStencil { point: st.center, side });
    }
    solve_coeffs(mask, normal, h).ok_or(DiscretizationError::DegenerateStencil { point: st.center, side })
}

/// The same fit over all 26 neighbours.
pub fn ls_normal_coeffs_unweighted(normal: Point, h: f64) -> (f64, [f64; 26]) {
    solve_coeffs(&[true; 26], normal, h).expect("full neighbourhood is nonsingular")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(phi: impl Fn(Point) -> f64 + Send + Sync + 'static) -> ProblemSpec {
        ProblemSpec::template("t", [-1.0; 3], [1.0; 3], LevelSetField::analytic(phi))
    }

    fn apply(st: &NeighborStencil, c: (f64, [f64; 26]), u: impl Fn(Point) -> f64) -> f64 {
        c.0 * u(st.center) + (0..26).map(|i| c.1[i] * u(st.positions[i])).sum::<f64>()
    }

    #[test]
    fn offsets_are_ordered_and_complete() {
        assert_eq!(OFFSETS[0], [-1, -1, -1]);
        assert_eq!(OFFSETS[1], [0, -1, -1]);
        assert_eq!(OFFSETS[13], [1, 0, 0]);
        assert_eq!(OFFSETS[25], [1, 1, 1]);
        assert!(!OFFSETS.contains(&[0, 0, 0]));
    }

    #[test]
    fn membership_cases() {
        let deep = build_stencil(&spec(|_| -1.0), [0.0; 3], 0.1).unwrap();
        assert!(deep.membership_minus.iter().all(|&m| m));
        let plane = build_stencil(&spec(|p| p[0]), [0.0; 3], 0.1).unwrap();
        for (i, o) in OFFSETS.iter().enumerate() {
            assert_eq!(plane.membership_minus[i], o[0] <= 0, "offset {o:?}");
            assert!(plane.membership_minus[i] ^ plane.membership_plus[i]);
        }
        assert_eq!(OFFSETS.iter().filter(|o| o[0] == -1).count(), 9);
    }

    #[test]
    fn constant_and_linear_fields() {
        let st = build_stencil(&spec(|_| -1.0), [0.1, 0.2, 0.3], 0.05).unwrap();
        let c = ls_normal_coeffs(&st, [1.0, 0.0, 0.0], Side::Minus, 0.05).unwrap();
        assert!(apply(&st, c, |_| 4.2).abs() < 1e-12);
        let lin = |p: Point| 2.0 * p[0] + 3.0 * p[1] - p[2];
        assert!((apply(&st, c, lin) - 2.0).abs() < 1e-9);
        let n = [0.6, 0.0, 0.8];
        let c = ls_normal_coeffs(&st, n, Side::Minus, 0.05).unwrap();
        assert!((apply(&st, c, lin) - (1.2 - 0.8)).abs() < 1e-9);
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 0.1;
        for _ in 0..50 {
            let mut st = build_stencil(&spec(|_| -1.0), [0.0; 3], h).unwrap();
            for m in st.membership_plus.iter_mut() {
                *m = rng.random::<f64>() < 0.5;
            }
            let n = {
                let v = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                vec3::scale(v, 1.0 / vec3::norm(v))
            };
            let Ok(c) = ls_normal_coeffs(&st, n, Side::Plus, h) else { continue };
            let u: Vec<f64> = (0..27).map(|_| rng.random::<f64>()).collect();
            // oracle: Gaussian elimination on [X^T W X | X^T W du]
            let mut a = [[0.0f64; 4]; 3];
            for i in 0..26 {
                if !st.membership_plus[i] {
                    continue;
                }
                let x = vec3::scale(offset(i), h);
                let du = u[i] - u[26];
                for r in 0..3 {
                    for s in 0..3 {
                        a[r][s] += x[r] * x[s];
                    }
                    a[r][3] += x[r] * du;
                }
            }
            for col in 0..3 {
                let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
                a.swap(col, piv);
                for r in 0..3 {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        for s in 0..4 {
                            a[r][s] -= f * a[col][s];
                        }
                    }
                }
            }
            let grad: Point = std::array::from_fn(|r| a[r][3] / a[r][r]);
            let est = c.0 * u[26] + (0..26).map(|i| c.1[i] * u[i]).sum::<f64>();
            assert!((est - vec3::dot(n, grad)).abs() < 1e-8 * (1.0 + est.abs()));
        }
    }

    #[test]
    fn degenerate_sides_rejected() {
        let h = 0.1;
        let mut st = build_stencil(&spec(|_| -1.0), [0.0; 3], h).unwrap();
        // two members only
        st.membership_plus = [false; 26];
        st.membership_plus[0] = true;
        st.membership_plus[1] = true;
        assert!(ls_normal_coeffs(&st, [1.0, 0.0, 0.0], Side::Plus, h).is_err());
        // coplanar members (all with r = 0)
        st.membership_plus = OFFSETS.map(|o| o[2] == 0);
        assert!(ls_normal_coeffs(&st, [1.0, 0.0, 0.0], Side::Plus, h).is_err());
        let full = ls_normal_coeffs_unweighted([0.0, 0.0, 1.0], h);
        assert!((full.1[25] - 1.0 / (18.0 * h)).abs() < 1e-9);
    }
}
