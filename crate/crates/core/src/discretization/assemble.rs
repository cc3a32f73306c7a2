//! Per-point residual assembly: finite volumes with jump handling,
//! Dirichlet rows and the pointwise PINN residuals.

use std::str::FromStr;

use super::rules::{opposite_rule, BiasMode, NodeFrame};
use super::{AffineResidual, DiscretizationError, EvalKind, Evaluation, LinearForm, PointResidual, ProblemSpec, Side};
use crate::geometry::{cell_geometry, normal_and_delta, vec3, CellGeometry, Point, FACES};

/// How values on the far side of Γ are obtained at nodes near the interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Approach {
    /// Least-squares extrapolation rules.
    #[default]
    Regression,
    /// Taylor extrapolation with the network's own normal derivative.
    NeuralExtrapolation,
}

impl FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(Approach::Regression),
            "neural" => Ok(Approach::NeuralExtrapolation),
            other => Err(format!("unknown approach {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AssemblyOptions {
    pub approach: Approach,
    pub bias: BiasMode,
}

/// `u^side(x)` as an affine form in network outputs.
pub fn node_value_form(
    spec: &ProblemSpec,
    side: Side,
    x: Point,
    h: f64,
    opts: &AssemblyOptions,
) -> Result<LinearForm, DiscretizationError> {
    let own = spec.side_of(x)?;
    if own == side {
        return Ok(LinearForm::single(Evaluation::value(side, x), 0, 1.0));
    }
    match opts.approach {
        Approach::Regression => {
            let frame = NodeFrame::new(spec, x, h, true)?;
            Ok(opposite_rule(spec, &frame, opts.bias)?.to_form(&frame))
        }
        Approach::NeuralExtrapolation => {
            let frame = NodeFrame::new(spec, x, h, false)?;
            Ok(neural_form(spec, &frame))
        }
    }
}

/// `(coefficient of ∂n u^K(proj), constant)` with
/// `u^other(x) = u^K(x) + coefficient·∂n u^K(proj) + constant`.
fn neural_coefficients(spec: &ProblemSpec, known: Side, delta: f64, proj: Point) -> (f64, f64) {
    let (mu_m, mu_p) = (spec.mu(Side::Minus, proj), spec.mu(Side::Plus, proj));
    let (alpha, beta) = ((spec.alpha)(proj), (spec.beta)(proj));
    match known {
        Side::Minus => (delta * (mu_m / mu_p - 1.0), alpha + delta * beta / mu_p),
        Side::Plus => (-delta * (1.0 - mu_p / mu_m), -alpha - delta * beta / mu_m),
    }
}

fn neural_form(spec: &ProblemSpec, frame: &NodeFrame) -> LinearForm {
    let k = frame.side;
    let (cd, c0) = neural_coefficients(spec, k, frame.delta, frame.proj);
    let mut f = LinearForm::single(Evaluation::value(k, frame.x), 0, 1.0);
    f.push(Evaluation { side: k, pos: frame.proj, kind: EvalKind::Directional(frame.normal) }, 1, cd);
    f.constant = c0;
    f
}

/// `(u⁻, u⁺)` at a node from the known side's value and its normal
/// derivative at the projection point.
pub fn neural_extrapolation_pair(
    spec: &ProblemSpec,
    geom: &CellGeometry,
    u_known: f64,
    dnu_known: f64,
    known_side: Side,
) -> (f64, f64) {
    let (cd, c0) = neural_coefficients(spec, known_side, geom.delta, geom.proj);
    let other = u_known + cd * dnu_known + c0;
    match known_side {
        Side::Minus => (u_known, other),
        Side::Plus => (other, u_known),
    }
}

/// `u⁺ − u⁻ − α − δ(...)` using the normal derivative of side
/// `side_of_derivative` at the projection point.
pub fn pinn_interface_residual(
    spec: &ProblemSpec,
    geom: &CellGeometry,
    u_m: f64,
    u_p: f64,
    dnu: f64,
    side_of_derivative: Side,
) -> f64 {
    let (cd, c0) = neural_coefficients(spec, side_of_derivative, geom.delta, geom.proj);
    // both forms rewrite to u^other − u^K − cd·∂n − c0 = 0
    match side_of_derivative {
        Side::Minus => u_p - u_m - cd * dnu - c0,
        Side::Plus => -(u_m - u_p - cd * dnu - c0),
    }
}

/// Residual `u(x) − g(x)` with unit scaling.
pub fn dirichlet_row(spec: &ProblemSpec, x: Point) -> Result<AffineResidual, DiscretizationError> {
    let side = spec.side_of(x)?;
    let mut form = LinearForm::single(Evaluation::value(side, x), 0, 1.0);
    form.constant = -(spec.dirichlet)(x);
    Ok(AffineResidual { form, diag: 1.0 })
}

/// ∫_Γ β over the interface triangles with β taken at projected vertices.
fn integrate_beta(spec: &ProblemSpec, geom: &CellGeometry) -> f64 {
    geom.interface_simplices
        .iter()
        .map(|t| {
            let mean = t
                .vertices
                .iter()
                .map(|&v| {
                    let p = normal_and_delta(&spec.phi, v, geom.h).map(|(_, _, p)| p).unwrap_or(v);
                    (spec.beta)(p)
                })
                .sum::<f64>()
                / 3.0;
            t.area() * mean
        })
        .sum()
}

/// Finite-volume residual of the cell of side `h` centred at `center`, or
/// the Dirichlet row when the center lies within `h/2` of the box boundary.
pub fn assemble_point(
    spec: &ProblemSpec,
    center: Point,
    h: f64,
    opts: &AssemblyOptions,
) -> Result<AffineResidual, DiscretizationError> {
    if spec.boundary_distance(center) <= 0.5 * h {
        return dirichlet_row(spec, center);
    }
    let geom = cell_geometry(&spec.phi, center, h)?;
    assemble_cell(spec, &geom, opts)
}

pub(crate) fn assemble_cell(
    spec: &ProblemSpec,
    geom: &CellGeometry,
    opts: &AssemblyOptions,
) -> Result<AffineResidual, DiscretizationError> {
    let (center, h) = (geom.center, geom.h);
    let mut form = LinearForm::default();
    let mut diag = 0.0;
    for side in Side::BOTH {
        let (vol, areas) = match side {
            Side::Minus => (geom.vol_minus, &geom.face_area_minus),
            Side::Plus => (geom.vol_plus, &geom.face_area_plus),
        };
        if vol <= 0.0 && areas.iter().all(|&a| a <= 0.0) {
            continue;
        }
        let uc = node_value_form(spec, side, center, h, opts)?;
        let mut center_coeff = spec.k(side, center) * vol;
        form.constant -= spec.f(side, center) * vol;
        for (f, &area) in areas.iter().enumerate() {
            if area <= 0.0 {
                continue;
            }
            let (axis, dir) = FACES[f];
            let sign = if dir == 1 { 1.0 } else { -1.0 };
            let t = spec.mu(side, geom.face_center(f)) * area / h;
            let nb = vec3::axpy(center, sign * h, vec3::axis(axis, 1.0));
            let unb = node_value_form(spec, side, nb, h, opts)?;
            form.add_scaled(&unb, -t);
            center_coeff += t;
        }
        form.add_scaled(&uc, center_coeff);
        diag += center_coeff;
    }
    form.constant += integrate_beta(spec, geom);
    Ok(AffineResidual { form, diag })
}

/// Evaluates the point residual with network outputs from `u`.
pub fn fv_residual(
    spec: &ProblemSpec,
    center: Point,
    h: f64,
    opts: &AssemblyOptions,
    u: impl FnMut(&Evaluation, u8) -> f64,
) -> Result<PointResidual, DiscretizationError> {
    Ok(assemble_point(spec, center, h, opts)?.evaluate(u))
}

/// Strong-form residual `k u − μΔu − ∇μ·∇u − f` on the side containing `x`.
pub fn pinn_bulk_row(spec: &ProblemSpec, x: Point) -> Result<AffineResidual, DiscretizationError> {
    let side = spec.side_of(x)?;
    let e = Evaluation { side, pos: x, kind: EvalKind::AxisJet2 };
    let mu = spec.mu(side, x);
    let gmu = spec.grad_mu(side, x);
    let mut form = LinearForm::default();
    form.push(e, 0, spec.k(side, x));
    for a in 0..3 {
        form.push(e, 1 + a as u8, -gmu[a]);
        form.push(e, 4 + a as u8, -mu);
    }
    form.constant = -spec.f(side, x);
    Ok(AffineResidual { form, diag: 1.0 })
}

/// Interface residual at `x` with the normal derivative of the side that
/// contains `x`.
pub fn pinn_interface_row(spec: &ProblemSpec, x: Point, h: f64) -> Result<AffineResidual, DiscretizationError> {
    let frame = NodeFrame::new(spec, x, h, false)?;
    let k = frame.side;
    let (cd, c0) = neural_coefficients(spec, k, frame.delta, frame.proj);
    let s = if k == Side::Minus { 1.0 } else { -1.0 };
    let mut form = LinearForm::default();
    form.push(Evaluation::value(k.opposite(), x), 0, s);
    form.push(Evaluation::value(k, x), 0, -s);
    form.push(Evaluation { side: k, pos: frame.proj, kind: EvalKind::Directional(frame.normal) }, 1, -s * cd);
    form.constant = -s * c0;
    Ok(AffineResidual { form, diag: 1.0 })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::problems::builtin_problem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Network outputs replaced by the exact solution, derivatives by
    /// central differences.
    pub(crate) fn exact_outputs(spec: &ProblemSpec) -> impl Fn(&Evaluation, u8) -> f64 + '_ {
        move |e, o| {
            let u = spec.exact(e.side).unwrap();
            let t = 1e-4;
            let d = |v: Point| (u(vec3::axpy(e.pos, t, v)) - u(vec3::axpy(e.pos, -t, v))) / (2.0 * t);
            match (e.kind, o) {
                (_, 0) => u(e.pos),
                (EvalKind::Directional(v), 1) => d(v),
                (EvalKind::AxisJet2, 1..=3) => d(vec3::axis(o as usize - 1, 1.0)),
                (EvalKind::AxisJet2, 4..=6) => {
                    let a = vec3::axis(o as usize - 4, 1.0);
                    let s = 1e-3;
                    (u(vec3::axpy(e.pos, s, a)) - 2.0 * u(e.pos) + u(vec3::axpy(e.pos, -s, a))) / (s * s)
                }
                _ => unreachable!(),
            }
        }
    }

    fn scaled_residual(spec: &ProblemSpec, x: Point, h: f64, opts: &AssemblyOptions) -> f64 {
        let r = fv_residual(spec, x, h, opts, exact_outputs(spec)).unwrap();
        r.residual / r.diag
    }

    fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
        let n = hs.len() as f64;
        let (lx, ly): (Vec<f64>, Vec<f64>) = hs.iter().zip(errs).map(|(h, e)| (h.ln(), e.ln())).unzip();
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    }

    /// Mean |r/diag| over cells that keep their position relative to Γ
    /// as h shrinks.
    fn crossed_order(spec: &ProblemSpec, opts: &AssemblyOptions) -> f64 {
        let spec = spec.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut anchors = Vec::new();
        while anchors.len() < 40 {
            let x: Point = std::array::from_fn(|_| rng.random_range(-0.6..0.6));
            let Ok((n, _, p)) = normal_and_delta(&spec.phi, x, 1e-3) else { continue };
            if spec.phi.value(p).unwrap().abs() > 1e-6 {
                continue;
            }
            anchors.push((p, n, rng.random_range(-0.3..0.3)));
        }
        let hs = [0.08, 0.04, 0.02, 0.01];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                anchors.iter().map(|&(p, n, s)| scaled_residual(&spec, vec3::axpy(p, s * h, n), h, opts).abs()).sum::<f64>()
                    / anchors.len() as f64
            })
            .collect();
        fitted_order(&hs, &errs)
    }

    fn uncrossed_order(name: &str) -> f64 {
        let spec = builtin_problem(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hs = [0.08, 0.04, 0.02, 0.01];
        let mut centers = Vec::new();
        while centers.len() < 40 {
            let x: Point = std::array::from_fn(|_| rng.random_range(-0.7..0.7));
            if spec.phi.value(x).unwrap().abs() > 0.3 {
                centers.push(x);
            }
        }
        let opts = AssemblyOptions::default();
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| centers.iter().map(|&x| scaled_residual(&spec, x, h, &opts).abs()).sum::<f64>() / 40.0)
            .collect();
        fitted_order(&hs, &errs)
    }

    #[test]
    fn uncrossed_truncation_orders() {
        for name in ["bulk", "sphere", "star"] {
            let p = uncrossed_order(name);
            assert!(p > 3.5, "{name}: {p}");
        }
    }

    #[test]
    fn crossed_truncation_orders() {
        for name in ["sphere", "star"] {
            for approach in [Approach::Regression, Approach::NeuralExtrapolation] {
                for bias in [BiasMode::Slow, BiasMode::Fast] {
                    let opts = AssemblyOptions { approach, bias };
                    let p = crossed_order(&builtin_problem(name).unwrap(), &opts);
                    assert!(p > 1.8, "{name} {opts:?}: {p}");
                }
            }
        }
    }

    /// Wrong jump data must be visible in the truncation order.
    #[test]
    fn flipped_jump_data_breaks_consistency() {
        let opts = AssemblyOptions::default();
        let mut spec = builtin_problem("sphere").unwrap();
        let beta = spec.beta.clone();
        spec.beta = std::sync::Arc::new(move |x| -beta(x));
        let p = crossed_order(&spec, &opts);
        assert!(p < 1.3, "{p}");
        let mut spec = builtin_problem("sphere").unwrap();
        let alpha = spec.alpha.clone();
        spec.alpha = std::sync::Arc::new(move |x| -alpha(x));
        let p = crossed_order(&spec, &opts);
        assert!(p < 0.5, "{p}");
    }

    #[test]
    fn constant_field_has_zero_residual() {
        let mut spec = builtin_problem("sphere").unwrap();
        spec.exact_minus = Some(crate::discretization::constant(2.0));
        spec.exact_plus = Some(crate::discretization::constant(2.0));
        spec.alpha = crate::discretization::constant(0.0);
        spec.beta = crate::discretization::constant(0.0);
        spec.f_minus = crate::discretization::constant(0.0);
        spec.f_plus = crate::discretization::constant(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let x: Point = std::array::from_fn(|_| rng.random_range(-0.8..0.8));
            for bias in [BiasMode::Slow, BiasMode::Fast] {
                let opts = AssemblyOptions { approach: Approach::Regression, bias };
                let r = fv_residual(&spec, x, 0.05, &opts, |_, _| 2.0).unwrap();
                assert!(r.residual.abs() < 1e-12 * r.diag, "{x:?} {}", r.residual);
                assert!(r.diag > 0.0);
            }
        }
    }

    #[test]
    fn bulk_diagonal_and_stencil() {
        let spec = builtin_problem("bulk").unwrap();
        let h = 0.125;
        let row = assemble_point(&spec, [0.1, 0.2, -0.3], h, &AssemblyOptions::default()).unwrap();
        assert!((row.diag - 6.0 * h).abs() < 1e-14);
        assert_eq!(row.form.terms.len(), 7);
        let row = assemble_point(&spec, [1.0, 0.2, -0.3], h, &AssemblyOptions::default()).unwrap();
        assert_eq!(row.diag, 1.0);
        let g = (spec.dirichlet)([1.0, 0.2, -0.3]);
        assert!((row.form.evaluate(|_, _| g)).abs() < 1e-15);
    }

    #[test]
    fn residual_is_affine_in_outputs() {
        let spec = builtin_problem("star").unwrap();
        let opts = AssemblyOptions::default();
        let x = [0.47, 0.05, 0.02];
        let row = assemble_point(&spec, x, 0.05, &opts).unwrap();
        let u1 = |e: &Evaluation, o: u8| e.pos[0].sin() + o as f64 + e.side.index() as f64;
        let u2 = |e: &Evaluation, _o: u8| e.pos[1] * e.pos[2];
        let r1 = row.form.evaluate(u1);
        let r2 = row.form.evaluate(u2);
        let r12 = row.form.evaluate(|e, o| 2.0 * u1(e, o) - 3.0 * u2(e, o));
        assert!((r12 - (2.0 * r1 - 3.0 * r2 + 2.0 * row.form.constant)).abs() < 1e-12);
    }

    /// Taylor extrapolation across Γ is exact up to O(δ²).
    #[test]
    fn neural_pair_reproduces_exact_jumps() {
        let spec = builtin_problem("sphere").unwrap();
        let (um, up) = (spec.exact(Side::Minus).unwrap(), spec.exact(Side::Plus).unwrap());
        let dn = |u: &crate::geometry::ScalarFn, p: Point, n: Point| {
            let t = 1e-5;
            (u(vec3::axpy(p, t, n)) - u(vec3::axpy(p, -t, n))) / (2.0 * t)
        };
        let anchor = vec3::scale([0.6, 0.64, 0.48], 0.5);
        for sign in [-1.0, 1.0] {
            let mut errs = Vec::new();
            let mut pinn = Vec::new();
            for s in [0.04, 0.02, 0.01] {
                let x = vec3::scale(anchor, 1.0 + sign * s);
                let geom = cell_geometry(&spec.phi, x, 0.05).unwrap();
                let known = Side::of(sign);
                let u = spec.exact(known).unwrap();
                let d = dn(u, geom.proj, geom.normal);
                let (m, p) = neural_extrapolation_pair(&spec, &geom, u(x), d, known);
                errs.push((m - um(x)).abs().max((p - up(x)).abs()));
                pinn.push(pinn_interface_residual(&spec, &geom, um(x), up(x), d, known).abs());
            }
            for e in [&errs, &pinn] {
                assert!(e[0] / e[1] > 3.0 && e[1] / e[2] > 3.0, "{sign}: {e:?}");
            }
        }
    }

    #[test]
    fn pinn_rows_vanish_on_exact_fields() {
        let spec = builtin_problem("sphere").unwrap();
        for x in [[0.1, 0.2, -0.1], [0.7, -0.3, 0.2]] {
            let r = pinn_bulk_row(&spec, x).unwrap().evaluate(exact_outputs(&spec)).residual;
            assert!(r.abs() < 1e-4, "{x:?}: {r}");
        }
        let x = [0.0, 0.0, 0.5];
        let r = pinn_interface_row(&spec, x, 0.01).unwrap().evaluate(exact_outputs(&spec)).residual;
        assert!(r.abs() < 1e-7, "{r}");
    }

    /// Hand-assembled strong residual for one sine unit `u = sin(w·x + b)`.
    #[test]
    fn pinn_bulk_single_unit() {
        let mut spec = builtin_problem("sphere").unwrap();
        spec.k_plus = crate::discretization::constant(0.7);
        let x = [0.6, 0.2, 0.3];
        let (w, b) = ([0.3, -0.5, 0.8], 0.1);
        let z = vec3::dot(w, x) + b;
        let (u, du, ddu) = (z.sin(), z.cos(), -z.sin());
        let mu = (-x[2]).exp();
        let grad_mu = [0.0, 0.0, -mu];
        let expected = 0.7 * u - mu * ddu * vec3::dot(w, w) - vec3::dot(grad_mu, w) * du - spec.f(Side::Plus, x);
        let out = |_: &Evaluation, o: u8| match o {
            0 => u,
            1..=3 => w[o as usize - 1] * du,
            _ => w[o as usize - 4].powi(2) * ddu,
        };
        let r = pinn_bulk_row(&spec, x).unwrap().evaluate(out).residual;
        assert!((r - expected).abs() < 1e-9, "{r} vs {expected}");
    }
}
