//! One-sided extrapolation of the missing solution value at nodes near Γ.
//!
//! With `A = α + δβ/μ^∓` at the projection point, `K` the side of the node
//! and `L` the side whose neighbours feed the normal derivative:
//!
//! | K | L | missing value |
//! |---|---|---------------|
//! | − | − | `u⁺ = (1−ζ⁻)u_c − Σ ζ⁻_pq u_pq + A` |
//! | + | − | `u⁻ = (1+γ⁻)u_c + Σ γ⁻_pq u_pq − A(1+γ⁻)` |
//! | + | + | `u⁻ = (1+ζ⁺)u_c + Σ ζ⁺_pq u_pq − A` |
//! | − | + | `u⁺ = (1−γ⁺)u_c − Σ γ⁺_pq u_pq + A(1−γ⁺)` |

use std::str::FromStr;

use super::stencil::{build_stencil, ls_normal_coeffs, ls_normal_coeffs_unweighted, NeighborStencil};
use super::{DiscretizationError, Evaluation, LinearForm, ProblemSpec, Side};
use crate::geometry::{normal_with_fallback, CellGeometry, Point};

const SINGULAR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BiasMode {
    /// Normal derivative from Ω− neighbours when μ⁻ ≥ μ⁺, else from Ω+.
    #[default]
    Slow,
    /// The mirrored choice.
    Fast,
}

impl FromStr for BiasMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slow" => Ok(BiasMode::Slow),
            "fast" => Ok(BiasMode::Fast),
            other => Err(format!("unknown bias mode {other:?}")),
        }
    }
}

impl BiasMode {
    pub fn name(self) -> &'static str {
        match self {
            BiasMode::Slow => "slow",
            BiasMode::Fast => "fast",
        }
    }

    /// Side used for the least-squares normal derivative.
    pub fn lsq_side(self, mu_minus: f64, mu_plus: f64) -> Side {
        let minus_first = mu_minus >= mu_plus;
        match (self, minus_first) {
            (BiasMode::Slow, true) | (BiasMode::Fast, false) => Side::Minus,
            _ => Side::Plus,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZetaGamma {
    pub zeta_neighbors: [f64; 26],
    pub zeta_center: f64,
    pub gamma_neighbors: [f64; 26],
    pub gamma_center: f64,
}

fn zeta_only(c_neighbors: &[f64; 26], delta: f64, mu_m: f64, mu_p: f64, side: Side) -> ([f64; 26], f64) {
    let denom = match side {
        Side::Minus => mu_p,
        Side::Plus => mu_m,
    };
    let s = delta * (mu_p - mu_m) / denom;
    let z = c_neighbors.map(|c| s * c);
    let zc = -z.iter().sum::<f64>();
    (z, zc)
}

fn gamma_denominator(zeta: f64, side: Side) -> f64 {
    match side {
        Side::Minus => 1.0 - zeta,
        Side::Plus => 1.0 + zeta,
    }
}

/// ζ_pq = δ[μ]/μ^∓ c_pq, ζ = −Σ ζ_pq, γ_pq = ζ_pq/(1 ∓ ζ), γ = −Σ γ_pq, where
/// the upper signs belong to `side = Minus`.
pub fn zeta_gamma(
    c_neighbors: &[f64; 26],
    delta: f64,
    mu_m: f64,
    mu_p: f64,
    side: Side,
    point: Point,
) -> Result<ZetaGamma, DiscretizationError> {
    let (zeta_neighbors, zeta_center) = zeta_only(c_neighbors, delta, mu_m, mu_p, side);
    let g = gamma_denominator(zeta_center, side);
    if g.abs() < SINGULAR {
        return Err(DiscretizationError::SingularExtrapolation { point });
    }
    let gamma_neighbors = zeta_neighbors.map(|z| z / g);
    let gamma_center = -gamma_neighbors.iter().sum::<f64>();
    Ok(ZetaGamma { zeta_neighbors, zeta_center, gamma_neighbors, gamma_center })
}

/// `u^side = coeff_center·u_c + Σ coeff_neighbors[i]·u^L(x_i)
///           + coeff_center_lsq·u^L(x_c) + constant`
/// where `u_c` is the node's own-side value and `L = lsq_side`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationRule {
    pub side: Side,
    pub coeff_center: f64,
    pub coeff_neighbors: [f64; 26],
    pub constant: f64,
    pub lsq_side: Side,
    /// Nonzero only for the explicit fallback used when 1 ± ζ vanishes.
    pub coeff_center_lsq: f64,
}

impl ExtrapolationRule {
    pub fn identity(side: Side) -> Self {
        Self { side, coeff_center: 1.0, coeff_neighbors: [0.0; 26], constant: 0.0, lsq_side: side, coeff_center_lsq: 0.0 }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.coeff_center - 1.0).abs() <= tol
            && self.coeff_neighbors.iter().all(|c| c.abs() <= tol)
            && self.constant.abs() <= tol
            && self.coeff_center_lsq.abs() <= tol
    }

    pub fn to_form(&self, frame: &NodeFrame) -> LinearForm {
        let mut f = LinearForm::default();
        f.push(Evaluation::value(frame.side, frame.x), 0, self.coeff_center);
        if let Some(st) = &frame.stencil {
            for (i, &c) in self.coeff_neighbors.iter().enumerate() {
                f.push(Evaluation::value(self.lsq_side, st.positions[i]), 0, c);
            }
        }
        f.push(Evaluation::value(self.lsq_side, frame.x), 0, self.coeff_center_lsq);
        f.constant = self.constant;
        f
    }

    pub fn apply(&self, u_center: f64, u_neighbors: &[f64; 26], u_center_lsq: f64) -> f64 {
        self.coeff_center * u_center
            + self.coeff_neighbors.iter().zip(u_neighbors).map(|(c, u)| c * u).sum::<f64>()
            + self.coeff_center_lsq * u_center_lsq
            + self.constant
    }
}

/// Geometry of a node needed to extrapolate across Γ.
#[derive(Clone, Debug)]
pub struct NodeFrame {
    pub x: Point,
    pub h: f64,
    pub side: Side,
    pub stencil: Option<NeighborStencil>,
    pub normal: Point,
    pub delta: f64,
    pub proj: Point,
}

impl NodeFrame {
    pub fn new(spec: &ProblemSpec, x: Point, h: f64, with_stencil: bool) -> Result<Self, DiscretizationError> {
        let side = spec.side_of(x)?;
        let (normal, delta, proj) = normal_with_fallback(&spec.phi, x, h)?;
        let stencil = if with_stencil { Some(build_stencil(spec, x, h)?) } else { None };
        Ok(Self { x, h, side, stencil, normal, delta, proj })
    }

    pub fn from_cell(st: &NeighborStencil, geom: &CellGeometry, side: Side) -> Self {
        Self {
            x: geom.center,
            h: geom.h,
            side,
            stencil: Some(st.clone()),
            normal: geom.normal,
            delta: geom.delta,
            proj: geom.proj,
        }
    }
}

/// Rule for the value of the side opposite to the node's own side.
pub fn opposite_rule(spec: &ProblemSpec, frame: &NodeFrame, bias: BiasMode) -> Result<ExtrapolationRule, DiscretizationError> {
    let st = frame.stencil.as_ref().expect("regression extrapolation needs a stencil");
    let k = frame.side;
    let target = k.opposite();
    let l = bias.lsq_side(spec.mu(Side::Minus, frame.x), spec.mu(Side::Plus, frame.x));
    let (_, c) = match ls_normal_coeffs(st, frame.normal, l, frame.h) {
        Ok(c) => c,
        Err(DiscretizationError::DegenerateStencil { .. }) => {
            log::debug!("whole-neighbourhood normal derivative at {:?}", frame.x);
            ls_normal_coeffs_unweighted(frame.normal, frame.h)
        }
        Err(e) => return Err(e),
    };
    let (mu_m, mu_p) = (spec.mu(Side::Minus, frame.proj), spec.mu(Side::Plus, frame.proj));
    let mu_l_opp = if l == Side::Minus { mu_p } else { mu_m };
    let a = (spec.alpha)(frame.proj) + frame.delta * (spec.beta)(frame.proj) / mu_l_opp;
    let (zn, zeta) = zeta_only(&c, frame.delta, mu_m, mu_p, l);
    let mut rule = ExtrapolationRule { side: target, lsq_side: l, ..ExtrapolationRule::identity(target) };
    // s = +1 when the missing value is u⁻, −1 when it is u⁺
    let s = if target == Side::Minus { 1.0 } else { -1.0 };
    if k == l {
        rule.coeff_center = 1.0 + s * zeta;
        rule.coeff_neighbors = zn.map(|z| s * z);
        rule.constant = -s * a;
    } else {
        let g = gamma_denominator(zeta, l);
        if g.abs() < SINGULAR {
            log::debug!("explicit extrapolation at {:?}", frame.x);
            rule.coeff_center = 1.0;
            rule.coeff_neighbors = zn.map(|z| s * z);
            rule.coeff_center_lsq = s * zeta;
            rule.constant = -s * a;
        } else {
            let gn = zn.map(|z| z / g);
            let gamma = -gn.iter().sum::<f64>();
            rule.coeff_center = 1.0 + s * gamma;
            rule.coeff_neighbors = gn.map(|z| s * z);
            rule.constant = -s * a * (1.0 + s * gamma);
        }
    }
    Ok(rule)
}

/// `(rule for u⁻, rule for u⁺)` at a cell center; identities when Γ misses
/// the cell.
pub fn extrapolation_rules(
    st: &NeighborStencil,
    geom: &CellGeometry,
    spec: &ProblemSpec,
    mode: BiasMode,
) -> Result<(ExtrapolationRule, ExtrapolationRule), DiscretizationError> {
    let own = spec.side_of(geom.center)?;
    if !geom.crossed {
        return Ok((ExtrapolationRule::identity(Side::Minus), ExtrapolationRule::identity(Side::Plus)));
    }
    let frame = NodeFrame::from_cell(st, geom, own);
    let other = opposite_rule(spec, &frame, mode)?;
    Ok(match own {
        Side::Minus => (ExtrapolationRule::identity(Side::Minus), other),
        Side::Plus => (other, ExtrapolationRule::identity(Side::Plus)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::constant;
    use crate::geometry::{cell_geometry, LevelSetField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeta_gamma_trivial_cases() {
        let c: [f64; 26] = std::array::from_fn(|i| i as f64 - 12.0);
        let zg = zeta_gamma(&c, 0.3, 2.0, 2.0, Side::Minus, [0.0; 3]).unwrap();
        assert!(zg.zeta_neighbors.iter().chain(&zg.gamma_neighbors).all(|&z| z == 0.0));
        let zg = zeta_gamma(&c, 0.0, 1.0, 5.0, Side::Plus, [0.0; 3]).unwrap();
        assert_eq!(zg.zeta_center, 0.0);
        assert_eq!(zg.gamma_center, 0.0);
    }

    #[test]
    fn gamma_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let c: [f64; 26] = std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
            let (d, mm, mp) = (rng.random::<f64>() * 0.1, 0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>());
            for side in Side::BOTH {
                let zg = zeta_gamma(&c, d, mm, mp, side, [0.0; 3]).unwrap();
                let g = gamma_denominator(zg.zeta_center, side);
                for i in 0..26 {
                    assert!((zg.gamma_neighbors[i] * g - zg.zeta_neighbors[i]).abs() < 1e-14);
                }
                assert!((zg.zeta_center + zg.zeta_neighbors.iter().sum::<f64>()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_denominator_reported() {
        // δ[μ]/μ⁺ · Σc = −1 makes 1 − ζ⁻ = 0
        let mut c = [0.0; 26];
        c[0] = -2.0;
        assert!(matches!(
            zeta_gamma(&c, 1.0, 1.0, 2.0, Side::Minus, [0.0; 3]),
            Err(DiscretizationError::SingularExtrapolation { .. })
        ));
    }

    #[test]
    fn bias_selection() {
        assert_eq!(BiasMode::Slow.lsq_side(2.0, 1.0), Side::Minus);
        assert_eq!(BiasMode::Slow.lsq_side(1.0, 1.0), Side::Minus);
        assert_eq!(BiasMode::Slow.lsq_side(1.0, 2.0), Side::Plus);
        assert_eq!(BiasMode::Fast.lsq_side(2.0, 1.0), Side::Plus);
        assert_eq!(BiasMode::Fast.lsq_side(1.0, 2.0), Side::Minus);
    }

    fn plane_spec(mu_m: f64, mu_p: f64, alpha: f64, beta: f64) -> ProblemSpec {
        let mut s = ProblemSpec::template("plane", [-1.0; 3], [1.0; 3], LevelSetField::analytic(|p| p[0] - 0.013));
        s.mu_minus = constant(mu_m);
        s.mu_plus = constant(mu_p);
        s.alpha = constant(alpha);
        s.beta = constant(beta);
        s
    }

    #[test]
    fn uncrossed_cell_gives_identities() {
        let spec = plane_spec(3.0, 1.0, 0.4, 0.2);
        let (c, h) = ([0.5, 0.0, 0.0], 0.1);
        let st = build_stencil(&spec, c, h).unwrap();
        let geom = cell_geometry(&spec.phi, c, h).unwrap();
        let (rm, rp) = extrapolation_rules(&st, &geom, &spec, BiasMode::Slow).unwrap();
        assert!(rm.is_identity(0.0) && rp.is_identity(0.0));
    }

    #[test]
    fn continuous_problem_with_value_jump() {
        let spec = plane_spec(2.0, 2.0, 0.4, 0.6);
        let (c, h) = ([0.0, 0.1, 0.0], 0.1);
        let st = build_stencil(&spec, c, h).unwrap();
        let geom = cell_geometry(&spec.phi, c, h).unwrap();
        let (rm, rp) = extrapolation_rules(&st, &geom, &spec, BiasMode::Slow).unwrap();
        assert!(rm.is_identity(0.0));
        assert!((rp.coeff_center - 1.0).abs() < 1e-15 && rp.coeff_neighbors.iter().all(|&z| z == 0.0));
        // φ(c) = −0.013 so δ = −0.013
        assert!((rp.constant - (0.4 - 0.013 * 0.6 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn rules_reproduce_exact_jump_for_linear_fields() {
        // u⁻ = a·x + b, u⁺ from the jump conditions on the plane x = x0
        let x0: f64 = 0.013;
        let (mu_m, mu_p) = (3.0, 1.5);
        let (gm, gp) = (0.7, 1.9);
        let beta = mu_p * gp - mu_m * gm;
        let um = move |p: Point| gm * (p[0] - x0) + 0.2 * p[1] - 0.1 * p[2] + 1.0;
        let up = move |p: Point| gp * (p[0] - x0) + 0.2 * p[1] - 0.1 * p[2] + 1.5;
        let base = plane_spec(mu_m, mu_p, 0.5, beta);
        for (mm, mp) in [(mu_m, mu_p), (mu_p, mu_m)] {
            let mut spec = base.clone();
            spec.mu_minus = constant(mm);
            spec.mu_plus = constant(mp);
            spec.beta = constant(mp * gp - mm * gm);
            for bias in [BiasMode::Slow, BiasMode::Fast] {
                for c in [[-0.04, 0.0, 0.0], [0.06, 0.01, 0.0]] {
                    let frame = NodeFrame::new(&spec, c, 0.1, true).unwrap();
                    let rule = opposite_rule(&spec, &frame, bias).unwrap();
                    let st = frame.stencil.as_ref().unwrap();
                    let own = |p: Point| if frame.side == Side::Minus { um(p) } else { up(p) };
                    let lsq = |p: Point| if rule.lsq_side == Side::Minus { um(p) } else { up(p) };
                    let nb = st.positions.map(|p| lsq(p));
                    let got = rule.apply(own(c), &nb, lsq(c));
                    let want = if rule.side == Side::Minus { um(c) } else { up(c) };
                    assert!((got - want).abs() < 1e-9, "{bias:?} {c:?}: {got} vs {want}");
                }
            }
        }
    }
}
