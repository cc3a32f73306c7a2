use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::discretization::{ProblemSpec, Side};
use crate::geometry::Point;
use crate::model::SurrogatePair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub linf: f64,
    pub rel_l2: f64,
    pub eval_resolution: usize,
    pub wall_seconds: f64,
}

/// Errors of the pair on the `n³` lattice spanning the box, each node
/// predicted by the network of its φ side.
pub fn evaluate_errors(spec: &ProblemSpec, pair: &SurrogatePair, n: usize) -> Result<ErrorReport, ProblemError> {
    evaluate_errors_with(spec, n, |side, x| pair.net(side).forward(x))
}

pub fn evaluate_errors_with(
    spec: &ProblemSpec,
    n: usize,
    predict: impl Fn(Side, Point) -> f64 + Sync,
) -> Result<ErrorReport, ProblemError> {
    if n < 2 {
        return Err(ProblemError::BadResolution(n));
    }
    let (Some(um), Some(up)) = (spec.exact_minus.as_ref(), spec.exact_plus.as_ref()) else {
        return Err(ProblemError::MissingExact(spec.name.clone()));
    };
    let start = Instant::now();
    let coord = |a: usize, i: usize| spec.lo[a] + (spec.hi[a] - spec.lo[a]) * i as f64 / (n - 1) as f64;
    // (Σe², max|e|, Σu²) per z-slice, reduced in slice order
    let slices: Vec<Result<(f64, f64, f64), ProblemError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (mut se, mut me, mut su) = (0.0, 0.0f64, 0.0);
            for j in 0..n {
                for i in 0..n {
                    let x = [coord(0, i), coord(1, j), coord(2, k)];
                    let side = spec.side_of(x)?;
                    let exact = match side {
                        Side::Minus => um(x),
                        Side::Plus => up(x),
                    };
                    let e = predict(side, x) - exact;
                    se += e * e;
                    me = me.max(e.abs());
                    su += exact * exact;
                }
            }
            Ok((se, me, su))
        })
        .collect();
    let (mut se, mut me, mut su) = (0.0, 0.0f64, 0.0);
    for s in slices {
        let (a, b, c) = s?;
        se += a;
        me = me.max(b);
        su += c;
    }
    let count = (n * n * n) as f64;
    Ok(ErrorReport {
        rmse: (se / count).sqrt(),
        linf: me,
        rel_l2: if su > 0.0 { (se / su).sqrt() } else { f64::INFINITY },
        eval_resolution: n,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `log₂(err_coarse / err_fine)`.
pub fn convergence_order(err_coarse: f64, err_fine: f64) -> Result<f64, ProblemError> {
    if !(err_coarse > 0.0 && err_fine > 0.0) {
        return Err(ProblemError::NonPositiveError { coarse: err_coarse, fine: err_fine });
    }
    Ok((err_coarse / err_fine).log2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub resolution: usize,
    pub report: ErrorReport,
    /// Orders against the previous row for rmse, linf, rel_l2.
    pub orders: Option<[f64; 3]>,
}

/// Rows with orders between consecutive resolutions.
pub fn convergence_table(runs: &[(usize, ErrorReport)]) -> Result<Vec<ConvergenceRow>, ProblemError> {
    let mut rows = Vec::with_capacity(runs.len());
    for (i, (res, rep)) in runs.iter().enumerate() {
        let orders = if i == 0 {
            None
        } else {
            let prev = &runs[i - 1].1;
            Some([
                convergence_order(prev.rmse, rep.rmse)?,
                convergence_order(prev.linf, rep.linf)?,
                convergence_order(prev.rel_l2, rep.rel_l2)?,
            ])
        };
        rows.push(ConvergenceRow { resolution: *res, report: rep.clone(), orders });
    }
    Ok(rows)
}

pub fn convergence_table_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("resolution,rmse,rmse_order,linf,linf_order,rel_l2,rel_l2_order\n");
    for r in rows {
        let o = |i: usize| r.orders.map(|o| format!("{:.6}", o[i])).unwrap_or_default();
        out.push_str(&format!(
            "{},{:e},{},{:e},{},{:e},{}\n",
            r.resolution,
            r.report.rmse,
            o(0),
            r.report.linf,
            o(1),
            r.report.rel_l2,
            o(2)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetField;
    use crate::problems::builtin_problem;

    #[test]
    fn exact_oracle_has_zero_error() {
        let s = builtin_problem("sphere").unwrap();
        let r = evaluate_errors_with(&s, 9, |side, x| s.exact(side).unwrap()(x)).unwrap();
        assert_eq!((r.rmse, r.linf, r.rel_l2), (0.0, 0.0, 0.0));
        assert_eq!(r.eval_resolution, 9);
    }

    #[test]
    fn constant_offset() {
        let s = builtin_problem("star").unwrap();
        let r = evaluate_errors_with(&s, 7, |side, x| s.exact(side).unwrap()(x) + 0.25).unwrap();
        assert!((r.rmse - 0.25).abs() < 1e-12 && (r.linf - 0.25).abs() < 1e-12);
        assert!(r.rmse <= r.linf);
    }

    #[test]
    fn orders() {
        assert!((convergence_order(4e-3, 1e-3).unwrap() - 2.0).abs() < 1e-15);
        assert!((convergence_order(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((convergence_order(3.7e-2, 7.1e-3).unwrap() - 2.38).abs() < 5e-3);
        assert!(convergence_order(0.0, 1.0).is_err());
        assert!(convergence_order(1.0, -1.0).is_err());
    }

    #[test]
    fn table_orders_match_pairwise() {
        let rep = |e: f64| ErrorReport { rmse: e, linf: 2.0 * e, rel_l2: 3.0 * e, eval_resolution: 8, wall_seconds: 0.0 };
        let rows = convergence_table(&[(8, rep(1e-1)), (16, rep(3e-2)), (32, rep(1e-2))]).unwrap();
        assert!(rows[0].orders.is_none());
        assert_eq!(rows[2].orders.unwrap()[0], convergence_order(3e-2, 1e-2).unwrap());
        let csv = convergence_table_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert!(first[2].is_empty() && first[4].is_empty() && first[6].is_empty());
    }

    #[test]
    fn swapping_networks_with_flipped_level_set() {
        let mut s = builtin_problem("bulk").unwrap();
        s.phi = LevelSetField::analytic(|p| p[0] - 0.0123);
        let mut t = s.clone();
        t.phi = LevelSetField::analytic(|p| 0.0123 - p[0]);
        let a = |x: Point| x[0].sin();
        let b = |x: Point| x[1] * x[2];
        let ra = evaluate_errors_with(&s, 8, |side, x| if side == Side::Minus { a(x) } else { b(x) }).unwrap();
        let rb = evaluate_errors_with(&t, 8, |side, x| if side == Side::Minus { b(x) } else { a(x) }).unwrap();
        assert_eq!((ra.rmse, ra.linf, ra.rel_l2), (rb.rmse, rb.linf, rb.rel_l2));
    }

    #[test]
    fn missing_exact_is_reported() {
        let mut s = builtin_problem("bulk").unwrap();
        s.exact_plus = None;
        assert!(matches!(evaluate_errors_with(&s, 4, |_, _| 0.0), Err(ProblemError::MissingExact(_))));
        assert!(matches!(evaluate_errors_with(&builtin_problem("bulk").unwrap(), 1, |_, _| 0.0), Err(ProblemError::BadResolution(1))));
    }
}
