//! Data behind the three curves of the `M_q` example: `φ_{1/2}(u)` over
//! `u`, then `φ_q(1)` and the conditional expected number of uses of the
//! argument over `q`, each next to its closed form.

use num_rational::BigRational;
use serde::Serialize;

use crate::semantics::{
    denot, expected_count, prob_zero, Dist, Dual, Env, Estimate, SemConfig, SemError,
};
use crate::syntax::build::{app, mark, num, var};
use crate::syntax::{make_mq, Prob, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    /// `φ_{1/2}(u)` against `u`.
    PhiHalf,
    /// `φ_q(1)` against `q`.
    ConvergenceProbability,
    /// Conditional expected count against `q`.
    ExpectedCount,
}

impl Panel {
    fn name(self) -> &'static str {
        match self {
            Panel::PhiHalf => "phi_half",
            Panel::ConvergenceProbability => "convergence_probability",
            Panel::ExpectedCount => "expected_count",
        }
    }
}

/// A computed point; `value` is `None` when undefined (no convergence).
#[derive(Clone, Debug, Serialize)]
pub struct FigureRow {
    pub panel: Panel,
    pub x: f64,
    pub value: Option<Estimate>,
    pub closed_form: Option<Estimate>,
}

/// `k/steps` as an exact rational, for `k = 0..=steps`.
fn grid(steps: u32) -> impl Iterator<Item = Prob> {
    (0..=steps).map(move |k| BigRational::new(k.into(), steps.into()))
}

fn to_f64(q: &Prob) -> f64 {
    num_traits::ToPrimitive::to_f64(q).expect("finite")
}

/// `φ_q(u)`, the least solution of `φ = (1−q)u² + qφ²`.
pub fn phi(q: f64, u: f64) -> f64 {
    if q == 0.0 {
        u * u
    } else {
        (1.0 - (1.0 - 4.0 * q * (1.0 - q) * u * u).max(0.0).sqrt()) / (2.0 * q)
    }
}

/// `φ′_q(1)/φ_q(1)`, or `None` at `q = 1` where nothing converges.
pub fn expected_closed_form(q: f64) -> Option<Estimate> {
    if q == 0.5 {
        Some(Estimate::Diverges)
    } else if q < 0.5 {
        Some(Estimate::Value(2.0 * (1.0 - q) / (1.0 - 2.0 * q)))
    } else if q < 1.0 {
        Some(Estimate::Value(2.0 * q / (2.0 * q - 1.0)))
    } else {
        None
    }
}

/// Rows of all three panels on grids with `steps + 1` points.
pub fn figure_rows(steps: u32, cfg: &SemConfig) -> Result<Vec<FigureRow>, SemError> {
    let mut rows = Vec::new();
    let half = make_mq(BigRational::new(1.into(), 2.into()));
    for u in grid(steps) {
        let u = to_f64(&u);
        let env = Env::new().bind(
            "u".into(),
            Type::Nat,
            crate::semantics::SemValue::ground(Dist::point(0, Dual::constant(u), cfg.nmax)),
        );
        let d = denot(&app(half.clone(), var("u")), &env, cfg)?;
        rows.push(FigureRow {
            panel: Panel::PhiHalf,
            x: u,
            value: Some(Estimate::Value(
                d.value.as_dist().expect("nat").coord(0).value,
            )),
            closed_form: Some(Estimate::Value(phi(0.5, u))),
        });
    }
    for q in grid(steps) {
        let qf = to_f64(&q);
        let mq = make_mq(q);
        rows.push(FigureRow {
            panel: Panel::ConvergenceProbability,
            x: qf,
            value: Some(Estimate::Value(
                prob_zero(&app(mq.clone(), num(0)), cfg)?.value,
            )),
            closed_form: Some(Estimate::Value(phi(qf, 1.0))),
        });
        let e = expected_count(&app(mq, mark(num(0), "l")), &"l".into(), cfg)?;
        rows.push(FigureRow {
            panel: Panel::ExpectedCount,
            x: qf,
            value: e.conditional,
            closed_form: expected_closed_form(qf),
        });
    }
    Ok(rows)
}

fn cell(e: Option<Estimate>) -> String {
    match e {
        Some(Estimate::Value(v)) => format!("{v:.9}"),
        Some(Estimate::Diverges) => "DIVERGES".into(),
        None => "NA".into(),
    }
}

/// CSV with header `panel,x,value,closed_form`.
pub fn to_csv(rows: &[FigureRow]) -> String {
    let mut s = String::from("panel,x,value,closed_form\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.2},{},{}\n",
            r.panel.name(),
            r.x,
            cell(r.value),
            cell(r.closed_form)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(phi(0.75, 1.0), 1.0 / 3.0);
        assert!((phi(0.25, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(expected_closed_form(0.25), Some(Estimate::Value(3.0)));
        assert_eq!(expected_closed_form(0.75), Some(Estimate::Value(3.0)));
        assert_eq!(expected_closed_form(1.0), None);
    }

    #[test]
    fn small_sweep() {
        let rows = figure_rows(4, &SemConfig::default()).unwrap();
        assert_eq!(rows.len(), 5 * 3);
        let csv = to_csv(&rows);
        assert!(csv.starts_with("panel,x,value,closed_form\nphi_half,0.00,"));
        assert!(csv.contains("expected_count,0.50,DIVERGES,DIVERGES"));
        assert!(csv.contains("expected_count,1.00,NA,NA"));
    }
}
