//! Randomized property checks. Every trial draws from its own stream of a
//! root seed, so results do not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{dist, glb, lub, polar_member, Multiset, PcsSpace, PcsVec, PowerSeries, Web, SLACK};
use crate::machine::stream_rng;

/// A failing trial.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub trial: u64,
    pub detail: String,
}

/// Outcome of a randomized check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub trials: u64,
    pub violations: u64,
    /// Largest value of the check's statistic (ratio or discrepancy).
    pub max_statistic: f64,
    /// First failing trial, if any.
    pub witness: Option<Witness>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs `trial` on every index in parallel. A trial returns its statistic
/// and, on failure, a description.
fn run_trials(
    check: &str,
    trials: u64,
    seed: u64,
    trial: impl Fn(&mut ChaCha8Rng) -> (f64, Option<String>) + Sync,
) -> CheckReport {
    let results: Vec<(u64, f64, Option<String>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (stat, fail) = trial(&mut stream_rng(seed, i));
            (i, stat, fail)
        })
        .collect();
    let violations = results.iter().filter(|r| r.2.is_some()).count() as u64;
    let max_statistic = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let witness = results
        .into_iter()
        .find_map(|(i, _, f)| f.map(|detail| Witness { trial: i, detail }));
    CheckReport {
        check: check.into(),
        trials,
        violations,
        max_statistic,
        witness,
    }
}

/// A point of the simplex on `web` with norm at most `max_norm`; about a
/// third of the coordinates are zero.
pub fn random_simplex_point(web: &Web, max_norm: f64, rng: &mut impl Rng) -> PcsVec {
    let mut w: Vec<f64> = (0..web.len())
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                -rng.gen::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return PcsVec::zero(web);
    }
    let norm = max_norm * rng.gen::<f64>();
    for c in &mut w {
        *c *= norm / total;
    }
    PcsVec::new(web.clone(), w).expect("nonnegative")
}

/// A sparse series with nonnegative coefficients summing to at most 1, so
/// that it maps the simplex on `input` into the simplex on `output`.
pub fn random_series(
    input: &Web,
    output: &Web,
    max_degree: usize,
    max_terms: usize,
    rng: &mut impl Rng,
) -> PowerSeries {
    let n = rng.gen_range(1..=max_terms.max(1));
    let raw: Vec<(Multiset, usize, f64)> = (0..n)
        .map(|_| {
            let d = rng.gen_range(0..=max_degree);
            let mu = Multiset::new((0..d).map(|_| rng.gen_range(0..input.len())));
            (mu, rng.gen_range(0..output.len()), rng.gen::<f64>())
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let budget = rng.gen::<f64>();
    let mut t = PowerSeries::new(input.clone(), output.clone());
    for (mu, b, c) in raw {
        t.add_term(mu, b, c * budget / total).expect("in range");
    }
    t
}

/// Splits the slack `1 − ‖x‖` of a simplex point into a random direction.
fn random_local_direction(x: &PcsVec, rng: &mut impl Rng) -> PcsVec {
    let room = (1.0 - x.sum()).max(0.0);
    random_simplex_point(x.web(), 1.0, rng).scale(room)
}

/// Where random series come from.
#[derive(Clone, Copy, Debug)]
pub enum SeriesSource<'a> {
    Fixed(&'a PowerSeries),
    Random {
        web_size: usize,
        max_degree: usize,
        max_terms: usize,
    },
}

impl SeriesSource<'_> {
    fn draw(&self, rng: &mut impl Rng) -> PowerSeries {
        match *self {
            SeriesSource::Fixed(t) => t.clone(),
            SeriesSource::Random {
                web_size,
                max_degree,
                max_terms,
            } => random_series(
                &Web::nat(web_size),
                &Web::unit(),
                max_degree,
                max_terms,
                rng,
            ),
        }
    }
}

/// For `x, y` of norm at most `p`, checks
/// `|t(x) − t(y)| ≤ d(x, y)/(1 − p)` on a scalar series over the simplex.
/// The statistic is the observed ratio `|t(x) − t(y)| / d(x, y)`.
pub fn lipschitz_check(source: SeriesSource<'_>, p: f64, trials: u64, seed: u64) -> CheckReport {
    assert!((0.0..1.0).contains(&p), "p must lie in [0, 1)");
    run_trials("lipschitz", trials, seed, |rng| {
        let t = source.draw(rng);
        let space = PcsSpace::simplex(t.input().clone());
        let x = random_simplex_point(t.input(), p, rng);
        let y = random_simplex_point(t.input(), p, rng);
        let gap = (t.apply(&x).expect("web").get(0) - t.apply(&y).expect("web").get(0)).abs();
        let d = dist(&x, &y, &space).expect("web");
        let ratio = if d > 0.0 { gap / d } else { 0.0 };
        let fail = (gap > d / (1.0 - p) + SLACK)
            .then(|| format!("x={:?} y={:?} gap={gap} d={d}", x.coords(), y.coords()));
        (ratio, fail)
    })
}

/// `(t∘s)′(x)·u` against `t′(s(x))·(s′(x)·u)`; returns the max discrepancy.
pub fn chain_rule_discrepancy(
    s: &PowerSeries,
    t: &PowerSeries,
    x: &PcsVec,
    u: &PcsVec,
) -> Result<f64, super::PcsError> {
    let lhs = s.then(t)?.deriv(x)?.apply(u)?;
    let sx = s.apply(x)?;
    let rhs = t.deriv(&sx)?.apply(&s.deriv(x)?.apply(u)?)?;
    Ok(lhs.max_abs_diff(&rhs))
}

/// Chain rule on random composable series, points and local directions.
pub fn chain_rule_check(trials: u64, tol: f64, seed: u64) -> CheckReport {
    run_trials("chain", trials, seed, |rng| {
        let (kx, ky, kz) = (
            rng.gen_range(1..=3),
            rng.gen_range(1..=3),
            rng.gen_range(1..=3),
        );
        let (wx, wy, wz) = (Web::nat(kx), Web::nat(ky), Web::nat(kz));
        let s = random_series(&wx, &wy, 3, 4, rng);
        let t = random_series(&wy, &wz, 3, 4, rng);
        let x = random_simplex_point(&wx, 1.0, rng);
        let u = random_local_direction(&x, rng);
        let d = chain_rule_discrepancy(&s, &t, &x, &u).expect("composable");
        (
            d,
            (d > tol).then(|| format!("x={:?} u={:?} discrepancy={d}", x.coords(), u.coords())),
        )
    })
}

/// First-order bound `t(x) + t′(x)·u ≤ t(x+u)` and the second-order
/// remainder bound `|t(x+εu) − t(x) − ε t′(x)·u| ≤ C ε²`, where
/// `C = Σ t_μ 2^{|μ|}`. The statistic is the worst remainder ratio.
pub fn first_order_check(trials: u64, seed: u64) -> CheckReport {
    run_trials("first-order", trials, seed, |rng| {
        let (kx, ky) = (rng.gen_range(1..=4), rng.gen_range(1..=3));
        let (wx, wy) = (Web::nat(kx), Web::nat(ky));
        let t = random_series(&wx, &wy, 4, 5, rng);
        let x = random_simplex_point(&wx, 1.0, rng);
        let u = random_local_direction(&x, rng);
        let tx = t.apply(&x).expect("web");
        let du = t.deriv(&x).expect("web").apply(&u).expect("web");
        let lin = tx.add(&du).expect("web");
        let full = t.apply(&x.add(&u).expect("web")).expect("web");
        if !lin.le(&full) {
            return (
                f64::INFINITY,
                Some(format!("first-order bound fails at x={:?}", x.coords())),
            );
        }
        let c: f64 = t
            .terms()
            .map(|(m, _, v)| v * 2f64.powi(m.degree() as i32))
            .sum();
        let mut worst: f64 = 0.0;
        for eps in [1e-1, 1e-2, 1e-3] {
            let moved = t.apply(&x.add(&u.scale(eps)).expect("web")).expect("web");
            let rem = (0..wy.len())
                .map(|b| (moved.get(b) - tx.get(b) - eps * du.get(b)).abs())
                .fold(0.0, f64::max);
            let bound = c * eps * eps + SLACK;
            worst = worst.max(rem / bound);
            if rem > bound {
                return (
                    worst,
                    Some(format!("remainder {rem} > {bound} at eps={eps}")),
                );
            }
        }
        (worst, None)
    })
}

/// For `‖x‖ ≤ p`, `(1−p)·t′(x)` of a scalar series lies in the polar of
/// the simplex, whose generators are the basis vectors.
pub fn scaled_derivative_check(p: f64, trials: u64, seed: u64) -> CheckReport {
    run_trials("scaled-derivative", trials, seed, |rng| {
        let w = Web::nat(rng.gen_range(1..=4));
        let t = random_series(&w, &Web::unit(), 5, 6, rng);
        let x = random_simplex_point(&w, p, rng);
        let col = t.deriv(&x).expect("web").column(0).scale(1.0 - p);
        let gens: Vec<PcsVec> = (0..w.len()).map(|a| PcsVec::basis(&w, a)).collect();
        let top = col.coords().iter().cloned().fold(0.0, f64::max);
        let ok = polar_member(&col, &gens).expect("web");
        (
            top,
            (!ok).then(|| format!("x={:?} scaled derivative={:?}", x.coords(), col.coords())),
        )
    })
}

/// The simplex on three points is the polar of `{(1,1,1)}`: memberships
/// must agree on random vectors.
pub fn polar_duality_check(trials: u64, seed: u64) -> CheckReport {
    let w = Web::nat(3);
    let simplex = PcsSpace::simplex(w.clone());
    let ones = [PcsVec::new(w.clone(), vec![1.0; 3]).expect("valid")];
    run_trials("polar-duality", trials, seed, |rng| {
        let x = PcsVec::new(w.clone(), (0..3).map(|_| rng.gen_range(0.0..0.7)).collect())
            .expect("valid");
        let a = simplex.contains(&x).expect("web");
        let b = polar_member(&x, &ones).expect("web");
        (x.sum(), (a != b).then(|| format!("x={:?}", x.coords())))
    })
}

/// Symmetry, reflexivity and the triangle inequality of `d`, together
/// with the lattice identities, on random simplex points. The statistic
/// is the largest triangle ratio `d(x,z) / (d(x,y) + d(y,z))`.
pub fn distance_axioms_check(trials: u64, seed: u64) -> CheckReport {
    run_trials("distance", trials, seed, |rng| {
        let w = Web::nat(rng.gen_range(1..=5));
        let s = PcsSpace::simplex(w.clone());
        let [x, y, z] = [0; 3].map(|_| random_simplex_point(&w, 1.0, rng));
        let d = |a: &PcsVec, b: &PcsVec| dist(a, b, &s).expect("web");
        let (dxy, dyx, dxx) = (d(&x, &y), d(&y, &x), d(&x, &x));
        let (dxz, dyz) = (d(&x, &z), d(&y, &z));
        let m = glb(&x, &y).expect("web");
        let j = lub(&x, &y).expect("web");
        let sum = m.add(&j).expect("web");
        let zm = z.add(&m).expect("web");
        let dist_law = glb(&z.add(&x).expect("web"), &z.add(&y).expect("web")).expect("web");
        let mut fails = Vec::new();
        if (dxy - dyx).abs() > SLACK {
            fails.push("symmetry");
        }
        if dxx != 0.0 {
            fails.push("reflexivity");
        }
        if dxz > dxy + dyz + SLACK {
            fails.push("triangle");
        }
        if !(m.le(&x) && x.le(&j) && m.le(&y) && y.le(&j)) {
            fails.push("order");
        }
        if sum.max_abs_diff(&x.add(&y).expect("web")) > SLACK {
            fails.push("glb+lub");
        }
        if zm.max_abs_diff(&dist_law) > SLACK {
            fails.push("distributivity");
        }
        let ratio = if dxy + dyz > 0.0 {
            dxz / (dxy + dyz)
        } else {
            0.0
        };
        (ratio, (!fails.is_empty()).then(|| fails.join(",")))
    })
}
