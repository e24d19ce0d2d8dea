//! Fixtures shared by the criterion benchmarks in `benches/`.

use num_rational::BigRational;
use ppcf_core::machine::stream_rng;
use ppcf_core::pcs::{random_series, random_simplex_point, PcsVec, PowerSeries, Web};
use ppcf_core::syntax::build::{app, mark, num};
use ppcf_core::syntax::{make_mq, TermRef};

/// `M_q` applied to a marked `0`.
pub fn mq(num_: i64, den: i64) -> TermRef {
    app(
        make_mq(BigRational::new(num_.into(), den.into())),
        mark(num(0), "l"),
    )
}

/// A random scalar series on a web of `n` points and a point of norm 1/2.
pub fn series_and_point(n: usize, degree: usize, terms: usize) -> (PowerSeries, PcsVec) {
    let mut rng = stream_rng(1, 0);
    let web = Web::nat(n);
    let t = random_series(&web, &Web::unit(), degree, terms, &mut rng);
    let x = random_simplex_point(&web, 0.5, &mut rng);
    (t, x)
}
