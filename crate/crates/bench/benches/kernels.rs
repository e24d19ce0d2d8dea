use criterion::{black_box, criterion_group, criterion_main, Criterion};

use ppcf_bench::{mq, series_and_point};
use ppcf_core::machine::{enumerate, sample_many, Budget, State};
use ppcf_core::pcs::{distance_axioms_check, lipschitz_check, SeriesSource};
use ppcf_core::semantics::{expected_count, prob_zero, SemConfig};
use ppcf_core::syntax::Label;
use ppcf_core::translate::strip;

fn machine(c: &mut Criterion) {
    let s = State::initial(mq(3, 4));
    let budget = Budget {
        max_steps: 100_000,
        max_choice_len: 12,
    };
    c.bench_function("enumerate M_3/4 to 12 choices", |b| {
        b.iter(|| enumerate(black_box(&s), budget))
    });
    let s = State::initial(mq(1, 4));
    c.bench_function("sample M_1/4 x1000", |b| {
        b.iter(|| sample_many(black_box(&s), 7, 1_000, 10_000))
    });
}

fn semantics(c: &mut Criterion) {
    let cfg = SemConfig::default();
    let m34 = strip(&mq(3, 4));
    let m12 = strip(&mq(1, 2));
    c.bench_function("prob_zero M_3/4", |b| {
        b.iter(|| prob_zero(black_box(&m34), &cfg))
    });
    c.bench_function("prob_zero M_1/2", |b| {
        b.iter(|| prob_zero(black_box(&m12), &cfg))
    });
    let t = mq(1, 4);
    let l = Label::new("l");
    c.bench_function("expected_count M_1/4", |b| {
        b.iter(|| expected_count(black_box(&t), &l, &cfg))
    });
}

fn series(c: &mut Criterion) {
    let (t, x) = series_and_point(4, 4, 16);
    c.bench_function("series apply", |b| b.iter(|| t.apply(black_box(&x))));
    c.bench_function("series derivative", |b| b.iter(|| t.deriv(black_box(&x))));
    let (s, _) = series_and_point(4, 2, 8);
    let id = ppcf_core::pcs::PowerSeries::identity(s.input());
    c.bench_function("series composition", |b| b.iter(|| id.then(black_box(&s))));
    let source = SeriesSource::Random {
        web_size: 3,
        max_degree: 4,
        max_terms: 8,
    };
    c.bench_function("lipschitz check x1000", |b| {
        b.iter(|| lipschitz_check(source, 0.5, 1_000, 1))
    });
    c.bench_function("distance axioms x1000", |b| {
        b.iter(|| distance_axioms_check(1_000, 1))
    });
}

criterion_group!(benches, machine, semantics, series);
criterion_main!(benches);
