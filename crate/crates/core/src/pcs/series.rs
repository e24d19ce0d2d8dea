use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{same_web, LinMap, PcsError, PcsVec, Web};

/// A finite multiset of web indices, kept sorted.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Multiset(Vec<usize>);

impl Multiset {
    pub fn new(items: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = items.into_iter().collect();
        v.sort_unstable();
        Multiset(v)
    }

    pub fn empty() -> Self {
        Multiset(Vec::new())
    }

    /// `[a]`.
    pub fn single(a: usize) -> Self {
        Multiset(vec![a])
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self, a: usize) -> usize {
        self.0.iter().filter(|&&b| b == a).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// `μ + ν`.
    pub fn sum(&self, other: &Multiset) -> Multiset {
        Multiset::new(self.iter().chain(other.iter()))
    }

    /// `μ − [a]`, if `a ∈ μ`.
    pub fn remove_one(&self, a: usize) -> Option<Multiset> {
        let i = self.0.iter().position(|&b| b == a)?;
        let mut v = self.0.clone();
        v.remove(i);
        Some(Multiset(v))
    }

    fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", items.join(","))
    }
}

impl fmt::Debug for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// All multisets over `{0, …, k−1}` of degree at most `d`, by degree.
pub fn multisets_up_to(k: usize, d: usize) -> Vec<Multiset> {
    let mut out = vec![Multiset::empty()];
    let mut layer = vec![Multiset::empty()];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &layer {
            let lo = m.max_index().unwrap_or(0);
            for a in lo..k {
                let mut v = m.0.clone();
                v.push(a);
                next.push(Multiset(v));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

type Poly = BTreeMap<Multiset, f64>;

fn poly_mul(p: &Poly, q: &Poly) -> Poly {
    let mut out = Poly::new();
    for (m, a) in p {
        for (n, b) in q {
            *out.entry(m.sum(n)).or_insert(0.0) += a * b;
        }
    }
    out
}

/// A finitely supported power series `t(x)_b = Σ_μ t_{μ,b} x^μ` with
/// nonnegative coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries {
    input: Web,
    output: Web,
    coeffs: BTreeMap<(Multiset, usize), f64>,
}

impl PowerSeries {
    pub fn new(input: Web, output: Web) -> Self {
        PowerSeries {
            input,
            output,
            coeffs: BTreeMap::new(),
        }
    }

    /// Adds `c` to the coefficient of `x^μ` in output `b`.
    pub fn add_term(&mut self, mu: Multiset, b: usize, c: f64) -> Result<(), PcsError> {
        if !c.is_finite() || c < 0.0 {
            return Err(PcsError::InvalidCoordinate(c));
        }
        if b >= self.output.len() || mu.max_index().is_some_and(|a| a >= self.input.len()) {
            return Err(PcsError::Domain(format!("term {mu}→{b} outside the webs")));
        }
        if c > 0.0 {
            *self.coeffs.entry((mu, b)).or_insert(0.0) += c;
        }
        Ok(())
    }

    pub fn with_term(mut self, mu: Multiset, b: usize, c: f64) -> Result<Self, PcsError> {
        self.add_term(mu, b, c)?;
        Ok(self)
    }

    /// `t_{[a],a} = 1`: the identity, seen as a series.
    pub fn identity(web: &Web) -> Self {
        let mut t = PowerSeries::new(web.clone(), web.clone());
        for a in 0..web.len() {
            t.coeffs.insert((Multiset::single(a), a), 1.0);
        }
        t
    }

    pub fn input(&self) -> &Web {
        &self.input
    }

    pub fn output(&self) -> &Web {
        &self.output
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Multiset, usize, f64)> {
        self.coeffs.iter().map(|((m, b), c)| (m, *b, *c))
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs.values().sum()
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|(m, _)| m.degree())
            .max()
            .unwrap_or(0)
    }

    /// `t(x)`.
    pub fn apply(&self, x: &PcsVec) -> Result<PcsVec, PcsError> {
        same_web(&self.input, x.web())?;
        let mut out = PcsVec::zero(&self.output);
        for ((mu, b), c) in &self.coeffs {
            out.coords[*b] += c * x.monomial(mu);
        }
        Ok(out)
    }

    /// The derivative `t′(x)_{a,b} = Σ_μ (μ(a)+1) t_{μ+[a],b} x^μ`.
    pub fn deriv(&self, x: &PcsVec) -> Result<LinMap, PcsError> {
        same_web(&self.input, x.web())?;
        let mut m = LinMap::zero(&self.input, &self.output);
        for ((nu, b), c) in &self.coeffs {
            let mut last = None;
            for a in nu.iter() {
                if last == Some(a) {
                    continue;
                }
                last = Some(a);
                let rest = nu.remove_one(a).expect("a ∈ ν");
                let v = m.get(a, *b) + nu.count(a) as f64 * c * x.monomial(&rest);
                m.set(a, *b, v);
            }
        }
        Ok(m)
    }

    /// `t ∘ s` as an exact series (first `self`, then `t`).
    pub fn then(&self, t: &PowerSeries) -> Result<PowerSeries, PcsError> {
        same_web(&self.output, &t.input)?;
        let polys: Vec<Poly> = (0..self.output.len())
            .map(|b| {
                self.coeffs
                    .iter()
                    .filter(|((_, bb), _)| *bb == b)
                    .map(|((m, _), c)| (m.clone(), *c))
                    .collect()
            })
            .collect();
        let mut out = PowerSeries::new(self.input.clone(), t.output.clone());
        for ((nu, c), coef) in &t.coeffs {
            let mut p: Poly = [(Multiset::empty(), *coef)].into();
            for b in nu.iter() {
                p = poly_mul(&p, &polys[b]);
            }
            for (m, v) in p {
                out.add_term(m, *c, v)?;
            }
        }
        Ok(out)
    }
}

impl Serialize for PowerSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term {
            mu: Vec<usize>,
            out: usize,
            coef: f64,
        }
        let terms: Vec<Term> = self
            .coeffs
            .iter()
            .map(|((m, b), c)| Term {
                mu: m.0.clone(),
                out: *b,
                coef: *c,
            })
            .collect();
        terms.serialize(s)
    }
}

/// The promotion series `x ↦ x^!` truncated at degree `d`: output index
/// `ν` (a multiset of degree ≤ `d`) receives `x^ν`.
pub fn promotion(web: &Web, d: usize) -> PowerSeries {
    let ms = multisets_up_to(web.len(), d);
    let out = Web::new(ms.iter().map(ToString::to_string)).expect("contains []");
    let mut t = PowerSeries::new(web.clone(), out);
    for (i, m) in ms.into_iter().enumerate() {
        t.coeffs.insert((m, i), 1.0);
    }
    t
}
