//! Probabilistic coherence spaces over finite webs: vectors, the three
//! supported space representations, norms, the lattice operations and the
//! distance, local spaces, linear maps and power series with their
//! derivatives.

mod checks;
mod series;
mod tamed;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use checks::{
    chain_rule_check, chain_rule_discrepancy, distance_axioms_check, first_order_check,
    lipschitz_check, polar_duality_check, random_series, random_simplex_point,
    scaled_derivative_check, CheckReport, SeriesSource, Witness,
};
pub use series::{multisets_up_to, promotion, Multiset, PowerSeries};
pub use tamed::{
    ground_distance, parse_contexts, tamed_bound_check, tamed_context, ContextGap, TamedReport,
    TAMED_SLACK,
};

/// Slack used by every comparison in this module.
pub const SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcsError {
    #[error("web mismatch: {0} vs {1}")]
    WebMismatch(Web, Web),
    #[error("vector is not in the space (norm {0})")]
    NotMember(f64),
    #[error("invalid coordinate {0}: entries must be finite and nonnegative")]
    InvalidCoordinate(f64),
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Type(#[from] crate::syntax::TypeError),
    #[error(transparent)]
    Semantics(#[from] crate::semantics::SemError),
}

/// A finite, nonempty index set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Web(Arc<[String]>);

impl Web {
    pub fn new(symbols: impl IntoIterator<Item = impl Into<String>>) -> Result<Self, PcsError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(PcsError::InvalidSpace("empty web".into()));
        }
        Ok(Web(symbols.into()))
    }

    /// `{0, …, k−1}`.
    pub fn nat(k: usize) -> Self {
        Web::new((0..k.max(1)).map(|i| i.to_string())).expect("nonempty")
    }

    /// The one-point web of the unit space `1`.
    pub fn unit() -> Self {
        Web::new(["*"]).expect("nonempty")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    /// Web of pairs, `(a, c)` at index `a · |other| + c`.
    pub fn product(&self, other: &Web) -> Web {
        let mut v = Vec::with_capacity(self.len() * other.len());
        for a in self.symbols() {
            for c in other.symbols() {
                v.push(format!("({a},{c})"));
            }
        }
        Web(v.into())
    }
}

impl fmt::Display for Web {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.join(","))
    }
}

impl fmt::Debug for Web {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Web {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.symbols().serialize(s)
    }
}

fn same_web(a: &Web, b: &Web) -> Result<(), PcsError> {
    if a == b {
        Ok(())
    } else {
        Err(PcsError::WebMismatch(a.clone(), b.clone()))
    }
}

/// A nonnegative vector indexed by a web.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcsVec {
    #[serde(skip)]
    web: Web,
    coords: Vec<f64>,
}

impl PcsVec {
    pub fn new(web: Web, coords: Vec<f64>) -> Result<Self, PcsError> {
        if coords.len() != web.len() {
            return Err(PcsError::Domain(format!(
                "{} coordinates for a web of size {}",
                coords.len(),
                web.len()
            )));
        }
        if let Some(&c) = coords.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(PcsError::InvalidCoordinate(c));
        }
        Ok(PcsVec { web, coords })
    }

    pub fn zero(web: &Web) -> Self {
        PcsVec {
            coords: vec![0.0; web.len()],
            web: web.clone(),
        }
    }

    /// Basis vector `e_a`.
    pub fn basis(web: &Web, a: usize) -> Self {
        let mut v = PcsVec::zero(web);
        v.coords[a] = 1.0;
        v
    }

    pub fn web(&self) -> &Web {
        &self.web
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn get(&self, a: usize) -> f64 {
        self.coords[a]
    }

    pub fn scale(&self, k: f64) -> PcsVec {
        PcsVec {
            web: self.web.clone(),
            coords: self.coords.iter().map(|c| c * k).collect(),
        }
    }

    pub fn add(&self, other: &PcsVec) -> Result<PcsVec, PcsError> {
        self.zip(other, |a, b| a + b)
    }

    /// `⟨x, y⟩ = Σ x_a y_a`.
    pub fn pairing(&self, other: &PcsVec) -> Result<f64, PcsError> {
        same_web(&self.web, &other.web)?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn sum(&self) -> f64 {
        self.coords.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &PcsVec) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `x ≤ y` coordinatewise, up to [`SLACK`].
    pub fn le(&self, other: &PcsVec) -> bool {
        self.coords
            .iter()
            .zip(&other.coords)
            .all(|(a, b)| *a <= b + SLACK)
    }

    fn zip(&self, other: &PcsVec, f: impl Fn(f64, f64) -> f64) -> Result<PcsVec, PcsError> {
        same_web(&self.web, &other.web)?;
        Ok(PcsVec {
            web: self.web.clone(),
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// `(x ⊗ z)_{(a,c)} = x_a z_c`.
    pub fn tensor(&self, other: &PcsVec) -> PcsVec {
        let mut coords = Vec::with_capacity(self.coords.len() * other.coords.len());
        for a in &self.coords {
            for c in &other.coords {
                coords.push(a * c);
            }
        }
        PcsVec {
            web: self.web.product(&other.web),
            coords,
        }
    }

    /// `x^μ = Π_a x_a^{μ(a)}`.
    pub fn monomial(&self, mu: &Multiset) -> f64 {
        mu.iter().map(|a| self.coords[a]).product()
    }
}

/// `x ∧ y`, the coordinatewise minimum.
pub fn glb(x: &PcsVec, y: &PcsVec) -> Result<PcsVec, PcsError> {
    x.zip(y, f64::min)
}

/// `x ∨ y = x + y − x ∧ y`.
pub fn lub(x: &PcsVec, y: &PcsVec) -> Result<PcsVec, PcsError> {
    x.zip(y, |a, b| a + b - a.min(b))
}

/// `d(x, y) = ‖x − x∧y‖ + ‖y − x∧y‖`.
pub fn dist(x: &PcsVec, y: &PcsVec, s: &PcsSpace) -> Result<f64, PcsError> {
    let m = glb(x, y)?;
    let dx = x.zip(&m, |a, b| (a - b).max(0.0))?;
    let dy = y.zip(&m, |a, b| (a - b).max(0.0))?;
    Ok(s.norm(&dx)? + s.norm(&dy)?)
}

/// How membership in a space is described.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `Σ x_a ≤ 1`, the space of sub-probability distributions.
    Simplex,
    /// `x_a ≤ c_a` for positive caps.
    Box(Vec<f64>),
    /// `⟨g, x⟩ ≤ 1` for every generator `g`.
    Polar(Vec<Vec<f64>>),
}

/// A probabilistic coherence space on a finite web.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcsSpace {
    web: Web,
    rep: Representation,
}

impl PcsSpace {
    pub fn simplex(web: Web) -> Self {
        PcsSpace {
            web,
            rep: Representation::Simplex,
        }
    }

    /// Sub-probability distributions on `{0, …, k−1}`.
    pub fn nat(k: usize) -> Self {
        PcsSpace::simplex(Web::nat(k))
    }

    pub fn boxed(web: Web, caps: Vec<f64>) -> Result<Self, PcsError> {
        PcsSpace::checked(web, Representation::Box(caps))
    }

    pub fn polar(web: Web, generators: Vec<Vec<f64>>) -> Result<Self, PcsError> {
        PcsSpace::checked(web, Representation::Polar(generators))
    }

    fn checked(web: Web, rep: Representation) -> Result<Self, PcsError> {
        let s = PcsSpace { web, rep };
        s.validate()?;
        Ok(s)
    }

    /// Checks both boundedness conditions: every index is charged by some
    /// member and bounded across members.
    pub fn validate(&self) -> Result<(), PcsError> {
        let n = self.web.len();
        let bad = |m: &str| Err(PcsError::InvalidSpace(m.into()));
        match &self.rep {
            Representation::Simplex => Ok(()),
            Representation::Box(caps) => {
                if caps.len() != n {
                    return bad("cap count differs from web size");
                }
                if caps.iter().all(|c| c.is_finite() && *c > 0.0) {
                    Ok(())
                } else {
                    bad("caps must be finite and positive")
                }
            }
            Representation::Polar(gens) => {
                if gens.iter().any(|g| g.len() != n) {
                    return bad("generator length differs from web size");
                }
                if gens.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
                    return bad("generators must be finite and nonnegative");
                }
                // bounded: some generator charges every index; charged:
                // entries are finite, so small multiples of e_a belong
                if (0..n).all(|a| gens.iter().any(|g| g[a] > 0.0)) {
                    Ok(())
                } else {
                    bad("some index is unbounded")
                }
            }
        }
    }

    pub fn web(&self) -> &Web {
        &self.web
    }

    pub fn representation(&self) -> &Representation {
        &self.rep
    }

    /// `inf {r > 0 | x ∈ r·P}`.
    pub fn norm(&self, x: &PcsVec) -> Result<f64, PcsError> {
        same_web(&self.web, &x.web)?;
        Ok(match &self.rep {
            Representation::Simplex => x.sum(),
            Representation::Box(caps) => x
                .coords
                .iter()
                .zip(caps)
                .map(|(v, c)| v / c)
                .fold(0.0, f64::max),
            Representation::Polar(gens) => gens
                .iter()
                .map(|g| g.iter().zip(&x.coords).map(|(a, b)| a * b).sum::<f64>())
                .fold(0.0, f64::max),
        })
    }

    pub fn contains(&self, x: &PcsVec) -> Result<bool, PcsError> {
        Ok(self.norm(x)? <= 1.0 + SLACK)
    }

    /// Indices `a` such that `x + ε e_a ∈ P` for some `ε > 0`.
    pub fn local_web(&self, x: &PcsVec) -> Result<Vec<usize>, PcsError> {
        let norm = self.norm(x)?;
        if norm > 1.0 + SLACK {
            return Err(PcsError::NotMember(norm));
        }
        let n = self.web.len();
        Ok(match &self.rep {
            Representation::Simplex => {
                if x.sum() < 1.0 - SLACK {
                    (0..n).collect()
                } else {
                    Vec::new()
                }
            }
            Representation::Box(caps) => {
                (0..n).filter(|&a| x.coords[a] < caps[a] - SLACK).collect()
            }
            Representation::Polar(gens) => {
                let tight: Vec<&Vec<f64>> = gens
                    .iter()
                    .filter(|g| {
                        g.iter().zip(&x.coords).map(|(a, b)| a * b).sum::<f64>() >= 1.0 - SLACK
                    })
                    .collect();
                (0..n)
                    .filter(|&a| tight.iter().all(|g| g[a] == 0.0))
                    .collect()
            }
        })
    }

    /// `u ∈ P(X_loc(x))`, i.e. `x + u ∈ P`.
    pub fn local_member(&self, x: &PcsVec, u: &PcsVec) -> Result<bool, PcsError> {
        let norm = self.norm(x)?;
        if norm > 1.0 + SLACK {
            return Err(PcsError::NotMember(norm));
        }
        let local = self.local_web(x)?;
        let supported = (0..self.web.len()).all(|a| u.coords[a] == 0.0 || local.contains(&a));
        Ok(supported && self.contains(&x.add(u)?)?)
    }
}

/// Membership in the polar of a finite generator family.
pub fn polar_member(u: &PcsVec, generators: &[PcsVec]) -> Result<bool, PcsError> {
    for g in generators {
        if g.pairing(u)? > 1.0 + SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A nonnegative matrix `t ∈ ℝ₊^{in × out}` acting by `(t·u)_j = Σ_i t_{i,j} u_i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinMap {
    #[serde(skip)]
    input: Web,
    #[serde(skip)]
    output: Web,
    /// Row-major: entry `(i, j)` at `i · |out| + j`.
    entries: Vec<f64>,
}

impl LinMap {
    pub fn zero(input: &Web, output: &Web) -> Self {
        LinMap {
            entries: vec![0.0; input.len() * output.len()],
            input: input.clone(),
            output: output.clone(),
        }
    }

    pub fn from_fn(input: &Web, output: &Web, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = LinMap::zero(input, output);
        for i in 0..input.len() {
            for j in 0..output.len() {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn identity(web: &Web) -> Self {
        LinMap::from_fn(web, web, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// The successor matrix on `{0, …, k−1}`; `k−1` has no image.
    pub fn succ(k: usize) -> Self {
        let w = Web::nat(k);
        LinMap::from_fn(&w, &w, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
    }

    /// The predecessor matrix on `{0, …, k−1}`.
    pub fn pred(k: usize) -> Self {
        let w = Web::nat(k);
        LinMap::from_fn(&w, &w, |i, j| {
            if (i == 0 && j == 0) || i == j + 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn input(&self) -> &Web {
        &self.input
    }

    pub fn output(&self) -> &Web {
        &self.output
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.output.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.output.len();
        self.entries[i * n + j] = v;
    }

    pub fn apply(&self, u: &PcsVec) -> Result<PcsVec, PcsError> {
        same_web(&self.input, &u.web)?;
        let mut out = PcsVec::zero(&self.output);
        for (i, ui) in u.coords.iter().enumerate() {
            if *ui != 0.0 {
                for j in 0..self.output.len() {
                    out.coords[j] += self.get(i, j) * ui;
                }
            }
        }
        Ok(out)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &LinMap) -> Result<LinMap, PcsError> {
        same_web(&self.output, &next.input)?;
        let mut m = LinMap::zero(&self.input, &next.output);
        for i in 0..self.input.len() {
            for j in 0..self.output.len() {
                let a = self.get(i, j);
                if a != 0.0 {
                    for k in 0..next.output.len() {
                        let v = m.get(i, k) + a * next.get(j, k);
                        m.set(i, k, v);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn scale(&self, k: f64) -> LinMap {
        LinMap {
            input: self.input.clone(),
            output: self.output.clone(),
            entries: self.entries.iter().map(|e| e * k).collect(),
        }
    }

    /// Row `a` as a vector on the output web.
    pub fn row(&self, a: usize) -> PcsVec {
        let n = self.output.len();
        PcsVec {
            web: self.output.clone(),
            coords: self.entries[a * n..(a + 1) * n].to_vec(),
        }
    }

    /// Column `b` as a vector on the input web.
    pub fn column(&self, b: usize) -> PcsVec {
        PcsVec {
            web: self.input.clone(),
            coords: (0..self.input.len()).map(|a| self.get(a, b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &LinMap) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `t · x`.
pub fn matapp(t: &LinMap, x: &PcsVec) -> Result<PcsVec, PcsError> {
    t.apply(x)
}

/// `t ∘ s`: first `s`, then `t`.
pub fn compose(s: &LinMap, t: &LinMap) -> Result<LinMap, PcsError> {
    s.then(t)
}

#[cfg(test)]
mod tests;
