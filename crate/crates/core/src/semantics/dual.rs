use std::ops::{Add, AddAssign, Mul};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::syntax::Label;

/// A forward-mode dual number: a value and its partial derivatives with
/// respect to a finite set of labelled parameters.
///
/// Partials are kept sorted by label; absent labels have derivative zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dual {
    pub value: f64,
    partials: Vec<(Label, f64)>,
}

impl Dual {
    pub fn zero() -> Self {
        Dual::default()
    }

    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            partials: Vec::new(),
        }
    }

    /// The parameter `l` itself, evaluated at `value`.
    pub fn variable(value: f64, l: Label) -> Self {
        Dual {
            value,
            partials: vec![(l, 1.0)],
        }
    }

    pub fn with_partial(mut self, l: Label, d: f64) -> Self {
        match self.partials.binary_search_by(|(k, _)| k.cmp(&l)) {
            Ok(i) => self.partials[i].1 = d,
            Err(i) => self.partials.insert(i, (l, d)),
        }
        self
    }

    pub fn partial(&self, l: &Label) -> f64 {
        self.partials
            .binary_search_by(|(k, _)| k.cmp(l))
            .map(|i| self.partials[i].1)
            .unwrap_or(0.0)
    }

    pub fn partials(&self) -> impl Iterator<Item = (&Label, f64)> {
        self.partials.iter().map(|(l, d)| (l, *d))
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0 && self.partials.iter().all(|(_, d)| *d == 0.0)
    }

    pub fn scale(&self, k: f64) -> Dual {
        Dual {
            value: self.value * k,
            partials: self
                .partials
                .iter()
                .map(|(l, d)| (l.clone(), d * k))
                .collect(),
        }
    }

    /// Largest absolute difference over the value and every partial.
    pub fn max_abs_diff(&self, other: &Dual) -> f64 {
        let mut m = (self.value - other.value).abs();
        merge(&self.partials, &other.partials, |_, a, b| {
            m = m.max((a - b).abs());
        });
        m
    }

    /// True when the value and all partials are finite and nonnegative
    /// (up to `slack`).
    pub fn is_nonnegative(&self, slack: f64) -> bool {
        self.value.is_finite()
            && self.value >= -slack
            && self
                .partials
                .iter()
                .all(|(_, d)| d.is_finite() && *d >= -slack)
    }
}

/// Walks the union of two sorted partial lists.
fn merge(a: &[(Label, f64)], b: &[(Label, f64)], mut f: impl FnMut(&Label, f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some((la, x)), Some((lb, y))) if la == lb => {
                f(la, *x, *y);
                i += 1;
                j += 1;
            }
            (Some((la, x)), Some((lb, _))) if la < lb => {
                f(la, *x, 0.0);
                i += 1;
            }
            (Some((la, x)), None) => {
                f(la, *x, 0.0);
                i += 1;
            }
            (_, Some((lb, y))) => {
                f(lb, 0.0, *y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

impl Add<&Dual> for &Dual {
    type Output = Dual;

    fn add(self, rhs: &Dual) -> Dual {
        let mut partials = Vec::with_capacity(self.partials.len().max(rhs.partials.len()));
        merge(&self.partials, &rhs.partials, |l, a, b| {
            partials.push((l.clone(), a + b))
        });
        Dual {
            value: self.value + rhs.value,
            partials,
        }
    }
}

impl AddAssign<&Dual> for Dual {
    fn add_assign(&mut self, rhs: &Dual) {
        if rhs.partials.is_empty() {
            self.value += rhs.value;
        } else {
            *self = &*self + rhs;
        }
    }
}

impl Mul<&Dual> for &Dual {
    type Output = Dual;

    // Product rule.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &Dual) -> Dual {
        let mut partials = Vec::with_capacity(self.partials.len().max(rhs.partials.len()));
        let (u, v) = (self.value, rhs.value);
        merge(&self.partials, &rhs.partials, |l, du, dv| {
            partials.push((l.clone(), du * v + u * dv))
        });
        Dual {
            value: u * v,
            partials,
        }
    }
}

impl Serialize for Dual {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Partials<'a>(&'a [(Label, f64)]);
        impl Serialize for Partials<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (l, d) in self.0 {
                    m.serialize_entry(l.as_str(), d)?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("v", &self.value)?;
        m.serialize_entry("d", &Partials(&self.partials))?;
        m.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::variable(3.0, "a".into());
        let y = Dual::variable(2.0, "b".into());
        let p = &(&x * &x) * &y;
        assert_eq!(p.value, 18.0);
        assert_eq!(p.partial(&"a".into()), 12.0);
        assert_eq!(p.partial(&"b".into()), 9.0);
        assert_eq!(p.partial(&"c".into()), 0.0);
    }

    #[test]
    fn sum_merges_partials() {
        let x = Dual::variable(1.0, "b".into());
        let y = Dual::variable(1.0, "a".into()).with_partial("c".into(), 2.0);
        let s = &x + &y;
        let names: Vec<_> = s.partials().map(|(l, d)| (l.to_string(), d)).collect();
        assert_eq!(
            names,
            [
                ("a".to_string(), 1.0),
                ("b".to_string(), 1.0),
                ("c".to_string(), 2.0)
            ]
        );
        assert_eq!(s.max_abs_diff(&x), 2.0);
    }

    #[test]
    fn zero_detection() {
        assert!(Dual::zero().is_zero());
        assert!(!Dual::constant(0.0).with_partial("a".into(), 1.0).is_zero());
    }

    #[test]
    fn json_shape() {
        let d = Dual::variable(0.5, "l".into());
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"v":0.5,"d":{"l":1.0}}"#
        );
    }
}
