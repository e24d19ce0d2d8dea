use serde::Serialize;

use super::Dual;

/// A sub-probability distribution on `{0, …, nmax}` with dual-number
/// entries, plus an overflow bucket collecting mass pushed above `nmax`.
///
/// `pending` bounds the mass that may still be added by further fixpoint
/// unrollings: the exact denotation `d*` satisfies `d ≤ d*` coordinatewise
/// and `|d*| ≤ |d| + pending`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dist {
    coords: Vec<Dual>,
    overflow: Dual,
    #[serde(skip)]
    pending: f64,
    #[serde(skip)]
    nmax: usize,
}

impl Dist {
    pub fn zero(nmax: usize) -> Self {
        Dist {
            coords: Vec::new(),
            overflow: Dual::zero(),
            pending: 0.0,
            nmax,
        }
    }

    /// The Dirac mass `e_n`.
    pub fn dirac(n: usize, nmax: usize) -> Self {
        Dist::point(n, Dual::constant(1.0), nmax)
    }

    /// `w · e_n`.
    pub fn point(n: usize, w: Dual, nmax: usize) -> Self {
        let mut d = Dist::zero(nmax);
        if n > nmax {
            d.overflow = w;
        } else {
            d.coords = vec![Dual::zero(); n + 1];
            d.coords[n] = w;
        }
        d
    }

    /// Builds a distribution from explicit entries (index `i` is `coords[i]`).
    pub fn from_coords(coords: Vec<Dual>, overflow: Dual, nmax: usize) -> Self {
        assert!(coords.len() <= nmax + 1, "more coordinates than nmax + 1");
        let mut d = Dist {
            coords,
            overflow,
            pending: 0.0,
            nmax,
        };
        d.trim();
        d
    }

    pub(crate) fn with_pending(mut self, pending: f64) -> Self {
        self.pending = pending;
        self
    }

    fn trim(&mut self) {
        while self.coords.last().is_some_and(Dual::is_zero) {
            self.coords.pop();
        }
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn coord(&self, n: usize) -> Dual {
        self.coords.get(n).cloned().unwrap_or_default()
    }

    /// Stored coordinates; indices past the end are zero.
    pub fn coords(&self) -> &[Dual] {
        &self.coords
    }

    pub fn overflow(&self) -> &Dual {
        &self.overflow
    }

    pub fn pending(&self) -> f64 {
        self.pending
    }

    /// Mass on the nonzero outcomes, overflow included.
    pub fn nonzero_mass(&self) -> Dual {
        let mut m = self.overflow.clone();
        for c in self.coords.iter().skip(1) {
            m += c;
        }
        m
    }

    /// Total mass (value component only).
    pub fn mass(&self) -> f64 {
        self.coords.iter().map(|c| c.value).sum::<f64>() + self.overflow.value
    }

    /// Applies the successor matrix; the top coordinate moves to overflow.
    pub fn succ(&self) -> Dist {
        let mut coords = Vec::with_capacity((self.coords.len() + 1).min(self.nmax + 1));
        let mut overflow = self.overflow.clone();
        if !self.coords.is_empty() {
            coords.push(Dual::zero());
        }
        for (i, c) in self.coords.iter().enumerate() {
            if i + 1 > self.nmax {
                overflow += c;
            } else {
                coords.push(c.clone());
            }
        }
        let mut d = Dist {
            coords,
            overflow,
            pending: self.pending,
            nmax: self.nmax,
        };
        d.trim();
        d
    }

    /// Applies the predecessor matrix (`0 ↦ 0`, `n+1 ↦ n`). Fails when the
    /// overflow bucket carries more than `tol`, since its true indices are
    /// unknown.
    pub fn pred(&self, tol: f64) -> Option<Dist> {
        if !self.overflow_negligible(tol) {
            return None;
        }
        let mut coords: Vec<Dual> = self.coords.iter().skip(1).cloned().collect();
        if let Some(c0) = self.coords.first() {
            if coords.is_empty() {
                coords.push(c0.clone());
            } else {
                coords[0] = &coords[0] + c0;
            }
        }
        let mut d = Dist {
            coords,
            overflow: Dual::zero(),
            pending: self.pending,
            nmax: self.nmax,
        };
        d.trim();
        Some(d)
    }

    pub fn overflow_negligible(&self, tol: f64) -> bool {
        self.overflow.max_abs_diff(&Dual::zero()) <= tol
    }

    /// `w · self`.
    pub fn scale(&self, w: &Dual) -> Dist {
        let mut d = Dist {
            coords: self.coords.iter().map(|c| c * w).collect(),
            overflow: &self.overflow * w,
            pending: self.pending * w.value,
            nmax: self.nmax,
        };
        d.trim();
        d
    }

    pub fn add_assign(&mut self, other: &Dist) {
        if self.coords.len() < other.coords.len() {
            self.coords.resize(other.coords.len(), Dual::zero());
        }
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += b;
        }
        self.overflow += &other.overflow;
        self.pending += other.pending;
        self.trim();
    }

    pub(crate) fn add_pending(&mut self, p: f64) {
        self.pending += p;
    }

    /// Sup-norm distance over every coordinate, partial and the overflow.
    pub fn sup_diff(&self, other: &Dist) -> f64 {
        let n = self.coords.len().max(other.coords.len());
        let mut m = self.overflow.max_abs_diff(&other.overflow);
        for i in 0..n {
            m = m.max(self.coord(i).max_abs_diff(&other.coord(i)));
        }
        m
    }

    /// Every value and partial is finite and `≥ -slack`.
    pub fn is_nonnegative(&self, slack: f64) -> bool {
        self.coords.iter().all(|c| c.is_nonnegative(slack)) && self.overflow.is_nonnegative(slack)
    }

    /// Indices with a nonzero entry (value or partial).
    pub fn support(&self) -> impl Iterator<Item = (usize, &Dual)> {
        self.coords.iter().enumerate().filter(|(_, c)| !c.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(d: &Dist) -> Vec<f64> {
        d.coords().iter().map(|c| c.value).collect()
    }

    #[test]
    fn succ_pushes_top_into_overflow() {
        let d = Dist::dirac(2, 2);
        let s = d.succ();
        assert!(s.coords().is_empty());
        assert_eq!(s.overflow().value, 1.0);
        assert_eq!(values(&Dist::dirac(0, 4).succ()), [0.0, 1.0]);
    }

    #[test]
    fn pred_matrix() {
        let d = Dist::from_coords(
            vec![
                Dual::constant(0.25),
                Dual::constant(0.5),
                Dual::constant(0.25),
            ],
            Dual::zero(),
            8,
        );
        assert_eq!(values(&d.pred(1e-9).unwrap()), [0.75, 0.25]);
        assert_eq!(values(&Dist::dirac(0, 3).pred(0.0).unwrap()), [1.0]);
        assert!(Dist::dirac(9, 3).pred(1e-9).is_none());
    }

    #[test]
    fn nonzero_mass_includes_overflow() {
        let d = Dist::from_coords(
            vec![Dual::constant(0.1), Dual::constant(0.2)],
            Dual::constant(0.3),
            1,
        );
        assert!((d.nonzero_mass().value - 0.5).abs() < 1e-15);
        assert!((d.mass() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let d = Dist::point(0, Dual::variable(0.5, "l".into()), 4);
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"coords":[{"v":0.5,"d":{"l":1.0}}],"overflow":{"v":0.0,"d":{}}}"#
        );
    }
}
