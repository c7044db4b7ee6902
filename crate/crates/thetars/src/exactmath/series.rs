//! Truncated multivariate Laurent series with an hbar grading.
//!
//! Every series carries an explicit exponent window per variable and an
//! hbar window. Terms that would land outside are dropped and the
//! `truncated` flag is raised, so callers can assert that no requested
//! coefficient was affected.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_traits::{One, Zero};

use super::cyclotomic::CycScalar;
use super::rational::{qi, Q};
use super::MathError;

pub trait Coeff: Clone + PartialEq + Debug + Send + Sync {
    fn is_zero_c(&self) -> bool;
    fn add_c(&self, o: &Self) -> Self;
    fn mul_c(&self, o: &Self) -> Self;
    fn neg_c(&self) -> Self;
    fn scale_q(&self, x: &Q) -> Self;
    fn to_cyc(&self, order: u32) -> CycScalar;
}

impl Coeff for Q {
    fn is_zero_c(&self) -> bool {
        self.is_zero()
    }
    fn add_c(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_c(&self, o: &Self) -> Self {
        self * o
    }
    fn neg_c(&self) -> Self {
        -self
    }
    fn scale_q(&self, x: &Q) -> Self {
        self * x
    }
    fn to_cyc(&self, order: u32) -> CycScalar {
        CycScalar::from_q(order, self.clone())
    }
}

impl Coeff for CycScalar {
    fn is_zero_c(&self) -> bool {
        self.is_zero()
    }
    fn add_c(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn mul_c(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn neg_c(&self) -> Self {
        self.neg()
    }
    fn scale_q(&self, x: &Q) -> Self {
        self.scale(x)
    }
    fn to_cyc(&self, order: u32) -> CycScalar {
        assert_eq!(self.order(), order, "cyclotomic order mismatch");
        self.clone()
    }
}

/// Term key: (hbar exponent, exponent per variable).
pub type TermKey = (i64, Vec<i64>);

#[derive(Clone, Debug, PartialEq)]
pub struct GradedSeries<C> {
    pub vars: Vec<String>,
    pub window: Vec<(i64, i64)>,
    pub hbar_range: (i64, i64),
    pub terms: BTreeMap<TermKey, C>,
    pub truncated: bool,
}

impl<C: Coeff> GradedSeries<C> {
    pub fn new(vars: &[&str], window: Vec<(i64, i64)>, hbar_range: (i64, i64)) -> Self {
        assert_eq!(vars.len(), window.len());
        GradedSeries {
            vars: vars.iter().map(|v| v.to_string()).collect(),
            window,
            hbar_range,
            terms: BTreeMap::new(),
            truncated: false,
        }
    }

    /// Same variables and windows, no terms.
    pub fn empty_like(&self) -> Self {
        GradedSeries {
            vars: self.vars.clone(),
            window: self.window.clone(),
            hbar_range: self.hbar_range,
            terms: BTreeMap::new(),
            truncated: false,
        }
    }

    pub fn in_window(&self, h: i64, exps: &[i64]) -> bool {
        h >= self.hbar_range.0
            && h <= self.hbar_range.1
            && exps.iter().zip(&self.window).all(|(e, (lo, hi))| e >= lo && e <= hi)
    }

    /// Adds c to the coefficient of hbar^h prod z^exps.
    pub fn add_term(&mut self, h: i64, exps: Vec<i64>, c: C) {
        if c.is_zero_c() {
            return;
        }
        if !self.in_window(h, &exps) {
            self.truncated = true;
            return;
        }
        let key = (h, exps);
        match self.terms.get_mut(&key) {
            Some(v) => {
                let s = v.add_c(&c);
                if s.is_zero_c() {
                    self.terms.remove(&key);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    fn compatible(&self, o: &Self) -> Result<(), MathError> {
        if self.vars != o.vars {
            return Err(MathError::WindowMismatch(format!(
                "variables {:?} vs {:?}",
                self.vars, o.vars
            )));
        }
        Ok(())
    }

    fn intersect(&self, o: &Self) -> Self {
        let window = self
            .window
            .iter()
            .zip(&o.window)
            .map(|(a, b)| (a.0.max(b.0), a.1.min(b.1)))
            .collect();
        GradedSeries {
            vars: self.vars.clone(),
            window,
            hbar_range: (self.hbar_range.0.max(o.hbar_range.0), self.hbar_range.1.min(o.hbar_range.1)),
            terms: BTreeMap::new(),
            truncated: self.truncated || o.truncated,
        }
    }

    pub fn add(&self, o: &Self) -> Result<Self, MathError> {
        self.compatible(o)?;
        let mut out = self.intersect(o);
        for ((h, e), c) in self.terms.iter().chain(o.terms.iter()) {
            out.add_term(*h, e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, o: &Self) -> Result<Self, MathError> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = v.neg_c();
        }
        out
    }

    pub fn scale_q(&self, x: &Q) -> Self {
        let mut out = self.empty_like();
        out.truncated = self.truncated;
        for ((h, e), c) in &self.terms {
            out.add_term(*h, e.clone(), c.scale_q(x));
        }
        out
    }

    pub fn scale(&self, x: &C) -> Self {
        let mut out = self.empty_like();
        out.truncated = self.truncated;
        for ((h, e), c) in &self.terms {
            out.add_term(*h, e.clone(), c.mul_c(x));
        }
        out
    }

    /// Multiplies by hbar^dh prod z^de, shifting the windows along.
    pub fn shift(&self, dh: i64, de: &[i64]) -> Self {
        let mut out = self.empty_like();
        out.truncated = self.truncated;
        out.hbar_range = (self.hbar_range.0 + dh, self.hbar_range.1 + dh);
        for (w, d) in out.window.iter_mut().zip(de) {
            w.0 += d;
            w.1 += d;
        }
        for ((h, e), c) in &self.terms {
            let e2: Vec<i64> = e.iter().zip(de).map(|(a, b)| a + b).collect();
            out.add_term(h + dh, e2, c.clone());
        }
        out
    }

    pub fn mul(&self, o: &Self) -> Result<Self, MathError> {
        self.compatible(o)?;
        let mut out = self.intersect(o);
        for ((h1, e1), c1) in &self.terms {
            for ((h2, e2), c2) in &o.terms {
                let e: Vec<i64> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(h1 + h2, e, c1.mul_c(c2));
            }
        }
        Ok(out)
    }

    /// d/dz_var.
    pub fn deriv(&self, var: usize) -> Self {
        let mut out = self.empty_like();
        out.truncated = self.truncated;
        out.window[var] = (self.window[var].0 - 1, self.window[var].1 - 1);
        for ((h, e), c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[var] -= 1;
            out.add_term(*h, e2, c.scale_q(&qi(e[var])));
        }
        out
    }

    /// z_var -> theta^a z_var with theta = eta^2 in the ring of order 2r:
    /// the coefficient of z^p is multiplied by theta^{a p}.
    pub fn substitute_root(&self, var: usize, a: i64, r: u32) -> GradedSeries<CycScalar> {
        let mut out: GradedSeries<CycScalar> = GradedSeries {
            vars: self.vars.clone(),
            window: self.window.clone(),
            hbar_range: self.hbar_range,
            terms: BTreeMap::new(),
            truncated: self.truncated,
        };
        for ((h, e), c) in &self.terms {
            let ph = CycScalar::theta_pow(r, a * e[var]);
            out.add_term(*h, e.clone(), c.to_cyc(2 * r).mul(&ph));
        }
        out
    }

    /// Coefficient of hbar^h prod z^exps; an error when the target lies
    /// outside the declared windows.
    pub fn coeff(&self, h: i64, exps: &[i64]) -> Result<Option<&C>, MathError> {
        if !self.in_window(h, exps) {
            return Err(MathError::WindowMismatch(format!("target ({h}, {exps:?}) outside window")));
        }
        Ok(self.terms.get(&(h, exps.to_vec())))
    }

    /// All terms at a fixed hbar exponent.
    pub fn hbar_slice(&self, h: i64) -> BTreeMap<Vec<i64>, C> {
        self.terms
            .iter()
            .filter(|((hh, _), _)| *hh == h)
            .map(|((_, e), c)| (e.clone(), c.clone()))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl GradedSeries<Q> {
    pub fn to_cyc(&self, order: u32) -> GradedSeries<CycScalar> {
        GradedSeries {
            vars: self.vars.clone(),
            window: self.window.clone(),
            hbar_range: self.hbar_range,
            terms: self.terms.iter().map(|(k, c)| (k.clone(), c.to_cyc(order))).collect(),
            truncated: self.truncated,
        }
    }

    pub fn monomial(vars: &[&str], window: Vec<(i64, i64)>, hbar_range: (i64, i64), h: i64, exps: Vec<i64>, c: Q) -> Self {
        let mut s = Self::new(vars, window, hbar_range);
        s.add_term(h, exps, c);
        s
    }
}

impl GradedSeries<CycScalar> {
    /// Every coefficient must be rational; returns the rational series.
    pub fn rational_part(&self) -> Result<GradedSeries<Q>, MathError> {
        let mut terms = BTreeMap::new();
        for (k, c) in &self.terms {
            let v = c.rational_part()?;
            if !v.is_zero() {
                terms.insert(k.clone(), v);
            }
        }
        Ok(GradedSeries {
            vars: self.vars.clone(),
            window: self.window.clone(),
            hbar_range: self.hbar_range,
            terms,
            truncated: self.truncated,
        })
    }
}

/// 1/(z_i^r - z_j^r) = z_i^{-r} sum_{p <= depth} (z_j/z_i)^{rp}, expanded in
/// the region |z_i| > |z_j|; `i` must precede `j`.
pub fn geom_expand(vars: &[&str], i: usize, j: usize, depth: usize, r: u32) -> Result<GradedSeries<Q>, MathError> {
    if i >= j || j >= vars.len() {
        return Err(MathError::OrderingViolation(format!("{i} does not precede {j}")));
    }
    let r = r as i64;
    let d = depth as i64;
    let mut window = vec![(0, 0); vars.len()];
    window[i] = (-r * (d + 1), -r);
    window[j] = (0, r * d);
    let mut s = GradedSeries::new(vars, window, (0, 0));
    for p in 0..=d {
        let mut e = vec![0; vars.len()];
        e[i] = -r * (p + 1);
        e[j] = r * p;
        s.add_term(0, e, Q::one());
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geom_expand_examples() {
        let v = ["z1", "z2"];
        let s = geom_expand(&v, 0, 1, 1, 2).unwrap();
        assert_eq!(s.terms.len(), 2);
        assert_eq!(s.coeff(0, &[-2, 0]).unwrap(), Some(&qi(1)));
        assert_eq!(s.coeff(0, &[-4, 2]).unwrap(), Some(&qi(1)));
        let t = geom_expand(&v, 0, 1, 0, 3).unwrap();
        assert_eq!(t.terms.len(), 1);
        assert!(t.coeff(0, &[-3, 0]).unwrap().is_some());
        assert!(geom_expand(&v, 1, 0, 2, 2).is_err());
    }

    #[test]
    fn geom_expand_defining_identity() {
        let v = ["z1", "z2"];
        for r in 2..5u32 {
            let d = 3;
            let g = geom_expand(&v, 0, 1, d, r).unwrap();
            let ri = r as i64;
            let mut f = GradedSeries::<Q>::new(&v, vec![(-100, 100), (-100, 100)], (0, 0));
            f.add_term(0, vec![ri, 0], qi(1));
            f.add_term(0, vec![0, ri], qi(-1));
            let mut g2 = g.clone();
            g2.window = vec![(-100, 100), (-100, 100)];
            let p = f.mul(&g2).unwrap();
            assert_eq!(p.terms.len(), 2);
            assert_eq!(p.coeff(0, &[0, 0]).unwrap(), Some(&qi(1)));
            assert_eq!(p.coeff(0, &[-ri * (d as i64 + 1), ri * (d as i64 + 1)]).unwrap(), Some(&qi(-1)));
        }
    }

    #[test]
    fn derivative_and_product() {
        let v = ["z"];
        let mut a = GradedSeries::<Q>::new(&v, vec![(-10, 10)], (0, 4));
        a.add_term(0, vec![0], qi(1));
        a.add_term(1, vec![-1], qi(1));
        let mut b = a.clone();
        b.terms.insert((1, vec![-1]), qi(-1));
        let p = a.mul(&b).unwrap();
        assert_eq!(p.terms.len(), 2);
        assert_eq!(p.coeff(2, &[-2]).unwrap(), Some(&qi(-1)));
        let mut m = GradedSeries::<Q>::new(&v, vec![(-10, 10)], (0, 0));
        m.add_term(0, vec![5], qi(1));
        assert_eq!(m.deriv(0).coeff(0, &[4]).unwrap(), Some(&qi(5)));
    }

    #[test]
    fn substitution_full_turn_is_identity() {
        let v = ["z"];
        let mut a = GradedSeries::<Q>::new(&v, vec![(-10, 10)], (0, 4));
        a.add_term(0, vec![3], qi(2));
        a.add_term(1, vec![-2], qi(7));
        let s = a.substitute_root(0, 4, 4);
        assert_eq!(s, a.to_cyc(8));
    }

    #[test]
    fn out_of_window_marks_truncation() {
        let v = ["z"];
        let mut a = GradedSeries::<Q>::new(&v, vec![(0, 2)], (0, 0));
        a.add_term(0, vec![3], qi(1));
        assert!(a.truncated);
        assert!(a.is_zero());
        assert!(a.coeff(0, &[5]).is_err());
    }
}
