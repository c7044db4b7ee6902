//! The ring Q[eta]/Phi_n(eta). For the wave matrix n = 2r, so eta is a
//! primitive 2r-th root of unity and theta = eta^2.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};

use super::rational::{qi, Q};
use super::MathError;

fn poly_trim(p: &mut Vec<Q>) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

/// Quotient and remainder of a by a non-zero b.
fn poly_divrem(a: &[Q], b: &[Q]) -> (Vec<Q>, Vec<Q>) {
    let mut rem: Vec<Q> = a.to_vec();
    poly_trim(&mut rem);
    let mut b = b.to_vec();
    poly_trim(&mut b);
    let db = b.len() - 1;
    let lead = b[db].clone();
    if rem.len() <= db {
        return (vec![], rem);
    }
    let mut quot = vec![Q::zero(); rem.len() - db];
    while rem.len() > db {
        let k = rem.len() - 1 - db;
        let c = rem.last().unwrap() / &lead;
        for (i, bi) in b.iter().enumerate() {
            rem[k + i] -= &c * bi;
        }
        quot[k] = c;
        rem.pop();
        poly_trim(&mut rem);
    }
    (quot, rem)
}

fn poly_mul(a: &[Q], b: &[Q]) -> Vec<Q> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Q::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_sub(a: &[Q], b: &[Q]) -> Vec<Q> {
    let n = a.len().max(b.len());
    let mut out = vec![Q::zero(); n];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] -= y;
    }
    poly_trim(&mut out);
    out
}

fn cache() -> &'static Mutex<HashMap<u32, Arc<Vec<Q>>>> {
    static C: OnceLock<Mutex<HashMap<u32, Arc<Vec<Q>>>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Phi_n, low degree first. Obtained from x^n - 1 by dividing out Phi_d
/// for every proper divisor d.
pub fn cyclotomic_poly(n: u32) -> Arc<Vec<Q>> {
    assert!(n >= 1);
    if let Some(p) = cache().lock().unwrap().get(&n) {
        return p.clone();
    }
    let mut p = vec![Q::zero(); n as usize + 1];
    p[0] = -Q::one();
    p[n as usize] = Q::one();
    for d in 1..n {
        if n % d == 0 {
            let phi_d = cyclotomic_poly(d);
            let (quot, rem) = poly_divrem(&p, &phi_d);
            debug_assert!(rem.is_empty());
            p = quot;
        }
    }
    let p = Arc::new(p);
    cache().lock().unwrap().insert(n, p.clone());
    p
}

pub fn euler_phi(n: u32) -> usize {
    cyclotomic_poly(n).len() - 1
}

/// Element of Q[eta]/Phi_order(eta), stored as its canonical remainder.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CycScalar {
    order: u32,
    coeffs: Vec<Q>,
}

impl fmt::Debug for CycScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| format!("{c}*e^{i}"))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

impl CycScalar {
    fn from_poly(order: u32, mut p: Vec<Q>) -> Self {
        let phi = cyclotomic_poly(order);
        let deg = phi.len() - 1;
        poly_trim(&mut p);
        let mut rem = if p.len() > deg { poly_divrem(&p, &phi).1 } else { p };
        rem.resize(deg, Q::zero());
        CycScalar { order, coeffs: rem }
    }

    pub fn zero(order: u32) -> Self {
        CycScalar { order, coeffs: vec![Q::zero(); euler_phi(order)] }
    }

    pub fn one(order: u32) -> Self {
        Self::from_q(order, Q::one())
    }

    pub fn from_q(order: u32, x: Q) -> Self {
        let mut c = Self::zero(order);
        c.coeffs[0] = x;
        c
    }

    /// eta^k with eta a primitive `order`-th root of unity.
    pub fn eta_pow(order: u32, k: i64) -> Self {
        let e = k.rem_euclid(order as i64) as usize;
        let mut p = vec![Q::zero(); e + 1];
        p[e] = Q::one();
        Self::from_poly(order, p)
    }

    /// theta^a where theta = eta^2 is a primitive r-th root of unity and the
    /// ring has order 2r.
    pub fn theta_pow(r: u32, a: i64) -> Self {
        Self::eta_pow(2 * r, 2 * a)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_rational(&self) -> bool {
        self.coeffs.iter().skip(1).all(|c| c.is_zero())
    }

    pub fn rational_part(&self) -> Result<Q, MathError> {
        if self.is_rational() {
            Ok(self.coeffs[0].clone())
        } else {
            Err(MathError::NotRational(format!("{self:?}")))
        }
    }

    fn check(&self, o: &Self) {
        assert_eq!(self.order, o.order, "cyclotomic order mismatch");
    }

    pub fn add(&self, o: &Self) -> Self {
        self.check(o);
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect();
        CycScalar { order: self.order, coeffs }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.check(o);
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect();
        CycScalar { order: self.order, coeffs }
    }

    pub fn neg(&self) -> Self {
        CycScalar { order: self.order, coeffs: self.coeffs.iter().map(|a| -a).collect() }
    }

    pub fn scale(&self, x: &Q) -> Self {
        CycScalar { order: self.order, coeffs: self.coeffs.iter().map(|a| a * x).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.check(o);
        if self.is_rational() {
            return o.scale(&self.coeffs[0]);
        }
        if o.is_rational() {
            return self.scale(&o.coeffs[0]);
        }
        Self::from_poly(self.order, poly_mul(&self.coeffs, &o.coeffs))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.order);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self) -> Result<Self, MathError> {
        if self.is_zero() {
            return Err(MathError::NotInvertible);
        }
        let phi = cyclotomic_poly(self.order).to_vec();
        let mut a = self.coeffs.clone();
        poly_trim(&mut a);
        // invariant: s_i * self = r_i mod phi
        let (mut r0, mut r1) = (phi, a);
        let (mut s0, mut s1): (Vec<Q>, Vec<Q>) = (vec![], vec![Q::one()]);
        while r1.len() > 1 {
            let (quot, rem) = poly_divrem(&r0, &r1);
            let s2 = poly_sub(&s0, &poly_mul(&quot, &s1));
            r0 = std::mem::replace(&mut r1, rem);
            s0 = std::mem::replace(&mut s1, s2);
            if r1.is_empty() {
                return Err(MathError::NotInvertible);
            }
        }
        let c = r1[0].clone();
        let s: Vec<Q> = s1.iter().map(|x| x / &c).collect();
        Ok(Self::from_poly(self.order, s))
    }
}

/// Canonical representative of sum_k poly[k] eta^k, exponents taken mod order.
pub fn cyc_reduce(poly: &BTreeMap<i64, Q>, order: u32) -> Result<CycScalar, MathError> {
    if order < 2 {
        return Err(MathError::BadOrder(order));
    }
    let mut p = vec![Q::zero(); order as usize];
    for (k, c) in poly {
        p[k.rem_euclid(order as i64) as usize] += c;
    }
    Ok(CycScalar::from_poly(order, p))
}

/// Sum_{m=0}^{r-1} theta^{m a}, a rational number (r or 0).
pub fn root_sum(r: u32, a: i64) -> Q {
    if a.rem_euclid(r as i64) == 0 {
        qi(r as i64)
    } else {
        Q::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactmath::rational::q;

    #[test]
    fn small_cyclotomics() {
        let p4 = cyclotomic_poly(4);
        assert_eq!(*p4, vec![qi(1), qi(0), qi(1)]);
        let p6 = cyclotomic_poly(6);
        assert_eq!(*p6, vec![qi(1), qi(-1), qi(1)]);
        assert_eq!(euler_phi(10), 4);
        assert_eq!(euler_phi(16), 8);
    }

    #[test]
    fn geometric_sum_vanishes() {
        let r = 3;
        let mut poly = BTreeMap::new();
        for m in 0..r {
            poly.insert(2 * m as i64, qi(1));
        }
        assert!(cyc_reduce(&poly, 2 * r).unwrap().is_zero());
    }

    #[test]
    fn theta_to_the_r() {
        for r in 2..9 {
            assert_eq!(CycScalar::theta_pow(r, r as i64), CycScalar::one(2 * r));
        }
    }

    #[test]
    fn inverse_at_r2() {
        let one = CycScalar::one(4);
        let x = one.sub(&CycScalar::theta_pow(2, 1));
        assert_eq!(x.inv().unwrap().rational_part().unwrap(), q(1, 2));
    }

    #[test]
    fn rational_part_examples() {
        assert_eq!(CycScalar::from_q(10, q(5, 3)).rational_part().unwrap(), q(5, 3));
        let r = 5;
        let mut acc = CycScalar::zero(2 * r);
        for a in 1..r {
            acc = acc.add(&CycScalar::theta_pow(r, a as i64));
        }
        assert_eq!(acc.rational_part().unwrap(), qi(-1));
        assert!(CycScalar::theta_pow(3, 1).rational_part().is_err());
    }

    #[test]
    fn inverse_general() {
        for order in [6u32, 8, 10, 12] {
            for k in 1..order as i64 {
                let x = CycScalar::one(order).sub(&CycScalar::eta_pow(order, k));
                let y = x.inv().unwrap();
                assert_eq!(x.mul(&y), CycScalar::one(order));
            }
        }
    }
}
