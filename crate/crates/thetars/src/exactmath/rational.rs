//! Rational scalars, the "p/q" text form, and the r-multifactorial.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::MathError;

/// Exact rational, always in lowest terms with positive denominator.
pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

pub fn qz() -> Q {
    Q::zero()
}

/// Serializes as `p/q`, including `/1` for integers.
pub fn to_pq(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn from_pq(s: &str) -> Result<Q, MathError> {
    let bad = || MathError::Parse(s.to_string());
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

/// m!^{(r)}: m (m-r) (m-2r) ... down to the representative in [1, r].
pub fn multifactorial(m: u64, r: u64) -> BigInt {
    assert!(m >= 1 && r >= 1, "multifactorial needs m, r >= 1");
    let mut acc = BigInt::one();
    let mut k = m;
    loop {
        acc *= BigInt::from(k);
        if k <= r {
            break;
        }
        k -= r;
    }
    acc
}

/// Generalized binomial coefficient nu choose a for rational nu.
pub fn binom_q(nu: &Q, a: usize) -> Q {
    let mut acc = Q::one();
    for i in 0..a {
        acc = acc * (nu - qi(i as i64)) / qi(i as i64 + 1);
    }
    acc
}

pub fn binom_i(n: i64, a: usize) -> Q {
    binom_q(&qi(n), a)
}

/// Double factorial (2n-1)!! as a rational, with (-1)!! = 1.
pub fn odd_double_factorial(n: usize) -> Q {
    let mut acc = BigInt::one();
    for i in 1..=n {
        acc *= BigInt::from(2 * i as i64 - 1);
    }
    Q::from_integer(acc)
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |a, i| a * BigInt::from(i))
}

pub fn pow_q(x: &Q, e: i64) -> Q {
    if e >= 0 {
        num_traits::pow(x.clone(), e as usize)
    } else {
        num_traits::pow(x.recip(), (-e) as usize)
    }
}

pub fn sign_pow(e: i64) -> Q {
    if e.rem_euclid(2) == 0 {
        Q::one()
    } else {
        -Q::one()
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    a.abs().gcd(&b.abs())
}

pub fn is_integer(x: &Q) -> bool {
    x.denom().is_one()
}

pub fn abs_q(x: &Q) -> Q {
    x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multifactorial_values() {
        assert_eq!(multifactorial(7, 3), BigInt::from(28));
        assert_eq!(multifactorial(5, 2), BigInt::from(15));
        assert_eq!(multifactorial(3, 3), BigInt::from(3));
        assert_eq!(multifactorial(1, 5), BigInt::from(1));
    }

    #[test]
    fn pq_round_trip() {
        for x in [q(1, 8), q(-5, 32), qi(3), qz()] {
            assert_eq!(from_pq(&to_pq(&x)).unwrap(), x);
        }
        assert_eq!(to_pq(&qi(2)), "2/1");
        assert_eq!(from_pq("6/4").unwrap(), q(3, 2));
        assert!(from_pq("1/0").is_err());
        assert!(from_pq("x").is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binom_q(&q(1, 2), 2), q(-1, 8));
        assert_eq!(binom_i(5, 2), qi(10));
        assert_eq!(binom_i(-3, 2), qi(6));
        assert_eq!(odd_double_factorial(3), qi(15));
    }
}
