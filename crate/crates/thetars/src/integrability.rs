//! Descendant potential, initial data for the r-KdV normal coordinates,
//! the constants d_alpha and the string equation.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::correlators::{CorrError, Engine};
use crate::exactmath::rational::{binom_i, q, qi};
use crate::exactmath::Q;
use crate::walgebra::{a_constant, hpoly_deriv, HPoly, PotentialTrunc, WError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrabilityError {
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    W(#[from] WError),
    #[error("u_{alpha} does not match the closed form at hbar^{hbar} x_1^{x1}: {got} vs {expected}")]
    FormMismatch { alpha: i64, hbar: i64, x1: i64, got: Q, expected: Q },
    #[error("{0}")]
    Invalid(String),
}

/// F_{g,n}[m] = <Theta(a) prod psi^k> prod m_i!^{(r)} for 2g-2+n <= order,
/// on indices <= cutoff.
pub fn assemble_potential(r: i64, s: i64, order: i64, cutoff: i64) -> Result<PotentialTrunc, CorrError> {
    let mut eng = Engine::new(r, s)?;
    assemble_with(&mut eng, order, cutoff)
}

pub fn assemble_with(eng: &mut Engine, order: i64, cutoff: i64) -> Result<PotentialTrunc, CorrError> {
    let (r, s) = (eng.r, eng.s);
    let mut z = PotentialTrunc::new(r, s, order, cutoff);
    for h in 1..=order {
        for n in 1..=(h + 2) as usize {
            if (h + 2 - n as i64) % 2 != 0 {
                continue;
            }
            let g = (h + 2 - n as i64) / 2;
            let t = eng.omega(g, n)?;
            let scale = num_traits::pow(qi(-r), h as usize);
            for (m, c) in &t.entries {
                if m.windows(2).all(|w| w[0] <= w[1]) && m.iter().all(|&x| x <= cutoff) {
                    z.set(g, m, c * &scale);
                }
            }
        }
    }
    Ok(z)
}

/// u_alpha as a polynomial: (hbar power, power of x_1) -> coefficient.
pub type UPoly = BTreeMap<(i64, i64), Q>;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// d (hbar/(1 - hbar x_1))^exponent
    Closed { alpha: i64, d: Q, exponent: i64 },
    Polynomial { alpha: i64, coeffs: UPoly },
}

/// (g,n) with n >= 2, 2g-2+n <= order and alpha = s(2g-2+n) - n + 1.
pub fn support(s: i64, alpha: i64, order: i64) -> Vec<(i64, usize)> {
    let mut out = Vec::new();
    for h in 1..=order {
        for n in 2..=(h + 2) {
            if (h + 2 - n) % 2 == 0 && alpha == s * h - n + 1 {
                out.push(((h + 2 - n) / 2, n as usize));
            }
        }
    }
    out
}

/// u_alpha = sum hbar^{2g-2+n}/(n-2)! F_{g,n}[alpha,1,..,1] x_1^{n-2} up to
/// hbar^order. Only the (g,n) allowed by the dimension constraint are
/// evaluated.
pub fn u_series(eng: &mut Engine, alpha: i64, order: i64) -> Result<UPoly, CorrError> {
    let (r, s) = (eng.r, eng.s);
    let mut out = UPoly::new();
    for (g, n) in support(s, alpha, order) {
        let h = 2 * g - 2 + n as i64;
        let mut m = vec![alpha];
        m.extend(std::iter::repeat(1).take(n - 1));
        let entry = eng.omega_at(g, &m)?;
        // F[m] = (-r)^h entry
        let f = num_traits::pow(qi(-r), h as usize) * entry;
        let c = f / Q::from_integer(crate::exactmath::rational::factorial(n - 2));
        if !c.is_zero() {
            out.insert((h, n as i64 - 2), c);
        }
    }
    Ok(out)
}

/// d_alpha = alpha^2 <Theta^{r,1}_{g,1}(alpha)> for alpha = 2g-1, else 0.
pub fn d_alpha(eng: &mut Engine, alpha: i64) -> Result<Q, CorrError> {
    if alpha % 2 == 0 {
        return Ok(Q::zero());
    }
    let g = (alpha + 1) / 2;
    let entry = eng.omega_at(g, &[alpha])?;
    let h = 2 * g - 1;
    // <Theta(alpha)> = (-r)^h entry / alpha!^{(r)}, alpha!^{(r)} = alpha
    let val = num_traits::pow(qi(-eng.r), h as usize) * entry / qi(alpha);
    Ok(qi(alpha * alpha) * val)
}

pub fn d1_closed_form(r: i64) -> Q {
    q((r - 1) * r + 1, 24 * (r - 1))
}

/// u_alpha to hbar^order. For s = 1 the series is matched coefficient by
/// coefficient against d_alpha (hbar/(1-hbar x_1))^{alpha+1}.
pub fn initial_conditions(eng: &mut Engine, alpha: i64, order: i64) -> Result<InitialCondition, IntegrabilityError> {
    let (r, s) = (eng.r, eng.s);
    if alpha < 1 || alpha >= r {
        return Err(IntegrabilityError::Invalid(format!("alpha = {alpha} outside [1, {}]", r - 1)));
    }
    let u = u_series(eng, alpha, order)?;
    if s != 1 {
        return Ok(InitialCondition::Polynomial { alpha, coeffs: u });
    }
    let d = d_alpha(eng, alpha)?;
    let e = alpha + 1;
    let mut expect = UPoly::new();
    for j in 0..=(order - e).max(-1) {
        let c = &d * binom_i(e - 1 + j, j as usize);
        if !c.is_zero() {
            expect.insert((e + j, j), c);
        }
    }
    let keys: std::collections::BTreeSet<(i64, i64)> = u.keys().chain(expect.keys()).cloned().collect();
    for key in keys {
        let got = u.get(&key).cloned().unwrap_or_else(Q::zero);
        let want = expect.get(&key).cloned().unwrap_or_else(Q::zero);
        if got != want {
            return Err(IntegrabilityError::FormMismatch { alpha, hbar: key.0, x1: key.1, got, expected: want });
        }
    }
    Ok(InitialCondition::Closed { alpha, d, exponent: e })
}

/// Whether a polynomial u_alpha is supported on the (g,n) of the dimension
/// constraint, i.e. hbar power h and x_1 power n-2 with alpha = s h - n + 1.
pub fn polynomial_support_ok(s: i64, alpha: i64, coeffs: &UPoly) -> bool {
    coeffs.keys().all(|&(h, p)| alpha == s * h - (p + 2) + 1)
}

/// Z^{-1}(hbar d_1 - hbar^2 sum m x_m d_m - hbar^2 c) Z up to hbar^{order+1}.
pub fn string_operator_residual(z: &PotentialTrunc, c: &Q) -> HPoly {
    let log_z = z.log_z();
    let max = z.order + 1;
    let mut out = HPoly::new();
    for ((h, m), v) in hpoly_deriv(&log_z, 1) {
        if h + 1 <= max {
            *out.entry((h + 1, m)).or_insert_with(Q::zero) += v;
        }
    }
    for ((h, m), v) in &log_z {
        if h + 2 <= max {
            let w: i64 = m.iter().sum();
            *out.entry((h + 2, m.clone())).or_insert_with(Q::zero) -= v * qi(w);
        }
    }
    *out.entry((2, vec![])).or_insert_with(Q::zero) -= c;
    out.retain(|_, v| !v.is_zero());
    out
}

/// Residual of the string equation with the given d_1. Needs s = 1.
pub fn check_string_equation(z: &PotentialTrunc, d1: &Q) -> Result<HPoly, IntegrabilityError> {
    if z.s != 1 {
        return Err(IntegrabilityError::Invalid("string equation needs s = 1".into()));
    }
    Ok(string_operator_residual(z, d1))
}

/// d_1 - (r^2-1)/24 - r A_2, zero by the closed forms.
pub fn d1_identity_defect(r: i64) -> Q {
    d1_closed_form(r) - q(r * r - 1, 24) - qi(r) * a_constant(r, 1, 2)
}

/// Primary unit-axiom check on (r,1) tables: <Theta_{g,n+1}(a,1)> =
/// (2g-2+n) <Theta_{g,n}(a)> for every primary record with 2g-2+n+1 <=
/// order. Returns the failures.
pub fn check_unit_axiom(eng: &mut Engine, order: i64) -> Result<Vec<String>, CorrError> {
    let r = eng.r;
    let mut bad = Vec::new();
    for h in 1..order {
        for n in 1..=(h + 2) as usize {
            if (h + 2 - n as i64) % 2 != 0 {
                continue;
            }
            let g = (h + 2 - n as i64) / 2;
            let small = eng.intersection_numbers(g, n)?;
            let big = eng.intersection_numbers(g, n + 1)?;
            for rec in small.iter().filter(|x| x.k.iter().all(|&k| k == 0)) {
                let mut a = rec.a.clone();
                a.push(1);
                let got = big
                    .iter()
                    .find(|x| x.a == a && x.k.iter().all(|&k| k == 0))
                    .map(|x| x.value.clone())
                    .unwrap_or_else(Q::zero);
                let want = qi(h) * &rec.value;
                if got != want {
                    bad.push(format!("r={r} g={g} a={:?}: {got} vs {want}", rec.a));
                }
            }
        }
    }
    Ok(bad)
}
