//! Baker-Akhiezer kernel in its finite form, the regularized diagonal and
//! the matrix kernel at coincident base points.
//!
//! With the exponentials and half densities stripped,
//! `K(z1,z2) = e^{(r/s)(z2^s - z1^s)/hbar} N(z1,z2)/(x1-x2) sqrt(dz1 dz2)`
//! where the numerator N is a finite sum of products of wave functions.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::exactmath::rational::qi;
use crate::exactmath::{CycScalar, GradedSeries, Q};
use crate::wavefunc::{self, apply_dentry, connection_matrix, WaveError, WaveMatrix, WaveTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("exponential charges ({0},{1}) do not follow the (-1,+1) pattern")]
    ChargeMismatch(i64, i64),
    #[error("numerator does not vanish on the diagonal at hbar^{0}")]
    DiagonalNonZero(i64),
    #[error("series error: {0}")]
    Series(String),
}

/// Monomial `coeff * z1^alpha z2^beta` of the numerator.
#[derive(Clone, Debug, PartialEq)]
pub struct NumTerm {
    pub alpha: i64,
    pub beta: i64,
    pub coeff: Q,
}

/// N(z1,z2) split by hbar order; `by_order[m]` is homogeneous of degree
/// r-1-sm.
#[derive(Clone, Debug, PartialEq)]
pub struct Numerator {
    pub r: i64,
    pub s: i64,
    pub by_order: Vec<Vec<NumTerm>>,
}

pub fn numerator(table: &WaveTable, order: u32) -> Result<Numerator, KernelError> {
    let (r, s) = (table.r, table.s);
    let mut acc: Vec<BTreeMap<(i64, i64), Q>> = vec![BTreeMap::new(); order as usize + 1];
    for k in 1..=r {
        let kd = if k <= r - s { 1 - k } else { r + 1 - k };
        for m1 in 0..=order {
            let c1 = table.dual(kd, m1)?;
            for m2 in 0..=(order - m1) {
                let c2 = table.c(k, m2)?;
                let key = (r - k - s * m1 as i64, k - 1 - s * m2 as i64);
                *acc[(m1 + m2) as usize].entry(key).or_insert_with(Q::zero) += &c1 * c2;
            }
        }
    }
    let by_order = acc
        .into_iter()
        .map(|m| {
            m.into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|((alpha, beta), coeff)| NumTerm { alpha, beta, coeff })
                .collect()
        })
        .collect();
    Ok(Numerator { r, s, by_order })
}

impl Numerator {
    pub fn order(&self) -> u32 {
        self.by_order.len() as u32 - 1
    }

    /// N as a two-variable series with the given windows.
    pub fn series(&self, window: Vec<(i64, i64)>) -> GradedSeries<Q> {
        let mut out = GradedSeries::new(&["z1", "z2"], window, (0, self.order() as i64));
        for (m, terms) in self.by_order.iter().enumerate() {
            for t in terms {
                out.add_term(m as i64, vec![t.alpha, t.beta], t.coeff.clone());
            }
        }
        out
    }

    /// N(z,z) at each order.
    pub fn on_diagonal(&self) -> Vec<BTreeMap<i64, Q>> {
        self.by_order
            .iter()
            .map(|terms| {
                let mut m: BTreeMap<i64, Q> = BTreeMap::new();
                for t in terms {
                    *m.entry(t.alpha + t.beta).or_insert_with(Q::zero) += &t.coeff;
                }
                m.retain(|_, c| !c.is_zero());
                m
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelRepr {
    /// 1/(x1-x2) kept as a formal factor.
    Symbolic,
    /// 1/(x1-x2) expanded in |z1| > |z2| to the given depth.
    Geometric(usize),
}

#[derive(Clone, Debug)]
pub struct ReducedKernel {
    pub r: i64,
    pub s: i64,
    pub numerator: Numerator,
    pub charges: (i64, i64),
    pub repr: KernelRepr,
}

pub fn check_charges(charges: (i64, i64)) -> Result<(), KernelError> {
    if charges != (-1, 1) {
        return Err(KernelError::ChargeMismatch(charges.0, charges.1));
    }
    Ok(())
}

pub fn kernel_offdiag(r: i64, s: i64, order: u32, repr: KernelRepr) -> Result<ReducedKernel, KernelError> {
    wavefunc::validate(r, s)?;
    let table = WaveTable::for_kernel(r, s, order)?;
    let numerator = numerator(&table, order)?;
    let charges = (-1, 1);
    check_charges(charges)?;
    Ok(ReducedKernel { r, s, numerator, charges, repr })
}

impl ReducedKernel {
    /// N/(x1-x2) expanded in |z1| > |z2|: exact for z2 exponents
    /// <= r(depth+1) - s m - 1 at hbar^m.
    pub fn expand(&self, depth: usize) -> GradedSeries<Q> {
        let r = self.r;
        let order = self.numerator.order() as i64;
        let lo = -(self.s * order) - r * (depth as i64 + 2) - 1;
        let hi = r * (depth as i64 + 1) + r;
        let mut out = GradedSeries::new(&["z1", "z2"], vec![(lo, hi), (lo, hi)], (0, order));
        for (m, terms) in self.numerator.by_order.iter().enumerate() {
            for t in terms {
                for p in 0..=depth as i64 {
                    out.add_term(m as i64, vec![t.alpha - r * (p + 1), t.beta + r * p], t.coeff.clone());
                }
            }
        }
        out
    }

    pub fn body(&self) -> GradedSeries<Q> {
        match self.repr {
            KernelRepr::Symbolic => {
                let w = (-(self.s * self.numerator.order() as i64) - 2 * self.r, 2 * self.r);
                self.numerator.series(vec![w, w])
            }
            KernelRepr::Geometric(d) => self.expand(d),
        }
    }
}

/// `sum_{k=1}^{kmax} psi*_{1-k}(z1) psi_k(z2)` stripped, the infinite-sum
/// form of the kernel truncated in k.
pub fn infinite_sum(table: &WaveTable, kmax: i64, order: u32) -> Result<GradedSeries<Q>, KernelError> {
    let s = table.s;
    let lo = -(s * order as i64) - kmax - 2;
    let hi = kmax + 2;
    let mut out = GradedSeries::new(&["z1", "z2"], vec![(lo, hi), (lo, hi)], (0, order as i64));
    for k in 1..=kmax {
        for m1 in 0..=order {
            let c1 = table.dual(1 - k, m1)?;
            for m2 in 0..=(order - m1) {
                let c2 = table.c(k, m2)?;
                out.add_term(
                    (m1 + m2) as i64,
                    vec![-k - s * m1 as i64, k - 1 - s * m2 as i64],
                    &c1 * c2,
                );
            }
        }
    }
    Ok(out)
}

/// Compares the finite and the infinite-sum forms on the window where both
/// are exact; returns the number of compared coefficients and the first
/// mismatch.
pub fn compare_sum_forms(r: i64, s: i64, order: u32, kmax: i64, depth: usize) -> Result<(usize, Option<(i64, Vec<i64>)>), KernelError> {
    let table = WaveTable::build(r, s, 1 - kmax, kmax.max(r), order)?;
    let fin = ReducedKernel { r, s, numerator: numerator(&table, order)?, charges: (-1, 1), repr: KernelRepr::Geometric(depth) }.expand(depth);
    let inf = infinite_sum(&table, kmax, order)?;
    let mut count = 0;
    for m in 0..=order as i64 {
        let bound = (kmax - 1).min(r * (depth as i64 + 1) - 1) - s * m;
        let mut keys: Vec<Vec<i64>> = fin.hbar_slice(m).into_keys().chain(inf.hbar_slice(m).into_keys()).collect();
        keys.sort();
        keys.dedup();
        for e in keys {
            if e[1] > bound {
                continue;
            }
            count += 1;
            let a = fin.terms.get(&(m, e.clone()));
            let b = inf.terms.get(&(m, e.clone()));
            if a != b {
                return Ok((count, Some((m, e))));
            }
        }
    }
    Ok((count, None))
}

/// Entry of the matrix kernel at coincident base points: stripped series in
/// z (coefficient of dz after removing the exponential) and the sheet
/// charges (a of the dual slot, b of the direct slot).
#[derive(Clone, Debug)]
pub struct DiagEntry {
    pub series: GradedSeries<CycScalar>,
    pub sheets: (i64, i64),
}

/// `-(1/hbar) Psi^{-1} D Psi dx`, entries (a,b) for a,b in 1..=r; exact to
/// hbar^{order-1}.
pub fn kernel_diag(wm: &WaveMatrix) -> Result<Vec<Vec<DiagEntry>>, KernelError> {
    let r = wm.r;
    let d = connection_matrix(r, wm.s)?;
    let n = r as usize;
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            let mut acc: Option<GradedSeries<CycScalar>> = None;
            for k in 0..n {
                for l in 0..n {
                    if d.entries[k][l].is_zero() {
                        continue;
                    }
                    let dpsi = apply_dentry(&d.entries[k][l], &wm.psi[l][b].series, r);
                    let mut inv = wm.psi_inv[a][k].series.clone();
                    inv.hbar_range = dpsi.hbar_range;
                    let p = inv.mul(&dpsi).map_err(|e| KernelError::Series(e.to_string()))?;
                    acc = Some(match acc {
                        None => p,
                        Some(x) => x.add(&p).map_err(|e| KernelError::Series(e.to_string()))?,
                    });
                }
            }
            let series = acc.expect("D has non-zero entries in every row").shift(-1, &[0]).neg();
            let series = wavefunc::drop_above(&series, wm.order as i64 - 1);
            row.push(DiagEntry { series, sheets: ((a + 1) as i64, (b + 1) as i64) });
        }
        out.push(row);
    }
    Ok(out)
}

/// y dx / hbar in the sheet a, as the coefficient of dz: r theta^{as} z^{s-1}.
pub fn ydx_sheet(r: i64, s: i64, a: i64) -> CycScalar {
    CycScalar::theta_pow(r as u32, a * s).scale(&qi(r))
}

/// Stable part of the limit of N(z,z0)/(x-x0) as z0 -> z, the coefficient of
/// dz: `sum_{m>=1} hbar^m (-d_{z0} N_m(z,z0)|_{z0=z} / (r z^{r-1}))`.
pub fn diagonal_limit(num: &Numerator) -> Result<GradedSeries<Q>, KernelError> {
    let (r, s) = (num.r, num.s);
    let order = num.order() as i64;
    for (m, d) in num.on_diagonal().iter().enumerate().skip(1) {
        if !d.is_empty() {
            return Err(KernelError::DiagonalNonZero(m as i64));
        }
    }
    let mut out = GradedSeries::new(&["z"], vec![(-(s * order) - 1, s)], (-1, order));
    for (m, terms) in num.by_order.iter().enumerate().skip(1) {
        for t in terms {
            out.add_term(m as i64, vec![t.alpha + t.beta - r], -&t.coeff * qi(t.beta) / qi(r));
        }
    }
    Ok(out)
}

/// Regularized diagonal taken literally: the limit with the pole removed
/// plus y dx/hbar.
pub fn regularized_diag(num: &Numerator) -> Result<GradedSeries<Q>, KernelError> {
    let mut out = diagonal_limit(num)?;
    out.add_term(-1, vec![num.s - 1], qi(num.r));
    Ok(out)
}

/// One-point function `omega_1 = y dx/hbar - (stable part of the diagonal
/// limit)`, coefficient of dz, hbar in [-1, order]. This equals
/// `(1/hbar) Psi^{-1} D Psi dx` at the sheet r.
pub fn omega1(num: &Numerator) -> Result<GradedSeries<Q>, KernelError> {
    let mut out = diagonal_limit(num)?.neg();
    out.add_term(-1, vec![num.s - 1], qi(num.r));
    Ok(out)
}

/// K(theta^a z, theta^b z) for a != b by L'Hopital on the numerator, with
/// the half-density branch of the wave matrix.
pub fn preimage_kernel(num: &Numerator, a: i64, b: i64) -> GradedSeries<CycScalar> {
    let r = num.r;
    let order = num.order() as i64;
    let ring = 2 * r as u32;
    let half = CycScalar::eta_pow(ring, -(a + b) * (r - 1));
    let mut out = GradedSeries::new(&["z"], vec![(-(num.s * order) - 2 * r, 2 * r)], (0, order));
    for (m, terms) in num.by_order.iter().enumerate() {
        for t in terms {
            let ph = CycScalar::theta_pow(r as u32, a * t.alpha + b * t.beta).mul(&half);
            out.add_term(m as i64, vec![t.alpha + t.beta - r], ph.scale(&(-&t.coeff * qi(t.beta) / qi(r))));
        }
    }
    out
}

/// Checks every off-diagonal entry of the matrix formula against
/// `preimage_kernel`, each diagonal entry against `-omega_1` on its sheet,
/// and the literal regularization against `omega_1` up to the sign of the
/// stable part.
pub fn check_diag_consistency(wm: &WaveMatrix) -> Result<Vec<(i64, i64)>, KernelError> {
    let (r, s) = (wm.r, wm.s);
    let table = WaveTable::for_kernel(r, s, wm.order)?;
    let num = numerator(&table, wm.order)?;
    let w1 = omega1(&num)?;
    let lit = regularized_diag(&num)?;
    let mut bad = Vec::new();
    let unstable = GradedSeries::monomial(&["z"], w1.window.clone(), w1.hbar_range, -1, vec![s - 1], qi(2 * r));
    if lit.add(&w1).map_err(|e| KernelError::Series(e.to_string()))? != unstable {
        bad.push((0, 0));
    }
    let diag = kernel_diag(wm)?;
    let top = wm.order as i64 - 1;
    for a in 1..=r {
        for b in 1..=r {
            let got = &diag[(a - 1) as usize][(b - 1) as usize].series;
            let expect = if a == b {
                w1.substitute_root(0, a, r as u32).scale(&CycScalar::theta_pow(r as u32, a)).neg()
            } else {
                preimage_kernel(&num, a, b)
            };
            let same = (-1..=top).all(|h| got.hbar_slice(h) == expect.hbar_slice(h));
            if !same {
                bad.push((a, b));
            }
        }
    }
    Ok(bad)
}

/// Sum of the diagonal of the matrix kernel, compared with -(1/hbar) tr(D) dx.
pub fn trace_residual(wm: &WaveMatrix) -> Result<GradedSeries<CycScalar>, KernelError> {
    let diag = kernel_diag(wm)?;
    let d = connection_matrix(wm.r, wm.s)?;
    let t = d.trace();
    let r = wm.r;
    let mut acc = diag[0][0].series.empty_like();
    for (i, row) in diag.iter().enumerate() {
        acc = acc.add(&row[i].series).map_err(|e| KernelError::Series(e.to_string()))?;
    }
    // -(1/hbar)(c + (u + hbar v)/x) r z^{r-1}
    let ring = 2 * r as u32;
    let mut expect = acc.empty_like();
    expect.add_term(-1, vec![r - 1], CycScalar::from_q(ring, -&t.constant * qi(r)));
    expect.add_term(-1, vec![-1], CycScalar::from_q(ring, -&t.inv_x * qi(r)));
    expect.add_term(0, vec![-1], CycScalar::from_q(ring, -&t.hbar_inv_x * qi(r)));
    acc.sub(&expect).map_err(|e| KernelError::Series(e.to_string()))
}

/// Leading check: N at hbar^0 equals (z1^r - z2^r)/(z1 - z2).
pub fn leading_numerator_ok(num: &Numerator) -> bool {
    let r = num.r;
    let mut expect: Vec<NumTerm> = (0..r).map(|j| NumTerm { alpha: r - 1 - j, beta: j, coeff: Q::one() }).collect();
    let mut got = num.by_order[0].clone();
    expect.sort_by_key(|t| (t.alpha, t.beta));
    got.sort_by_key(|t| (t.alpha, t.beta));
    got == expect
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunc::{default_zwindow, wave_matrix};
    use crate::exactmath::rational::q;

    #[test]
    fn bessel_numerator() {
        let k = kernel_offdiag(2, 1, 3, KernelRepr::Symbolic).unwrap();
        assert!(leading_numerator_ok(&k.numerator));
        let d = k.numerator.on_diagonal();
        assert!(d[1..].iter().all(|x| x.is_empty()));
    }

    #[test]
    fn omega1_bessel() {
        let t = WaveTable::for_kernel(2, 1, 3).unwrap();
        let n = numerator(&t, 3).unwrap();
        let w = omega1(&n).unwrap();
        assert_eq!(w.coeff(-1, &[0]).unwrap(), Some(&qi(2)));
        assert_eq!(w.coeff(1, &[-2]).unwrap(), Some(&q(-1, 16)));
        let lit = regularized_diag(&n).unwrap();
        assert_eq!(lit.coeff(1, &[-2]).unwrap(), Some(&q(1, 16)));
        assert!(w.hbar_slice(0).is_empty());
        assert!(w.hbar_slice(2).is_empty());
    }

    #[test]
    fn sum_forms_agree() {
        for (r, s) in [(2, 1), (3, 2), (4, 1)] {
            let (n, bad) = compare_sum_forms(r, s, 3, 12, 4).unwrap();
            assert!(n > 12);
            assert_eq!(bad, None, "{r},{s}");
        }
    }

    #[test]
    fn diagonal_matrix_formula() {
        for (r, s) in [(2, 1), (3, 1), (3, 2)] {
            let wm = wave_matrix(r, s, 4, default_zwindow(r, s, 4)).unwrap();
            assert_eq!(check_diag_consistency(&wm).unwrap(), vec![], "{r},{s}");
            assert!(trace_residual(&wm).unwrap().is_zero());
        }
    }

    #[test]
    fn charge_pattern() {
        assert!(check_charges((-1, 1)).is_ok());
        assert!(check_charges((1, -1)).is_err());
    }
}
