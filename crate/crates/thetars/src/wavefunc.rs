//! Wave functions of the (r,s) curve, their duals, the wave matrix and the
//! connection matrix.
//!
//! A wave function is stored through its stripped form
//! `z^{k-1} sum_m c_{k,m} (hbar z^{-s})^m`; the exponential
//! `e^{(r/s) z^s / hbar}` and the half density `(r z^{r-1})^{-1/2}` are kept
//! as charges and never expanded.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::exactmath::rational::{binom_q, odd_double_factorial, q, qi};
use crate::exactmath::{CycScalar, GradedSeries, Q};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveError {
    #[error("invalid parameters r={r}, s={s}")]
    InvalidParameters { r: i64, s: i64 },
    #[error("wave coefficients fail the relation oracle: {0}")]
    OracleMismatch(String),
    #[error("inverse wave matrix mismatch at entry ({row},{col}): {detail}")]
    InverseMismatch { row: usize, col: usize, detail: String },
    #[error("exponential charges do not cancel: {0}")]
    ChargeMismatch(String),
    #[error("coefficient c[{k},{m}] not in table")]
    Missing { k: i64, m: u32 },
}

pub fn validate(r: i64, s: i64) -> Result<(), WaveError> {
    if r < 2 || s < 1 || s > r - 1 {
        return Err(WaveError::InvalidParameters { r, s });
    }
    Ok(())
}

/// Gaussian moment data for the saddle expansion of a fixed (r,s).
///
/// With t = w tau and w^2 = hbar z^{-s}, the integrand becomes
/// `(1 + w tau)^nu exp(sum_{j>=3} g_j w^{j-2} tau^j)` against a Gaussian in
/// tau of variance `-1/(r(r-s))`.
struct Saddle {
    /// weighted[d][a] = sum_b [w^d tau^b] exp(...) * <tau^{a+b}>
    weighted: Vec<Vec<Q>>,
}

impl Saddle {
    fn new(r: i64, s: i64, max_order: u32) -> Self {
        let dmax = 2 * max_order as usize;
        let ratio = q(r - s, s);
        // g_j for j = 3 ..= dmax + 2
        let g: Vec<Q> = (0..=dmax + 2)
            .map(|j| binom_q(&qi(s - r), j) + &ratio * binom_q(&qi(s), j))
            .collect();
        // exp part as w-degree -> (tau-degree -> coeff)
        let mut gen: Vec<BTreeMap<usize, Q>> = vec![BTreeMap::new(); dmax + 1];
        for j in 3..=dmax + 2 {
            if !g[j].is_zero() {
                gen[j - 2].insert(j, g[j].clone());
            }
        }
        let mut expo: Vec<BTreeMap<usize, Q>> = vec![BTreeMap::new(); dmax + 1];
        expo[0].insert(0, Q::one());
        let mut power = expo.clone();
        for n in 1..=dmax {
            power = bimul(&power, &gen, dmax);
            let inv_fact = Q::one() / Q::from_integer(crate::exactmath::rational::factorial(n));
            for d in 0..=dmax {
                for (t, c) in &power[d] {
                    *expo[d].entry(*t).or_insert_with(Q::zero) += c * &inv_fact;
                }
            }
        }
        let var = -Q::one() / qi(r * (r - s));
        let moment = |e: usize| -> Q {
            if e % 2 == 1 {
                Q::zero()
            } else {
                odd_double_factorial(e / 2) * num_traits::pow(var.clone(), e / 2)
            }
        };
        let mut weighted = vec![Vec::new(); dmax + 1];
        for d in 0..=dmax {
            for a in 0..=(dmax - d) {
                let mut acc = Q::zero();
                for (b, c) in &expo[d] {
                    acc += c * moment(a + b);
                }
                weighted[d].push(acc);
            }
        }
        Saddle { weighted }
    }

    fn coeff(&self, nu: &Q, m: u32) -> Q {
        let d = 2 * m as usize;
        (0..=d).map(|a| binom_q(nu, a) * &self.weighted[d - a][a]).sum()
    }
}

fn bimul(a: &[BTreeMap<usize, Q>], b: &[BTreeMap<usize, Q>], dmax: usize) -> Vec<BTreeMap<usize, Q>> {
    let mut out = vec![BTreeMap::new(); dmax + 1];
    for (da, pa) in a.iter().enumerate() {
        for (db, pb) in b.iter().enumerate() {
            if da + db > dmax {
                break;
            }
            for (ta, ca) in pa {
                for (tb, cb) in pb {
                    *out[da + db].entry(ta + tb).or_insert_with(Q::zero) += ca * cb;
                }
            }
        }
    }
    out
}

/// The coefficients c_{k,m}, filled for a window of k and m <= max_order.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveTable {
    pub r: i64,
    pub s: i64,
    pub max_order: u32,
    pub coeffs: BTreeMap<(i64, u32), Q>,
}

impl WaveTable {
    /// Fills c_{k,m} for k in [kmin, kmax] by the saddle expansion.
    pub fn build(r: i64, s: i64, kmin: i64, kmax: i64, max_order: u32) -> Result<Self, WaveError> {
        validate(r, s)?;
        let saddle = Saddle::new(r, s, max_order);
        let mut coeffs = BTreeMap::new();
        for k in kmin..=kmax {
            let nu = qi(k - 1) + q(s - r - 1, 2);
            for m in 0..=max_order {
                coeffs.insert((k, m), saddle.coeff(&nu, m));
            }
        }
        Ok(WaveTable { r, s, max_order, coeffs })
    }

    /// Table covering every index used by the kernel and by both relations
    /// on the kernel window.
    pub fn for_kernel(r: i64, s: i64, max_order: u32) -> Result<Self, WaveError> {
        let (lo, hi) = kernel_window(r, s);
        Self::build(r, s, lo - (r - s), hi + r, max_order)
    }

    pub fn get(&self, k: i64, m: u32) -> Option<&Q> {
        self.coeffs.get(&(k, m))
    }

    pub fn c(&self, k: i64, m: u32) -> Result<&Q, WaveError> {
        self.get(k, m).ok_or(WaveError::Missing { k, m })
    }

    /// Coefficient of the dual function, c*_{k,m} = (-1)^m c_{k,m}.
    pub fn dual(&self, k: i64, m: u32) -> Result<Q, WaveError> {
        let c = self.c(k, m)?;
        Ok(if m % 2 == 0 { c.clone() } else { -c })
    }

    pub fn k_range(&self) -> (i64, i64) {
        let lo = self.coeffs.keys().next().map(|x| x.0).unwrap_or(0);
        let hi = self.coeffs.keys().next_back().map(|x| x.0).unwrap_or(-1);
        (lo, hi)
    }

    /// Stripped wave function `sum_m c_{k,m} hbar^m z^{k-1-sm}` (dual: signs
    /// (-1)^m) as a one-variable series.
    pub fn stripped(&self, k: i64, dual: bool, window: (i64, i64)) -> Result<GradedSeries<Q>, WaveError> {
        let mut out = GradedSeries::new(&["z"], vec![window], (0, self.max_order as i64));
        for m in 0..=self.max_order {
            let c = if dual { self.dual(k, m)? } else { self.c(k, m)?.clone() };
            out.add_term(m as i64, vec![k - 1 - self.s * m as i64], c);
        }
        Ok(out)
    }
}

/// Indices {1-(r-s), ..., r} used by the finite kernel formula.
pub fn kernel_window(r: i64, s: i64) -> (i64, i64) {
    (1 - (r - s), r)
}

/// c_{k,m}, checked against the relation oracle on the kernel window.
pub fn wave_coeff(r: i64, s: i64, k: i64, m: u32) -> Result<Q, WaveError> {
    validate(r, s)?;
    let (lo, hi) = kernel_window(r, s);
    let table = WaveTable::build(r, s, (lo - (r - s)).min(k), (hi + r).max(k), m.max(1))?;
    let report = check_relations(&table, m.max(1));
    if !report.is_empty() {
        return Err(WaveError::OracleMismatch(format!("{} residuals", report.violations.len())));
    }
    Ok(table.c(k, m)?.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    /// hbar d/dx psi_k = psi_{k+s-r}
    Derivative,
    /// x psi_k = psi_{k+r} + hbar alpha_k psi_{k+r-s}
    Multiplication,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationViolation {
    pub relation: Relation,
    pub k: i64,
    pub m: u32,
    pub residual: Q,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelationReport {
    pub violations: Vec<RelationViolation>,
    pub checked: usize,
}

impl RelationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn relations(&self) -> Vec<Relation> {
        let mut v: Vec<Relation> = self.violations.iter().map(|x| x.relation).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// alpha_k = (2k+r-s-1)/(2(r-s)).
pub fn alpha(r: i64, s: i64, k: i64) -> Q {
    q(2 * k + r - s - 1, 2 * (r - s))
}

/// Residuals of both relations, coefficient by coefficient, for every k of
/// the kernel window and m <= max_order.
pub fn check_relations(table: &WaveTable, max_order: u32) -> RelationReport {
    let (r, s) = (table.r, table.s);
    let (lo, hi) = kernel_window(r, s);
    let mut report = RelationReport::default();
    let get = |k: i64, m: i64| -> Option<Q> {
        if m < 0 {
            Some(Q::zero())
        } else {
            table.get(k, m as u32).cloned()
        }
    };
    for k in lo..=hi {
        for m in 0..=max_order as i64 {
            // c_{k+s-r,m} = c_{k,m} + (1/r)(k-1-s(m-1)-(r-1)/2) c_{k,m-1}
            if let (Some(a), Some(b), Some(c)) = (get(k + s - r, m), get(k, m), get(k, m - 1)) {
                let f = (qi(k - 1 - s * (m - 1)) - q(r - 1, 2)) / qi(r);
                let res = a - b - f * c;
                report.checked += 1;
                if !res.is_zero() {
                    report.violations.push(RelationViolation { relation: Relation::Derivative, k, m: m as u32, residual: res });
                }
            }
            // c_{k,m} = c_{k+r,m} + alpha_k c_{k+r-s,m-1}
            if let (Some(a), Some(b), Some(c)) = (get(k, m), get(k + r, m), get(k + r - s, m - 1)) {
                let res = a - b - alpha(r, s, k) * c;
                report.checked += 1;
                if !res.is_zero() {
                    report.violations.push(RelationViolation { relation: Relation::Multiplication, k, m: m as u32, residual: res });
                }
            }
        }
    }
    report
}

/// Entry of the connection matrix: `constant + (inv_x + hbar * hbar_inv_x)/x`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DEntry {
    pub constant: Q,
    pub inv_x: Q,
    pub hbar_inv_x: Q,
}

impl DEntry {
    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.inv_x.is_zero() && self.hbar_inv_x.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionMatrix {
    pub r: i64,
    pub s: i64,
    /// 0-based rows and columns.
    pub entries: Vec<Vec<DEntry>>,
}

pub fn connection_matrix(r: i64, s: i64) -> Result<ConnectionMatrix, WaveError> {
    validate(r, s)?;
    let n = r as usize;
    let mut entries = vec![vec![DEntry::default(); n]; n];
    for k in 1..=r {
        let i = (k - 1) as usize;
        if k <= r - s {
            entries[i][i].hbar_inv_x = q(2 * k + s - r - 1, 2 * (r - s));
            entries[i][(k + s - 1) as usize].inv_x = Q::one();
        } else {
            entries[i][(k - (r - s) - 1) as usize].constant = Q::one();
        }
    }
    Ok(ConnectionMatrix { r, s, entries })
}

impl ConnectionMatrix {
    /// Trace as (constant, inv_x, hbar_inv_x).
    pub fn trace(&self) -> DEntry {
        let mut t = DEntry::default();
        for (i, row) in self.entries.iter().enumerate() {
            t.constant += &row[i].constant;
            t.inv_x += &row[i].inv_x;
            t.hbar_inv_x += &row[i].hbar_inv_x;
        }
        t
    }
}

/// A matrix entry built from a wave function at a sheet: the stripped series
/// in z (with roots of unity absorbed into the coefficients), the sheet of
/// its exponential factor (negative for duals) and its count of half
/// densities `(r z^{r-1})^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveEntry {
    pub series: GradedSeries<CycScalar>,
    pub exp_charge: i64,
    pub half_density: i32,
}

#[derive(Clone, Debug)]
pub struct WaveMatrix {
    pub r: i64,
    pub s: i64,
    pub order: u32,
    /// psi[k][a] = psi_{k+1}(theta^{a+1} z)
    pub psi: Vec<Vec<WaveEntry>>,
    /// psi_inv[a][k]
    pub psi_inv: Vec<Vec<WaveEntry>>,
}

pub fn default_zwindow(r: i64, s: i64, order: u32) -> (i64, i64) {
    (-(s * order as i64) - 3 * r - 4, 3 * r + 4)
}

/// Stripped entry `sum_m c hbar^m theta^{a e} eta^{-a(r-1)} z^{e+shift}`
/// with e = k-1-sm.
fn sheet_series(
    table: &WaveTable,
    k: i64,
    dual: bool,
    a: i64,
    shift: i64,
    window: (i64, i64),
) -> Result<GradedSeries<CycScalar>, WaveError> {
    let (r, s) = (table.r, table.s);
    let order = 2 * r as u32;
    let mut out = GradedSeries::new(&["z"], vec![window], (0, table.max_order as i64));
    let half = CycScalar::eta_pow(order, -a * (r - 1));
    for m in 0..=table.max_order {
        let c = if dual { table.dual(k, m)? } else { table.c(k, m)?.clone() };
        let e = k - 1 - s * m as i64;
        let ph = CycScalar::theta_pow(r as u32, a * e).mul(&half).scale(&c);
        out.add_term(m as i64, vec![e + shift], ph);
    }
    Ok(out)
}

/// Psi and the closed-form inverse; verifies Psi * Psi^{-1} = Id to `order`.
pub fn wave_matrix(r: i64, s: i64, order: u32, zwindow: (i64, i64)) -> Result<WaveMatrix, WaveError> {
    validate(r, s)?;
    let table = WaveTable::for_kernel(r, s, order)?;
    let wm = wave_matrix_from(&table, zwindow)?;
    wm.check_inverse()?;
    Ok(wm)
}

pub fn wave_matrix_from(table: &WaveTable, zwindow: (i64, i64)) -> Result<WaveMatrix, WaveError> {
    let (r, s) = (table.r, table.s);
    let n = r as usize;
    let mut psi = Vec::with_capacity(n);
    for k in 1..=r {
        let mut row = Vec::with_capacity(n);
        for a in 1..=r {
            row.push(WaveEntry { series: sheet_series(table, k, false, a, 0, zwindow)?, exp_charge: a, half_density: 1 });
        }
        psi.push(row);
    }
    let mut psi_inv = Vec::with_capacity(n);
    for a in 1..=r {
        let mut row = Vec::with_capacity(n);
        for k in 1..=r {
            let series = if k <= r - s {
                sheet_series(table, 1 - k, true, a, r, zwindow)?
            } else {
                sheet_series(table, r + 1 - k, true, a, 0, zwindow)?
            };
            row.push(WaveEntry { series, exp_charge: -a, half_density: 1 });
        }
        psi_inv.push(row);
    }
    Ok(WaveMatrix { r, s, order: table.max_order, psi, psi_inv })
}

/// Product of two entries whose exponential charges cancel and whose half
/// densities pair up into 1/(r z^{r-1}).
pub fn pair_product(a: &WaveEntry, b: &WaveEntry, r: i64) -> Result<GradedSeries<CycScalar>, WaveError> {
    if a.exp_charge + b.exp_charge != 0 {
        return Err(WaveError::ChargeMismatch(format!("{} + {}", a.exp_charge, b.exp_charge)));
    }
    if a.half_density + b.half_density != 2 {
        return Err(WaveError::ChargeMismatch(format!("half densities {} + {}", a.half_density, b.half_density)));
    }
    let p = a.series.mul(&b.series).map_err(|e| WaveError::ChargeMismatch(e.to_string()))?;
    Ok(p.shift(0, &[-(r - 1)]).scale_q(&q(1, r)))
}

impl WaveMatrix {
    fn n(&self) -> usize {
        self.r as usize
    }

    /// Psi * Psi^{-1} as rational series entries.
    pub fn product(&self) -> Result<Vec<Vec<GradedSeries<Q>>>, WaveError> {
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let mut acc = self.psi[k][0].series.empty_like();
                for a in 0..n {
                    let p = pair_product(&self.psi[k][a], &self.psi_inv[a][l], self.r)?;
                    acc = acc.add(&p).map_err(|e| WaveError::ChargeMismatch(e.to_string()))?;
                }
                let rat = acc.rational_part().map_err(|e| WaveError::InverseMismatch { row: k, col: l, detail: e.to_string() })?;
                row.push(rat);
            }
            out.push(row);
        }
        Ok(out)
    }

    pub fn check_inverse(&self) -> Result<(), WaveError> {
        let p = self.product()?;
        for (k, row) in p.iter().enumerate() {
            for (l, e) in row.iter().enumerate() {
                let mut expect = e.empty_like();
                if k == l {
                    expect.add_term(0, vec![0], Q::one());
                }
                let diff = e.sub(&expect).map_err(|x| WaveError::InverseMismatch { row: k, col: l, detail: x.to_string() })?;
                let bad: Vec<_> = diff.terms.iter().filter(|((h, _), _)| *h <= self.order as i64).collect();
                if !bad.is_empty() {
                    return Err(WaveError::InverseMismatch { row: k, col: l, detail: format!("{:?}", bad[0]) });
                }
            }
        }
        Ok(())
    }

    /// Stripped form of (+/-) hbar d/dx applied to an entry: the exponential
    /// contributes theta^{as} z^{s-r}, the half density -(r-1)/(2z).
    pub fn hbar_ddx(&self, e: &WaveEntry) -> GradedSeries<CycScalar> {
        let (r, s) = (self.r, self.s);
        let order = 2 * r as u32;
        let sheet = e.exp_charge.abs();
        let sign = if e.exp_charge >= 0 { Q::one() } else { -Q::one() };
        let th = CycScalar::theta_pow(r as u32, sheet * s).scale(&sign);
        let mut w = e.series.clone();
        w.hbar_range = (w.hbar_range.0, w.hbar_range.1 + 1);
        let first = w.shift(0, &[s - r]).scale(&th);
        let mut out = first;
        for ((h, ex), c) in &e.series.terms {
            let f = qi(ex[0]) - q((r - 1) * e.half_density as i64, 2);
            out.add_term(h + 1, vec![ex[0] - 1 - (r - 1)], c.scale(&(f / qi(r))));
        }
        let _ = order;
        out
    }

    /// Residual of hbar dPsi/dx - D Psi (entries, stripped), restricted to
    /// hbar orders <= self.order.
    pub fn check_differential_system(&self) -> Result<Vec<(usize, usize, GradedSeries<CycScalar>)>, WaveError> {
        let d = connection_matrix(self.r, self.s)?;
        let n = self.n();
        let mut bad = Vec::new();
        for k in 0..n {
            for a in 0..n {
                let lhs = self.hbar_ddx(&self.psi[k][a]);
                let mut rhs = lhs.empty_like();
                for l in 0..n {
                    rhs = rhs.add(&apply_dentry(&d.entries[k][l], &self.psi[l][a].series, self.r)).unwrap();
                }
                let res = lhs.sub(&rhs).unwrap();
                let res = drop_above(&res, self.order as i64);
                if !res.is_zero() {
                    bad.push((k, a, res));
                }
            }
        }
        Ok(bad)
    }

    /// Residual of -hbar dPsi^{-1}/dx - Psi^{-1} D.
    pub fn check_dual_system(&self) -> Result<Vec<(usize, usize, GradedSeries<CycScalar>)>, WaveError> {
        let d = connection_matrix(self.r, self.s)?;
        let n = self.n();
        let mut bad = Vec::new();
        for a in 0..n {
            for k in 0..n {
                let lhs = self.hbar_ddx(&self.psi_inv[a][k]).neg();
                let mut rhs = lhs.empty_like();
                for l in 0..n {
                    rhs = rhs.add(&apply_dentry(&d.entries[l][k], &self.psi_inv[a][l].series, self.r)).unwrap();
                }
                let res = drop_above(&lhs.sub(&rhs).unwrap(), self.order as i64);
                if !res.is_zero() {
                    bad.push((a, k, res));
                }
            }
        }
        Ok(bad)
    }
}

/// Multiplies a stripped series by a connection-matrix entry.
pub fn apply_dentry(e: &DEntry, f: &GradedSeries<CycScalar>, r: i64) -> GradedSeries<CycScalar> {
    let mut base = f.clone();
    base.hbar_range = (base.hbar_range.0, base.hbar_range.1 + 1);
    let mut out = base.empty_like();
    if !e.constant.is_zero() {
        out = out.add(&base.scale_q(&e.constant)).unwrap();
    }
    if !e.inv_x.is_zero() {
        out = out.add(&base.shift(0, &[-r]).scale_q(&e.inv_x)).unwrap();
    }
    if !e.hbar_inv_x.is_zero() {
        let mut t = base.shift(1, &[-r]).scale_q(&e.hbar_inv_x);
        t.hbar_range = out.hbar_range;
        t.window = out.window.clone();
        out = out.add(&t).unwrap();
    }
    out
}

pub fn drop_above<C: crate::exactmath::Coeff>(f: &GradedSeries<C>, h: i64) -> GradedSeries<C> {
    let mut out = f.clone();
    out.terms.retain(|(hh, _), _| *hh <= h);
    out
}
