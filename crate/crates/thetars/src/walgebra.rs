//! W(gl_r) modes in the twist-field representation, the constants A_i,
//! index-set combinatorics, constraint checks and reconstruction from the
//! reduced potential.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};

use crate::exactmath::rational::{factorial, gcd, q, qi};
use crate::exactmath::{CycScalar, MathError, Q};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WError {
    #[error("cutoff {cutoff} too small: {detail}")]
    CutoffTooSmall { cutoff: i64, detail: String },
    #[error("constraint (i,k) = ({i},{k}) violated at hbar^{hbar} x{monomial:?}: {value}")]
    ConstraintViolation { i: i64, k: i64, hbar: i64, monomial: Vec<i64>, value: Q },
    #[error("leading coefficient of the constraint for x_{0} vanishes")]
    NonTriangular(i64),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// A_i = e_i evaluated at {(2l+s-r-1)/(2(r-s)) : l in [r-s]}; zero outside
/// 0..=r-s.
pub fn a_constant(r: i64, s: i64, i: i64) -> Q {
    if i < 0 || i > r - s {
        return Q::zero();
    }
    let pts: Vec<Q> = (1..=r - s).map(|l| q(2 * l + s - r - 1, 2 * (r - s))).collect();
    // e_j by the recursive product expansion
    let mut e = vec![Q::zero(); pts.len() + 1];
    e[0] = Q::one();
    for (n, p) in pts.iter().enumerate() {
        for j in (1..=n + 1).rev() {
            let add = &e[j - 1] * p;
            e[j] += add;
        }
    }
    e[i as usize].clone()
}

// ---------------------------------------------------------------------------
// Roots of unity sums

/// Psi^{(j)}_r(args) with i = 2j + |args|, summed over pairwise distinct
/// m_1..m_i in 0..r. Zero when i > r.
pub fn psi_sum(r: i64, j: usize, args: &[i64]) -> CycScalar {
    let ring = 2 * r as u32;
    let i = 2 * j + args.len();
    if i > r as usize {
        return CycScalar::zero(ring);
    }
    let theta: Vec<CycScalar> = (0..r).map(|m| CycScalar::theta_pow(r as u32, m)).collect();
    let mut pair = vec![vec![CycScalar::zero(ring); r as usize]; r as usize];
    for a in 0..r as usize {
        for b in 0..r as usize {
            if a != b {
                let d = theta[a].sub(&theta[b]);
                // theta^a - theta^b is a unit for a != b
                let inv = d.mul(&d).inv().expect("distinct roots");
                pair[a][b] = theta[a].mul(&theta[b]).mul(&inv);
            }
        }
    }
    let mut total = CycScalar::zero(ring);
    let mut used = vec![false; r as usize];
    let mut slots = vec![0usize; i];
    fn rec(
        pos: usize,
        i: usize,
        j: usize,
        r: i64,
        args: &[i64],
        used: &mut Vec<bool>,
        slots: &mut Vec<usize>,
        pair: &[Vec<CycScalar>],
        total: &mut CycScalar,
    ) {
        if pos == i {
            let ring = 2 * r as u32;
            let mut t = CycScalar::one(ring);
            for k in 0..j {
                t = t.mul(&pair[slots[2 * k]][slots[2 * k + 1]]);
            }
            let mut e = 0i64;
            for (l, a) in args.iter().enumerate() {
                e -= slots[2 * j + l] as i64 * a;
            }
            t = t.mul(&CycScalar::theta_pow(r as u32, e.rem_euclid(r)));
            *total = total.add(&t);
            return;
        }
        for m in 0..r as usize {
            if !used[m] {
                used[m] = true;
                slots[pos] = m;
                rec(pos + 1, i, j, r, args, used, slots, pair, total);
                used[m] = false;
            }
        }
    }
    rec(0, i, j, r, args, &mut used, &mut slots, &pair, &mut total);
    let fi = Q::from_integer(factorial(i));
    total.scale(&(Q::one() / fi))
}

/// psi_sum values cached by (r, j, sorted args mod r).
#[derive(Default)]
pub struct PsiCache {
    map: HashMap<(i64, usize, Vec<i64>), Q>,
}

impl PsiCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rational value of psi_sum; the sums are Galois stable.
    pub fn get(&mut self, r: i64, j: usize, args: &[i64]) -> Result<Q, MathError> {
        let mut key: Vec<i64> = args.iter().map(|a| a.rem_euclid(r)).collect();
        key.sort();
        if let Some(v) = self.map.get(&(r, j, key.clone())) {
            return Ok(v.clone());
        }
        let v = if key.iter().sum::<i64>() % r != 0 { Q::zero() } else { psi_sum(r, j, &key).rational_part()? };
        self.map.insert((r, j, key), v.clone());
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Modes

/// J_m: derivative for m >= 1, multiplication by (-m) x_{-m} minus the
/// dilaton 1/hbar at m = -s for m <= -1, zero for m = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeisenbergMode {
    pub m: i64,
    pub s: i64,
}

impl HeisenbergMode {
    pub fn is_zero(&self) -> bool {
        self.m == 0
    }

    pub fn has_dilaton(&self) -> bool {
        self.m == -self.s
    }

    /// Z^{-1} J_m Z for m <= 0, as a polynomial.
    pub fn multiplier(&self) -> HPoly {
        let mut out = HPoly::new();
        if self.m < 0 {
            out.insert((0, vec![-self.m]), qi(-self.m));
            if self.has_dilaton() {
                out.insert((-1, vec![]), -Q::one());
            }
        }
        out
    }
}

/// One normal-ordered term coeff * hbar^i * :prod J_{modes}:.
#[derive(Clone, Debug, PartialEq)]
pub struct WTerm {
    pub coeff: Q,
    /// sorted; negative modes act first as multiplications
    pub modes: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WOperator {
    pub r: i64,
    pub s: i64,
    pub i: i64,
    pub k: i64,
    /// negative modes are kept down to -cutoff
    pub cutoff: i64,
    /// positive modes are kept up to dcutoff
    pub dcutoff: i64,
    pub terms: Vec<WTerm>,
}

impl WOperator {
    /// Lowest hbar power over all terms once dilatons are expanded.
    pub fn min_hbar_power(&self) -> i64 {
        self.terms
            .iter()
            .map(|t| self.i - t.modes.iter().filter(|&&m| m == -self.s).count() as i64)
            .min()
            .unwrap_or(self.i)
    }

    /// Coefficient C of hbar J_l, l = (i-1)s + rk.
    pub fn leading_coefficient(&self) -> Q {
        let l = (self.i - 1) * self.s + self.r * self.k;
        let mut want = vec![-self.s; (self.i - 1) as usize];
        want.push(l);
        want.sort();
        let sign = if (self.i - 1) % 2 == 0 { Q::one() } else { -Q::one() };
        self.terms.iter().filter(|t| t.modes == want).map(|t| &t.coeff * &sign).sum()
    }
}

fn multisets(size: usize, lo: i64, hi: i64, target: i64, skip_zero: bool) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(size: usize, lo: i64, hi: i64, target: i64, skip_zero: bool, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if size == 0 {
            if target == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let c = size as i64;
        for v in lo..=hi {
            if skip_zero && v == 0 {
                continue;
            }
            // remaining entries are >= v and <= hi
            if v * c > target {
                break;
            }
            if v + (c - 1) * hi < target {
                continue;
            }
            cur.push(v);
            rec(size - 1, v, hi, target - v, skip_zero, cur, out);
            cur.pop();
        }
    }
    rec(size, lo, hi, target, skip_zero, &mut cur, &mut out);
    out
}

fn multiplicity_factorials(m: &[i64]) -> Q {
    let mut out = Q::one();
    let mut i = 0;
    while i < m.len() {
        let mut j = i;
        while j < m.len() && m[j] == m[i] {
            j += 1;
        }
        out *= Q::from_integer(factorial(j - i));
        i = j;
    }
    out
}

/// H^i_k restricted to modes in [-M, -1] and [1, M].
pub fn w_mode(r: i64, s: i64, i: i64, k: i64, cutoff: i64) -> Result<WOperator, WError> {
    let mut cache = PsiCache::new();
    w_mode_bounded(r, s, i, k, cutoff, cutoff, &mut cache)
}

/// H^i_k with negative modes down to -cutoff and positive modes up to
/// dcutoff. The hbar^i prefactor is implicit.
pub fn w_mode_bounded(
    r: i64,
    s: i64,
    i: i64,
    k: i64,
    cutoff: i64,
    dcutoff: i64,
    cache: &mut PsiCache,
) -> Result<WOperator, WError> {
    if r < 2 || i < 1 || i > r {
        return Err(WError::Invalid(format!("r = {r}, i = {i}")));
    }
    if cutoff < s {
        return Err(WError::CutoffTooSmall { cutoff, detail: format!("the dilaton mode J_-{s} is excluded") });
    }
    let pref = num_traits::pow(q(1, r), i as usize);
    let fi = Q::from_integer(factorial(i as usize));
    let mut terms = Vec::new();
    for j in 0..=(i / 2) as usize {
        let qn = i as usize - 2 * j;
        let comb = &fi / Q::from_integer(num_traits::pow(num_bigint::BigInt::from(2), j) * factorial(j) * factorial(qn));
        let sets = if qn == 0 {
            if k == 0 { vec![vec![]] } else { vec![] }
        } else {
            multisets(qn, -cutoff, dcutoff, r * k, true)
        };
        for ms in sets {
            let psi = cache.get(r, j, &ms)?;
            if psi.is_zero() {
                continue;
            }
            let perms = Q::from_integer(factorial(qn)) / multiplicity_factorials(&ms);
            let coeff = &pref * &comb * psi * perms;
            terms.push(WTerm { coeff, modes: ms });
        }
    }
    Ok(WOperator { r, s, i, k, cutoff, dcutoff, terms })
}

// ---------------------------------------------------------------------------
// Polynomials in hbar and x

/// (hbar power, sorted variable indices) -> coefficient.
pub type HPoly = BTreeMap<(i64, Vec<i64>), Q>;

fn merge(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.sort();
    v
}

pub fn hpoly_mul(a: &HPoly, b: &HPoly, max_hbar: i64) -> HPoly {
    let mut out = HPoly::new();
    for ((ha, ma), ca) in a {
        for ((hb, mb), cb) in b {
            if ha + hb > max_hbar {
                continue;
            }
            let e = out.entry((ha + hb, merge(ma, mb))).or_insert_with(Q::zero);
            *e += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn hpoly_add(a: &mut HPoly, b: &HPoly, scale: &Q) {
    for (key, c) in b {
        let e = a.entry(key.clone()).or_insert_with(Q::zero);
        *e += c * scale;
    }
    a.retain(|_, c| !c.is_zero());
}

/// d/dx_p.
pub fn hpoly_deriv(a: &HPoly, p: i64) -> HPoly {
    let mut out = HPoly::new();
    for ((h, m), c) in a {
        let cnt = m.iter().filter(|&&x| x == p).count();
        if cnt > 0 {
            let mut mm = m.clone();
            let pos = mm.iter().position(|&x| x == p).unwrap();
            mm.remove(pos);
            *out.entry((*h, mm)).or_insert_with(Q::zero) += c * qi(cnt as i64);
        }
    }
    out
}

/// Set partitions of 0..n as lists of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    fn rec(x: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if x == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(x);
            rec(x + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![x]);
        rec(x + 1, n, blocks, out);
        blocks.pop();
    }
    rec(0, n, &mut blocks, &mut out);
    out
}

/// Computes Z^{-1} (op) Z for Z = exp(log_z), truncated to hbar^max_hbar and
/// to monomials in x_1..x_window.
pub struct Conjugator<'a> {
    pub log_z: &'a HPoly,
    pub max_hbar: i64,
    pub window: i64,
    memo: HashMap<Vec<i64>, HPoly>,
}

impl<'a> Conjugator<'a> {
    pub fn new(log_z: &'a HPoly, max_hbar: i64, window: i64) -> Self {
        Conjugator { log_z, max_hbar, window, memo: HashMap::new() }
    }

    fn deriv_block(&mut self, block: &[i64]) -> HPoly {
        let mut key = block.to_vec();
        key.sort();
        if let Some(p) = self.memo.get(&key) {
            return p.clone();
        }
        let mut p = if key.len() == 1 {
            hpoly_deriv(self.log_z, key[0])
        } else {
            let prev = self.deriv_block(&key[1..]);
            hpoly_deriv(&prev, key[0])
        };
        let (mx, w) = (self.max_hbar, self.window);
        p.retain(|(h, m), _| *h <= mx && m.iter().all(|&x| x <= w));
        self.memo.insert(key, p.clone());
        p
    }

    /// Z^{-1} prod d_{p} Z by the Bell expansion.
    pub fn derivatives(&mut self, ps: &[i64], max_hbar: i64) -> HPoly {
        let mut out = HPoly::new();
        if ps.is_empty() {
            out.insert((0, vec![]), Q::one());
            return out;
        }
        for part in set_partitions(ps.len()) {
            let mut acc = HPoly::new();
            acc.insert((0, vec![]), Q::one());
            for b in &part {
                let block: Vec<i64> = b.iter().map(|&x| ps[x]).collect();
                let d = self.deriv_block(&block);
                acc = hpoly_mul(&acc, &d, max_hbar);
                if acc.is_empty() {
                    break;
                }
            }
            hpoly_add(&mut out, &acc, &Q::one());
        }
        out
    }

    /// Residual of the operator (with its hbar^i prefactor).
    pub fn apply(&mut self, op: &WOperator) -> HPoly {
        let mut out = HPoly::new();
        let s = op.s;
        for t in &op.terms {
            let dil = t.modes.iter().filter(|&&m| m == -s).count() as i64;
            let pos: Vec<i64> = t.modes.iter().copied().filter(|&m| m > 0).collect();
            let low = op.i - dil + if pos.is_empty() { 0 } else { 1 };
            if low > self.max_hbar {
                continue;
            }
            if t.modes.iter().any(|&m| m < 0 && -m > self.window && m != -s) {
                continue;
            }
            // budget for the derivative part
            let budget = self.max_hbar - (op.i - dil);
            let mut acc = self.derivatives(&pos, budget);
            for &m in t.modes.iter().filter(|&&m| m < 0) {
                let mut mult = HeisenbergMode { m, s }.multiplier();
                mult.retain(|(_, mm), _| mm.iter().all(|&x| x <= self.window));
                acc = hpoly_mul(&mult, &acc, budget);
            }
            let mut shifted = HPoly::new();
            for ((h, m), c) in acc {
                let hh = h + op.i;
                if hh <= self.max_hbar && m.iter().all(|&x| x <= self.window) {
                    shifted.insert((hh, m), c);
                }
            }
            hpoly_add(&mut out, &shifted, &t.coeff);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Descendant potential

/// F_{g,n}[m] for 2g-2+n <= order, keyed by the sorted index multiset, with
/// all indices <= cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTrunc {
    pub r: i64,
    pub s: i64,
    pub order: i64,
    pub cutoff: i64,
    pub f: BTreeMap<(i64, usize), BTreeMap<Vec<i64>, Q>>,
}

impl PotentialTrunc {
    pub fn new(r: i64, s: i64, order: i64, cutoff: i64) -> Self {
        PotentialTrunc { r, s, order, cutoff, f: BTreeMap::new() }
    }

    pub fn get(&self, g: i64, m: &[i64]) -> Q {
        let mut key = m.to_vec();
        key.sort();
        self.f.get(&(g, m.len())).and_then(|t| t.get(&key)).cloned().unwrap_or_else(Q::zero)
    }

    pub fn set(&mut self, g: i64, m: &[i64], v: Q) {
        let mut key = m.to_vec();
        key.sort();
        let t = self.f.entry((g, m.len())).or_default();
        if v.is_zero() {
            t.remove(&key);
        } else {
            t.insert(key, v);
        }
    }

    /// log Z = sum hbar^{2g-2+n}/n! sum_m F_{g,n}[m] prod x_{m_i}.
    pub fn log_z(&self) -> HPoly {
        let mut out = HPoly::new();
        for (&(g, n), t) in &self.f {
            let h = 2 * g - 2 + n as i64;
            for (m, v) in t {
                if m.iter().all(|&x| x <= self.cutoff) {
                    out.insert((h, m.clone()), v / multiplicity_factorials(m));
                }
            }
        }
        out
    }

    pub fn has_rm_monomial(&self) -> bool {
        self.f.values().any(|t| t.keys().any(|m| m.iter().any(|x| x % self.r == 0)))
    }

    /// Keeps only monomials whose indices all lie in `set`.
    pub fn restrict(&self, set: &[i64]) -> PotentialTrunc {
        let mut out = PotentialTrunc::new(self.r, self.s, self.order, self.cutoff);
        for (&key, t) in &self.f {
            let kept: BTreeMap<Vec<i64>, Q> =
                t.iter().filter(|(m, _)| m.iter().all(|x| set.contains(x))).map(|(m, v)| (m.clone(), v.clone())).collect();
            if !kept.is_empty() {
                out.f.insert(key, kept);
            }
        }
        out
    }

    /// Entries up to the given order with indices <= cutoff.
    pub fn truncated(&self, order: i64, cutoff: i64) -> PotentialTrunc {
        let mut out = PotentialTrunc::new(self.r, self.s, order, cutoff);
        for (&(g, n), t) in &self.f {
            if 2 * g - 2 + n as i64 <= order {
                let kept: BTreeMap<Vec<i64>, Q> =
                    t.iter().filter(|(m, _)| m.iter().all(|&x| x <= cutoff)).map(|(m, v)| (m.clone(), v.clone())).collect();
                if !kept.is_empty() {
                    out.f.insert((g, n), kept);
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Constraint verification

#[derive(Clone, Debug, Default)]
pub struct WReport {
    pub checked: Vec<(i64, i64)>,
    pub violations: Vec<WError>,
    /// (i, constant hbar^i coefficient of H^i_0 Z / Z, A_i)
    pub zero_modes: Vec<(i64, Q, Q)>,
    pub max_k: BTreeMap<i64, i64>,
    pub min_hbar: i64,
}

impl WReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.zero_modes.iter().all(|(_, a, b)| a == b)
    }
}

pub fn k_lower(r: i64, s: i64, i: i64) -> i64 {
    if i <= r - s {
        0
    } else {
        r - s - i + 1
    }
}

/// Checks H^i_k Z = hbar^i A_i delta_{k,0} Z (i <= r-s) and H^i_k Z = 0
/// (i > r-s) up to hbar^{Z.order} on monomials in x_1..x_window. Needs Z
/// complete in the derivative directions, i.e. Z.cutoff >= s * order.
pub fn verify_w_constraints(z: &PotentialTrunc, window: i64) -> Result<WReport, WError> {
    let (r, s, n) = (z.r, z.s, z.order);
    if z.cutoff < s * n {
        return Err(WError::CutoffTooSmall { cutoff: z.cutoff, detail: format!("potential needs indices up to {}", s * n) });
    }
    let log_z = z.log_z();
    let mut conj = Conjugator::new(&log_z, n, window);
    let mut cache = PsiCache::new();
    let mut rep = WReport { min_hbar: i64::MAX, ..Default::default() };
    for i in 1..=r {
        // weight: |monomial| = s(a - i) - rk >= 0 with a <= order
        let khi = (s * (n - i)).div_euclid(r);
        let klo = k_lower(r, s, i);
        rep.max_k.insert(i, khi);
        for k in klo..=khi {
            let op = w_mode_bounded(r, s, i, k, window, s * n, &mut cache)?;
            rep.min_hbar = rep.min_hbar.min(op.min_hbar_power());
            let mut res = conj.apply(&op);
            let a = a_constant(r, s, i);
            if k == 0 && i <= r - s {
                let got = res.get(&(i, vec![])).cloned().unwrap_or_else(Q::zero);
                if i <= n {
                    rep.zero_modes.push((i, got, a.clone()));
                }
                hpoly_add(&mut res, &[((i, vec![]), a)].into_iter().collect(), &-Q::one());
            }
            for ((h, m), c) in res {
                rep.violations.push(WError::ConstraintViolation { i, k, hbar: h, monomial: m, value: c });
            }
            rep.checked.push((i, k));
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Index sets

#[derive(Clone, Debug, PartialEq)]
pub struct IndexSets {
    pub r: i64,
    pub s: i64,
    pub bound: i64,
    /// gap values up to the bound; the full gap set when r, s are coprime
    pub gaps: Vec<i64>,
    pub finite: bool,
}

impl IndexSets {
    pub fn in_i(&self, i: i64, k: i64) -> bool {
        i >= 1 && i <= self.r && k >= k_lower(self.r, self.s, i)
    }

    pub fn pi(&self, i: i64, k: i64) -> i64 {
        (i - 1) * self.s + self.r * k
    }

    pub fn is_gap(&self, m: i64) -> bool {
        self.gaps.binary_search(&m).is_ok()
    }

    /// Elements of I_{r,s} mapped to m.
    pub fn preimages(&self, m: i64) -> Vec<(i64, i64)> {
        (1..=self.r)
            .filter_map(|i| {
                let d = m - (i - 1) * self.s;
                if d.rem_euclid(self.r) == 0 && self.in_i(i, d / self.r) {
                    Some((i, d / self.r))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Number of pairs a, b >= 0 with m = a(r-s) + bs.
    pub fn representations(&self, m: i64) -> i64 {
        (0..=m / self.s).filter(|b| (m - b * self.s) % (self.r - self.s) == 0).count() as i64
    }

    /// Non-gap values up to the bound whose preimage count differs from
    /// gcd(r,s).
    pub fn multiplicity_defects(&self) -> Vec<(i64, i64)> {
        let g = gcd(self.r, self.s);
        (1..=self.bound)
            .filter(|&m| !self.is_gap(m))
            .map(|m| (m, self.preimages(m).len() as i64))
            .filter(|&(_, c)| c != g)
            .collect()
    }

    /// Brute-force check up to the bound: the image of I_{r,s} is the set of
    /// non-gaps, each m has min(gcd(r,s), #representations) preimages, and
    /// the map is injective iff r, s are coprime. Returns the failures.
    pub fn verify(&self) -> Vec<String> {
        let (r, s) = (self.r, self.s);
        let g = gcd(r, s);
        let mut bad = Vec::new();
        let mut injective = true;
        for m in 1..=self.bound {
            let c = self.preimages(m).len() as i64;
            injective &= c <= 1;
            let expect = if self.is_gap(m) { 0 } else { g.min(self.representations(m)) };
            if c != expect {
                bad.push(format!("m = {m}: {c} preimages, expected {expect}"));
            }
        }
        if injective != (g == 1) {
            bad.push(format!("injective = {injective} with gcd {g}"));
        }
        // nothing in I_{r,s} lands at or below zero except the trivial (1,0)
        for i in 1..=r {
            for k in k_lower(r, s, i)..=self.bound / r + 1 {
                let p = self.pi(i, k);
                if p < 0 || (p == 0 && (i, k) != (1, 0)) {
                    bad.push(format!("({i},{k}) maps to {p}"));
                }
            }
        }
        if self.finite {
            let frob = s * (r - s) - r;
            if self.gaps.last().copied().unwrap_or(-1) != frob.max(-1) {
                bad.push(format!("largest gap {:?}, expected {frob}", self.gaps.last()));
            }
        }
        if (s == 1 || s == r - 1) != self.gaps.is_empty() {
            bad.push("emptiness of K".into());
        }
        bad
    }
}

/// Gap set of the semigroup generated by r-s and s, by sieve.
pub fn index_sets(r: i64, s: i64, bound: i64) -> IndexSets {
    let finite = gcd(r, s) == 1;
    let bound = if finite { bound.max(s * (r - s)) } else { bound };
    let mut rep = vec![false; bound as usize + 1];
    rep[0] = true;
    let mut gaps = Vec::new();
    for m in 1..=bound {
        let u = m as usize;
        rep[u] = (m >= r - s && rep[u - (r - s) as usize]) || (m >= s && rep[u - s as usize]);
        if !rep[u] {
            gaps.push(m);
        }
    }
    IndexSets { r, s, bound, gaps, finite }
}

// ---------------------------------------------------------------------------
// Reconstruction

/// Solves the constraints order by order in 2g-2+n. Entries with all
/// indices in K are taken from `reduced` (missing ones count as zero); every
/// other F_{g,n}[l, m'] comes from the constraint whose leading term is
/// C_l hbar d_l.
pub fn reconstruct_potential(r: i64, s: i64, reduced: &PotentialTrunc, order: i64) -> Result<PotentialTrunc, WError> {
    let top = s * order;
    let sets = index_sets(r, s, top);
    let mut z = PotentialTrunc::new(r, s, order, top);
    let mut cache = PsiCache::new();
    for h in 1..=order {
        let mut pending: BTreeMap<(i64, i64), Vec<(i64, Vec<i64>, i64)>> = BTreeMap::new();
        for n in 1..=(h + 2) as usize {
            if (h + 2 - n as i64) % 2 != 0 {
                continue;
            }
            let g = (h + 2 - n as i64) / 2;
            for m in multisets(n, 1, top, s * h, false) {
                match m.iter().rev().find(|x| !sets.is_gap(**x)) {
                    None => z.set(g, &m, reduced.get(g, &m)),
                    Some(&l) => {
                        let (i, k) = sets.preimages(l)[0];
                        pending.entry((i, k)).or_default().push((g, m, l));
                    }
                }
            }
        }
        let log_z = z.log_z();
        let mut conj = Conjugator::new(&log_z, h + 1, top);
        for ((i, k), items) in pending {
            let op = w_mode_bounded(r, s, i, k, top, top, &mut cache)?;
            let c = op.leading_coefficient();
            if c.is_zero() {
                return Err(WError::NonTriangular((i - 1) * s + r * k));
            }
            let mut res = conj.apply(&op);
            if k == 0 && i <= r - s {
                *res.entry((i, vec![])).or_insert_with(Q::zero) -= a_constant(r, s, i);
            }
            for (g, m, l) in items {
                let mut rest = m.clone();
                let pos = rest.iter().position(|&x| x == l).unwrap();
                rest.remove(pos);
                let rv = res.get(&(h + 1, rest)).cloned().unwrap_or_else(Q::zero);
                let mult = qi(m.iter().filter(|&&x| x == l).count() as i64);
                let coeff = -rv / (&c * mult) * multiplicity_factorials(&m);
                z.set(g, &m, coeff);
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_constants() {
        assert_eq!(a_constant(3, 1, 2), q(-1, 16));
        assert_eq!(a_constant(5, 1, 2), q(-5, 32));
        for r in 2..8 {
            for s in 1..r {
                for i in (1..=r - s).step_by(2) {
                    assert!(a_constant(r, s, i).is_zero());
                }
                assert_eq!(a_constant(r, s, 0), qi(1));
            }
            if r > 2 {
                assert_eq!(a_constant(r, 1, 2), -q((r - 2) * r, 24 * (r - 1)));
            }
        }
    }

    /// Brute force over pairwise distinct roots in floating point.
    fn psi_numeric(r: i64, j: usize, args: &[i64]) -> (f64, f64) {
        let i = 2 * j + args.len();
        let th = |m: i64| {
            let a = 2.0 * std::f64::consts::PI * m as f64 / r as f64;
            (a.cos(), a.sin())
        };
        let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
        let inv = |b: (f64, f64)| {
            let d = b.0 * b.0 + b.1 * b.1;
            (b.0 / d, -b.1 / d)
        };
        let mut tot = (0.0, 0.0);
        let n = (r as usize).pow(i as u32);
        for code in 0..n {
            let mut ms = Vec::new();
            let mut c = code;
            for _ in 0..i {
                ms.push((c % r as usize) as i64);
                c /= r as usize;
            }
            let mut sorted = ms.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != i {
                continue;
            }
            let mut t = (1.0, 0.0);
            for k in 0..j {
                let (a, b) = (th(ms[2 * k]), th(ms[2 * k + 1]));
                let d = (a.0 - b.0, a.1 - b.1);
                t = mul(t, mul(mul(a, b), inv(mul(d, d))));
            }
            for (l, &a) in args.iter().enumerate() {
                t = mul(t, th(-ms[2 * j + l] * a));
            }
            tot = (tot.0 + t.0, tot.1 + t.1);
        }
        let f: f64 = (1..=i).map(|x| x as f64).product();
        (tot.0 / f, tot.1 / f)
    }

    #[test]
    fn psi_single_argument() {
        for r in 2..7 {
            for a in -7..8 {
                let v = psi_sum(r, 0, &[a]).rational_part().unwrap();
                assert_eq!(v, if a % r == 0 { qi(r) } else { Q::zero() });
            }
        }
    }

    #[test]
    fn psi_against_brute_force() {
        let mut cache = PsiCache::new();
        for r in 2..=6i64 {
            for j in 0..=2usize {
                for len in 0..=(4 - 2 * j) {
                    if 2 * j + len == 0 || 2 * j + len > 4 {
                        continue;
                    }
                    for code in 0..(r as usize).pow(len as u32) {
                        let mut args = Vec::new();
                        let mut c = code;
                        for _ in 0..len {
                            args.push((c % r as usize) as i64);
                            c /= r as usize;
                        }
                        let exact = psi_sum(r, j, &args);
                        let (re, im) = psi_numeric(r, j, &args);
                        assert!(im.abs() < 1e-9, "r={r} j={j} {args:?}");
                        if args.iter().sum::<i64>() % r == 0 {
                            let v = exact.rational_part().unwrap();
                            let f = v.numer().to_string().parse::<f64>().unwrap() / v.denom().to_string().parse::<f64>().unwrap();
                            assert!((f - re).abs() < 1e-9, "r={r} j={j} {args:?}: {v} vs {re}");
                            assert_eq!(cache.get(r, j, &args).unwrap(), v);
                        } else {
                            assert!(exact.is_zero());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn first_modes() {
        for (r, s) in [(2, 1), (3, 1), (3, 2), (5, 2)] {
            let h0 = w_mode(r, s, 1, 0, 6).unwrap();
            assert!(h0.terms.is_empty());
            for k in 1..3 {
                let h = w_mode(r, s, 1, k, 12).unwrap();
                assert_eq!(h.terms, vec![WTerm { coeff: Q::one(), modes: vec![r * k] }]);
                assert_eq!(h.leading_coefficient(), Q::one());
            }
            for i in 1..=r {
                for k in -2..3 {
                    assert!(w_mode(r, s, i, k, 8).unwrap().min_hbar_power() >= 0);
                }
            }
        }
        assert!(matches!(w_mode(3, 2, 1, 0, 1), Err(WError::CutoffTooSmall { .. })));
    }

    #[test]
    fn conjugation_rules() {
        let c = q(3, 7);
        let log_z: HPoly = [((1, vec![2]), c.clone())].into_iter().collect();
        let op = WOperator { r: 2, s: 1, i: 1, k: 1, cutoff: 4, dcutoff: 4, terms: vec![WTerm { coeff: Q::one(), modes: vec![2] }] };
        let mut conj = Conjugator::new(&log_z, 5, 4);
        assert_eq!(conj.apply(&op), [((2, vec![]), c.clone())].into_iter().collect());
        // multiplication by x_3 through J_{-3}
        let op = WOperator { terms: vec![WTerm { coeff: q(1, 3), modes: vec![-3] }], i: 0, ..op };
        assert_eq!(conj.apply(&op), [((0, vec![3]), Q::one())].into_iter().collect());
        // second order Leibniz
        let log_z: HPoly = [((1, vec![1, 2]), qi(2)), ((1, vec![1]), qi(5))].into_iter().collect();
        let mut conj = Conjugator::new(&log_z, 6, 4);
        let d = conj.derivatives(&[1, 2], 6);
        let expect: HPoly = [((1, vec![]), qi(2)), ((2, vec![1, 2]), qi(4)), ((2, vec![1]), qi(10))].into_iter().collect();
        assert_eq!(d, expect);
        let d = conj.derivatives(&[1, 1], 6);
        let expect: HPoly = [((2, vec![2, 2]), qi(4)), ((2, vec![2]), qi(20)), ((2, vec![]), qi(25))].into_iter().collect();
        assert_eq!(d, expect);
    }

    #[test]
    fn gap_sets() {
        assert_eq!(index_sets(5, 2, 30).gaps, vec![1]);
        assert_eq!(index_sets(7, 3, 30).gaps, vec![1, 2, 5]);
        for r in 2..=8 {
            for s in 1..r {
                let ix = index_sets(r, s, 100);
                assert!(ix.verify().is_empty(), "({r},{s}) {:?}", ix.verify());
                if r >= 4 && (2..=r - 2).contains(&s) {
                    assert!(ix.is_gap(1));
                }
            }
        }
        let ix = index_sets(5, 2, 30);
        for m in 2..=30 {
            assert_eq!(ix.preimages(m).len(), 1);
        }
        assert!(ix.preimages(1).is_empty());
        assert!(ix.multiplicity_defects().is_empty());
        // small values have fewer than gcd(r,s) preimages
        assert_eq!(index_sets(6, 2, 40).multiplicity_defects(), vec![(2, 1)]);
        assert_eq!(index_sets(8, 4, 40).multiplicity_defects(), vec![(4, 2), (8, 3)]);
    }

    #[test]
    fn set_partition_counts() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (n, b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), *b);
        }
    }
}
