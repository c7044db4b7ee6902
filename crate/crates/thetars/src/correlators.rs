//! Correlators omega_{g,n} from the cyclic sum of kernels, descendant
//! integrals, semi-connected correlators, the loop-equation sums E^{(k)}_n
//! and the residue formulas for omega_{g,n}.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};

use crate::exactmath::rational::{gcd, multifactorial, qi};
use crate::exactmath::{CycScalar, MathError, Q};
use crate::kernel::{self, KernelError, Numerator};
use crate::walgebra::a_constant;
use crate::wavefunc::{self, WaveError, WaveTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("unstable (g,n) = ({0},{1})")]
    Unstable(i64, usize),
    #[error("truncation insufficient: {0}")]
    TruncationInsufficient(String),
    #[error("dimension violation: {0}")]
    DimensionViolation(String),
    #[error("(r,s) = ({0},{1}) not coprime")]
    NotCoprime(i64, i64),
    #[error("loop equation violated: {0}")]
    LoopViolation(String),
}

/// omega_{g,n} as coefficients of prod dz_i / z_i^{m_i+1}.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorTable {
    pub r: i64,
    pub s: i64,
    pub g: i64,
    pub n: usize,
    pub entries: BTreeMap<Vec<i64>, Q>,
}

impl CorrelatorTable {
    pub fn get(&self, m: &[i64]) -> Q {
        self.entries.get(m).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|(m, c)| {
            let mut p = m.clone();
            // all transpositions generate the symmetric group
            (0..m.len()).all(|i| {
                (i + 1..m.len()).all(|j| {
                    p.swap(i, j);
                    let ok = self.entries.get(&p) == Some(c);
                    p.swap(i, j);
                    ok
                })
            })
        })
    }

    pub fn vanishes_mod_r(&self) -> bool {
        self.entries.keys().all(|m| m.iter().all(|x| x % self.r != 0))
    }

    pub fn within_support(&self) -> bool {
        let bound = self.r * (3 * self.g - 3 + self.n as i64) + self.r - 1;
        let h = 2 * self.g - 2 + self.n as i64;
        self.entries.keys().all(|m| m.iter().all(|&x| x >= 1 && x <= bound) && m.iter().sum::<i64>() == self.s * h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionRecord {
    pub r: i64,
    pub s: i64,
    pub g: i64,
    pub n: usize,
    pub a: Vec<i64>,
    pub k: Vec<i64>,
    pub value: Q,
}

/// D^{r,s}_{g;a} if integral.
pub fn chiodo_degree(r: i64, s: i64, g: i64, a: &[i64]) -> Option<i64> {
    let n = a.len() as i64;
    let num = (2 * g - 2 + n) * (r - s) + a.iter().sum::<i64>();
    if num % r != 0 {
        return None;
    }
    Some(g - 1 + num / r)
}

pub fn dimension_ok(r: i64, s: i64, g: i64, a: &[i64], k: &[i64]) -> bool {
    match chiodo_degree(r, s, g, a) {
        Some(d) => k.iter().sum::<i64>() + d == 3 * g - 3 + a.len() as i64,
        None => false,
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

struct EdgePlan {
    first: usize,
    second: usize,
    outer: usize,
    inner: usize,
    sign: bool,
    outer_remaining: i64,
    outer_final: bool,
    inner_final: bool,
    /// variables with edges still to come after this one
    open: Vec<usize>,
    open_lo: i64,
    open_hi: i64,
    edges_left: i64,
}

/// Sum over n-cycles of sgn * prod N(z_i,z_sigma(i))/(x_i - x_sigma(i)),
/// each 1/(x_u - x_v) (u < v) expanded in |z_u| > |z_v|, restricted to the
/// hbar^target piece and to exponents e_i in windows[i]. The expansion depth
/// is chosen per term so that the result is exact on the windows.
pub fn cyclic_sum(num: &Numerator, n: usize, target: i64, windows: &[(i64, i64)]) -> BTreeMap<Vec<i64>, Q> {
    let (r, s) = (num.r, num.s);
    let mut total: HashMap<Vec<i64>, Q> = HashMap::new();
    let rest: Vec<usize> = (1..n).collect();
    let cycle_sign = if n % 2 == 0 { -Q::one() } else { Q::one() };
    for perm in permutations(&rest) {
        let mut cyc = vec![0];
        cyc.extend(perm);
        let mut edges: Vec<(usize, usize)> = (0..n).map(|t| (cyc[t], cyc[(t + 1) % n])).collect();
        edges.sort_by_key(|&(i, j)| (i.min(j), i.max(j)));
        let mut plans = Vec::with_capacity(n);
        let mut seen = vec![0usize; n];
        for (t, &(i, j)) in edges.iter().enumerate() {
            let (u, v) = (i.min(j), i.max(j));
            seen[i] += 1;
            seen[j] += 1;
            let outer_remaining = edges[t + 1..].iter().filter(|&&(a, b)| a.min(b) == u).count() as i64;
            let open: Vec<usize> = (0..n).filter(|&x| seen[x] > 0 && seen[x] < 2).collect();
            let unseen_lo: i64 = (0..n).filter(|&x| seen[x] == 0).map(|x| windows[x].0).sum();
            let unseen_hi: i64 = (0..n).filter(|&x| seen[x] == 0).map(|x| windows[x].1).sum();
            plans.push(EdgePlan {
                open_lo: open.iter().map(|&x| windows[x].0).sum::<i64>() + unseen_lo,
                open_hi: open.iter().map(|&x| windows[x].1).sum::<i64>() + unseen_hi,
                open,
                edges_left: (n - t - 1) as i64,
                first: i,
                second: j,
                outer: u,
                inner: v,
                sign: i == v,
                outer_remaining,
                outer_final: seen[u] == 2,
                inner_final: seen[v] == 2,
            });
        }
        // key: exponents followed by hbar
        let mut states: HashMap<Vec<i64>, Q> = HashMap::new();
        states.insert(vec![0; n + 1], cycle_sign.clone());
        for pl in &plans {
            let mut next: HashMap<Vec<i64>, Q> = HashMap::new();
            for (key, c) in &states {
                let hb = key[n];
                for m in 0..=(target - hb) {
                    let Some(terms) = num.by_order.get(m as usize) else { break };
                    for t in terms {
                        let mut e = key.clone();
                        e[n] += m;
                        e[pl.first] += t.alpha;
                        e[pl.second] += t.beta;
                        let cu = e[pl.outer];
                        let (lo_u, hi_u) = windows[pl.outer];
                        let mut pmax = (cu - r - pl.outer_remaining - lo_u).div_euclid(r);
                        let mut pmin = 0i64;
                        if pl.outer_final {
                            pmin = pmin.max(-((hi_u - cu + r).div_euclid(r)));
                        }
                        if pl.inner_final {
                            let (lo_v, hi_v) = windows[pl.inner];
                            let ev = e[pl.inner];
                            pmin = pmin.max(-((ev - lo_v).div_euclid(r)));
                            pmax = pmax.min((hi_v - ev).div_euclid(r));
                        }
                        if pmin > pmax {
                            continue;
                        }
                        // the remaining edges lower the exponent sum by 1 + s m each
                        let budget = pl.edges_left + s * (target - e[n]);
                        let open_sum: i64 = pl.open.iter().map(|&x| e[x]).sum();
                        let du = if pl.open.contains(&pl.outer) { -r } else { 0 };
                        let dv = if pl.open.contains(&pl.inner) { r } else { 0 };
                        let base = if pl.sign { -(c * &t.coeff) } else { c * &t.coeff };
                        for p in pmin..=pmax {
                            let sum = open_sum + du * (p + 1) + dv * p;
                            if sum - pl.edges_left < pl.open_lo || sum - budget > pl.open_hi {
                                continue;
                            }
                            let mut e2 = e.clone();
                            e2[pl.outer] -= r * (p + 1);
                            e2[pl.inner] += r * p;
                            *next.entry(e2).or_insert_with(Q::zero) += &base;
                        }
                    }
                }
            }
            next.retain(|_, v| !v.is_zero());
            states = next;
        }
        for (key, c) in states {
            if key[n] == target {
                *total.entry(key[..n].to_vec()).or_insert_with(Q::zero) += c;
            }
        }
    }
    total.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// Stable-window exponents: e_i = -m_i - 1 with m_i in [1, s h - (n-1)].
pub fn stable_windows(s: i64, g: i64, n: usize) -> Vec<(i64, i64)> {
    let h = 2 * g - 2 + n as i64;
    let mmax = s * h - (n as i64 - 1);
    vec![(-mmax - 1, -2); n]
}

/// Caches the numerator and the computed tables for one (r,s).
pub struct Engine {
    pub r: i64,
    pub s: i64,
    num: Numerator,
    tables: BTreeMap<(i64, usize), CorrelatorTable>,
}

impl Engine {
    pub fn new(r: i64, s: i64) -> Result<Self, CorrError> {
        wavefunc::validate(r, s)?;
        let table = WaveTable::for_kernel(r, s, 1)?;
        let num = kernel::numerator(&table, 1)?;
        Ok(Engine { r, s, num, tables: BTreeMap::new() })
    }

    pub fn numerator(&mut self, order: u32) -> Result<&Numerator, CorrError> {
        if self.num.order() < order {
            let table = WaveTable::for_kernel(self.r, self.s, order)?;
            self.num = kernel::numerator(&table, order)?;
        }
        Ok(&self.num)
    }

    /// Raw coefficients of omega_{g,n} on the given exponent windows
    /// (including the sign (-1)^n of the kernel convention), keyed by the
    /// exponents of z_i.
    pub fn omega_window(&mut self, g: i64, n: usize, windows: &[(i64, i64)]) -> Result<BTreeMap<Vec<i64>, Q>, CorrError> {
        if n == 0 || g < 0 {
            return Err(CorrError::Unstable(g, n));
        }
        let h = 2 * g - 2 + n as i64;
        if n == 1 {
            if g == 0 {
                return Err(CorrError::Unstable(g, n));
            }
            let num = self.numerator(h as u32)?;
            let w1 = kernel::omega1(num)?;
            let mut out = BTreeMap::new();
            for (e, c) in w1.hbar_slice(h) {
                if e[0] >= windows[0].0 && e[0] <= windows[0].1 {
                    out.insert(e, c);
                }
            }
            return Ok(out);
        }
        let num = self.numerator(h as u32)?.clone();
        let mut out = cyclic_sum(&num, n, h, windows);
        if n % 2 == 1 {
            for v in out.values_mut() {
                *v = -v.clone();
            }
        }
        Ok(out)
    }

    pub fn omega(&mut self, g: i64, n: usize) -> Result<CorrelatorTable, CorrError> {
        if let Some(t) = self.tables.get(&(g, n)) {
            return Ok(t.clone());
        }
        if 2 * g - 2 + (n as i64) <= 0 {
            return Err(CorrError::Unstable(g, n));
        }
        let w = stable_windows(self.s, g, n);
        let raw = self.omega_window(g, n, &w)?;
        let entries = raw.into_iter().map(|(e, c)| (e.iter().map(|x| -x - 1).collect(), c)).collect();
        let t = CorrelatorTable { r: self.r, s: self.s, g, n, entries };
        self.tables.insert((g, n), t.clone());
        Ok(t)
    }

    /// Entries with prescribed m_i (k = 0 descendant slices etc.).
    pub fn omega_at(&mut self, g: i64, m: &[i64]) -> Result<Q, CorrError> {
        if let Some(t) = self.tables.get(&(g, m.len())) {
            return Ok(t.get(m));
        }
        let w: Vec<(i64, i64)> = m.iter().map(|x| (-x - 1, -x - 1)).collect();
        let raw = self.omega_window(g, m.len(), &w)?;
        let key: Vec<i64> = m.iter().map(|x| -x - 1).collect();
        Ok(raw.get(&key).cloned().unwrap_or_else(Q::zero))
    }

    pub fn insert_table(&mut self, t: CorrelatorTable) {
        self.tables.insert((t.g, t.n), t);
    }

    pub fn tables(&self) -> impl Iterator<Item = &CorrelatorTable> {
        self.tables.values()
    }

    pub fn intersection_numbers(&mut self, g: i64, n: usize) -> Result<Vec<IntersectionRecord>, CorrError> {
        let t = self.omega(g, n)?;
        intersection_numbers_of(&t)
    }
}

pub fn omega(r: i64, s: i64, g: i64, n: usize) -> Result<CorrelatorTable, CorrError> {
    Engine::new(r, s)?.omega(g, n)
}

/// value = (-r)^{2g-2+n} entry / prod m_i!^{(r)}.
pub fn intersection_value(r: i64, h: i64, m: &[i64], entry: &Q) -> Q {
    let mut den = Q::one();
    for &x in m {
        den *= Q::from_integer(multifactorial(x as u64, r as u64));
    }
    num_traits::pow(qi(-r), h as usize) * entry / den
}

pub fn intersection_numbers_of(t: &CorrelatorTable) -> Result<Vec<IntersectionRecord>, CorrError> {
    let h = 2 * t.g - 2 + t.n as i64;
    let mut out = Vec::new();
    for (m, c) in &t.entries {
        if m.iter().any(|x| x % t.r == 0) {
            return Err(CorrError::DimensionViolation(format!("entry {m:?} has an index divisible by r")));
        }
        let a: Vec<i64> = m.iter().map(|x| x % t.r).collect();
        let k: Vec<i64> = m.iter().map(|x| x / t.r).collect();
        if !dimension_ok(t.r, t.s, t.g, &a, &k) {
            return Err(CorrError::DimensionViolation(format!("entry {m:?}")));
        }
        out.push(IntersectionRecord { r: t.r, s: t.s, g: t.g, n: t.n, a, k, value: intersection_value(t.r, h, m, c) });
    }
    out.sort_by(|x, y| (&x.a, &x.k).cmp(&(&y.a, &y.k)));
    Ok(out)
}

pub fn intersection_numbers(r: i64, s: i64, g: i64, n: usize) -> Result<Vec<IntersectionRecord>, CorrError> {
    Engine::new(r, s)?.intersection_numbers(g, n)
}

/// Coefficients of omega_{0,2} at hbar^0 on z1 in [-2-j, -2], z2 in [0, j],
/// and the pole-expansion coefficients j+1 it must equal.
pub fn omega02_check(r: i64, s: i64, j: i64) -> Result<bool, CorrError> {
    let mut eng = Engine::new(r, s)?;
    let raw = eng.omega_window(0, 2, &[(-2 - j, -2), (0, j)])?;
    let mut expect = BTreeMap::new();
    for p in 0..=j {
        expect.insert(vec![-2 - p, p], qi(p + 1));
    }
    Ok(raw == expect)
}

/// Stable correlators computed on windows widened by r on each side must
/// have no coefficient outside the stable window.
pub fn pole_cancellation(eng: &mut Engine, g: i64, n: usize) -> Result<bool, CorrError> {
    let w = stable_windows(eng.s, g, n);
    let r = eng.r;
    let wide: Vec<(i64, i64)> = w.iter().map(|&(a, b)| (a - r, b + r)).collect();
    let raw = eng.omega_window(g, n, &wide)?;
    Ok(raw.keys().all(|e| e.iter().zip(&w).all(|(x, (a, b))| x >= a && x <= b)))
}

// ---------------------------------------------------------------------------
// Semi-connected correlators and E^{(k)}_n

/// Laurent polynomial in (z, z_1, .., z_n) with cyclotomic coefficients.
pub type CPoly = BTreeMap<Vec<i64>, CycScalar>;

fn cpoly_mul(a: &CPoly, b: &CPoly) -> CPoly {
    let mut out: CPoly = BTreeMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<i64> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let p = ca.mul(cb);
            match out.get_mut(&e) {
                Some(v) => *v = v.add(&p),
                None => {
                    out.insert(e, p);
                }
            }
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

fn cpoly_add(a: &mut CPoly, b: &CPoly) {
    for (e, c) in b {
        match a.get_mut(e) {
            Some(v) => *v = v.add(c),
            None => {
                a.insert(e.clone(), c.clone());
            }
        }
    }
    a.retain(|_, v| !v.is_zero());
}

fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let mut out = Vec::new();
    for p in set_partitions(&items[1..]) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first);
            out.push(q);
        }
        let mut q = p.clone();
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

/// One block of a semi-connected product.
#[derive(Clone, Debug)]
struct Block {
    sheets: Vec<i64>,
    extras: Vec<usize>,
}

pub struct SemiConnected<'a> {
    pub eng: &'a mut Engine,
    /// number of extra points z_1..z_n
    pub n: usize,
    /// largest z exponent kept; every kept coefficient is exact
    pub zmax: i64,
}

impl<'a> SemiConnected<'a> {
    fn ring(&self) -> u32 {
        2 * self.eng.r as u32
    }

    fn theta(&self, e: i64) -> CycScalar {
        CycScalar::theta_pow(self.eng.r as u32, e)
    }

    fn mono(&self, ez: i64, extras: &[(usize, i64)], c: CycScalar) -> CPoly {
        let mut e = vec![0; self.n + 1];
        e[0] = ez;
        for &(i, x) in extras {
            e[i + 1] = x;
        }
        let mut p = CPoly::new();
        if !c.is_zero() {
            p.insert(e, c);
        }
        p
    }

    /// Finite factor of a block, or None for the infinite omega_{0,2}(sheet,
    /// extra) factors, which are expanded later.
    fn finite_factor(&mut self, b: &Block, g: i64) -> Result<Option<CPoly>, CorrError> {
        let (r, s) = (self.eng.r, self.eng.s);
        let nl = b.sheets.len() + b.extras.len();
        if g == 0 && nl == 1 {
            let a = b.sheets[0];
            return Ok(Some(self.mono(s - 1, &[], self.theta(a * s).scale(&qi(r)))));
        }
        if g == 0 && nl == 2 {
            if b.sheets.len() == 2 {
                let (a, c) = (b.sheets[0], b.sheets[1]);
                let d = self.theta(a).sub(&self.theta(c));
                let coef = self.theta(a + c).mul(&d.mul(&d).inv()?);
                return Ok(Some(self.mono(-2, &[], coef)));
            }
            return Ok(None);
        }
        let t = self.eng.omega(g, nl)?;
        let mut out = CPoly::new();
        for (m, c) in &t.entries {
            let mut ez = 0;
            let mut ph = 0;
            for (i, &a) in b.sheets.iter().enumerate() {
                ez += -m[i] - 1;
                ph += -a * m[i];
            }
            let ex: Vec<(usize, i64)> = b.extras.iter().enumerate().map(|(j, &x)| (x, -m[b.sheets.len() + j] - 1)).collect();
            let term = self.mono(ez, &ex, self.theta(ph).scale(c));
            cpoly_add(&mut out, &term);
        }
        Ok(Some(out))
    }

    /// omega_{0,2}(theta^a z, z_i) expanded in |z| < |z_i| up to z^pmax.
    fn sheet_extra(&self, a: i64, i: usize, pmax: i64) -> CPoly {
        let mut out = CPoly::new();
        for p in 0..=pmax {
            let c = self.theta(a * (p + 1)).scale(&qi(p + 1));
            cpoly_add(&mut out, &self.mono(p, &[(i, -p - 2)], c));
        }
        out
    }

    /// Semi-connected correlator of the points theta^a z (a in sheets) and
    /// the extra points, at hbar^target; `primed` drops omega_{0,1}.
    pub fn correlator(&mut self, sheets: &[i64], target: i64, primed: bool) -> Result<CPoly, CorrError> {
        let n = self.n;
        let idx: Vec<usize> = (0..sheets.len()).collect();
        let mut total = CPoly::new();
        for part in set_partitions(&idx) {
            let nb = part.len();
            // distribute extras over blocks
            let assignments = (0..nb.pow(n as u32)).map(|mut code| {
                let mut v = vec![0usize; n];
                for x in v.iter_mut() {
                    *x = code % nb;
                    code /= nb;
                }
                v
            });
            for asg in assignments {
                let blocks: Vec<Block> = part
                    .iter()
                    .enumerate()
                    .map(|(bi, bl)| Block {
                        sheets: bl.iter().map(|&i| sheets[i]).collect(),
                        extras: (0..n).filter(|&x| asg[x] == bi).collect(),
                    })
                    .collect();
                let base: i64 = blocks.iter().map(|b| (b.sheets.len() + b.extras.len()) as i64 - 2).sum();
                // distribute genera: sum 2 g_l = target - base
                let rem = target - base;
                if rem < 0 || rem % 2 != 0 {
                    continue;
                }
                for gs in compositions(rem / 2, nb) {
                    let term = self.product(&blocks, &gs, primed)?;
                    cpoly_add(&mut total, &term);
                }
            }
        }
        Ok(total)
    }

    fn product(&mut self, blocks: &[Block], gs: &[i64], primed: bool) -> Result<CPoly, CorrError> {
        let mut acc = self.mono(0, &[], CycScalar::one(self.ring()));
        let mut infinite = Vec::new();
        for (b, &g) in blocks.iter().zip(gs) {
            let nl = b.sheets.len() + b.extras.len();
            if g == 0 && nl == 1 && primed {
                return Ok(CPoly::new());
            }
            match self.finite_factor(b, g)? {
                Some(f) => {
                    acc = cpoly_mul(&acc, &f);
                    if acc.is_empty() {
                        return Ok(acc);
                    }
                }
                None => infinite.push((b.sheets[0], b.extras[0])),
            }
        }
        let minz = acc.keys().map(|e| e[0]).min().unwrap_or(0);
        for (a, i) in infinite {
            let f = self.sheet_extra(a, i, self.zmax - minz);
            acc = cpoly_mul(&acc, &f);
        }
        acc.retain(|e, _| e[0] <= self.zmax);
        Ok(acc)
    }
}

/// All tuples of `parts` non-negative integers summing to `total`.
pub fn compositions(total: i64, parts: usize) -> Vec<Vec<i64>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn subsets(items: &[i64], k: usize) -> Vec<Vec<i64>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for mut s in subsets(&items[1..], k - 1) {
        s.insert(0, items[0]);
        out.push(s);
    }
    out.extend(subsets(&items[1..], k));
    out
}

/// E^{(k)}_{g,n} as a rational Laurent series in (x, z_1, .., z_n): key
/// (j, exponents of z_i) for x^j dx^k prod dz_i, truncated at x^{jmax}.
pub type XSeries = BTreeMap<Vec<i64>, Q>;

pub fn e_kn(eng: &mut Engine, k: usize, g: i64, n: usize, jmax: i64) -> Result<XSeries, CorrError> {
    let r = eng.r;
    if k == 0 {
        let mut out = XSeries::new();
        if g == 0 && n == 0 {
            out.insert(vec![0], Q::one());
        }
        return Ok(out);
    }
    let target = 2 * g - k as i64 + n as i64;
    let zmax = k as i64 * (r - 1) + r * jmax;
    let sheets: Vec<i64> = (1..=r).collect();
    let mut total = CPoly::new();
    for z in subsets(&sheets, k) {
        let mut sc = SemiConnected { eng, n, zmax };
        let c = sc.correlator(&z, target, false)?;
        cpoly_add(&mut total, &c);
    }
    to_x(r, k as i64, &total)
}

/// f dz^k -> f r^{-k} z^{-k(r-1)} dx^k, asserting integral x powers and
/// rational coefficients.
fn to_x(r: i64, k: i64, f: &CPoly) -> Result<XSeries, CorrError> {
    let mut out = XSeries::new();
    let scale = Q::one() / num_traits::pow(qi(r), k as usize);
    for (e, c) in f {
        let ez = e[0] - k * (r - 1);
        if ez.rem_euclid(r) != 0 {
            return Err(CorrError::Math(MathError::NotRational(format!("z^{} is not a power of x", e[0]))));
        }
        let mut key = vec![ez / r];
        key.extend_from_slice(&e[1..]);
        out.insert(key, c.rational_part()? * &scale);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct LoopReport {
    pub checked: usize,
    pub violations: Vec<String>,
}

/// Pole bounds and leading constants for E^{(k)}_{g,n}, all k in [r].
pub fn check_loop_equations(eng: &mut Engine, n: usize, g: i64) -> Result<LoopReport, CorrError> {
    let (r, s) = (eng.r, eng.s);
    let mut rep = LoopReport::default();
    for k in 1..=r {
        let e = e_kn(eng, k as usize, g, n, 0)?;
        rep.checked += 1;
        let bound = if k <= r - s { -k } else { -(r - s) };
        for (key, c) in &e {
            let j = key[0];
            if j < bound {
                rep.violations.push(format!("k={k} g={g} n={n}: x^{j} coefficient {c}"));
            }
        }
        if k <= r - s {
            let lead: Vec<(&Vec<i64>, &Q)> = e.iter().filter(|(kk, _)| kk[0] == -k).collect();
            if n == 0 {
                let expect = if 2 * g == k { a_constant(r, s, k) } else { Q::zero() };
                let got = lead.first().map(|x| x.1.clone()).unwrap_or_else(Q::zero);
                if got != expect {
                    rep.violations.push(format!("k={k} g={g}: leading constant {got}, expected {expect}"));
                }
            } else if let Some((kk, c)) = lead.first() {
                rep.violations.push(format!("k={k} g={g} n={n}: leading term {kk:?} -> {c}"));
            }
        }
    }
    Ok(rep)
}

/// E^{(k)}_0 summed over all g with 2g <= gmax*2, keyed by (hbar power, x power).
pub fn e_k0_all(eng: &mut Engine, k: usize, gmax: i64) -> Result<BTreeMap<(i64, i64), Q>, CorrError> {
    let mut out = BTreeMap::new();
    for g in 0..=gmax {
        let target = 2 * g - k as i64;
        let zmax = i64::MAX / 4;
        let r = eng.r;
        let sheets: Vec<i64> = (1..=r).collect();
        let mut total = CPoly::new();
        for z in subsets(&sheets, k) {
            let mut sc = SemiConnected { eng, n: 0, zmax };
            let c = sc.correlator(&z, target, false)?;
            cpoly_add(&mut total, &c);
        }
        for (key, c) in to_x(r, k as i64, &total)? {
            out.insert((target, key[0]), c);
        }
    }
    Ok(out)
}

/// Strengthened n = 0 identities for coprime (r,s) up to genus gmax:
/// E^{(k)}_0 = A_k dx^k/x^k (k <= r-s), 0 (r-s < k < r) and
/// E^{(r)}_0 = `top` hbar^{-r} x^{s-r} dx^r. Returns the mismatches.
pub fn strengthened_n0(eng: &mut Engine, gmax: i64, top_sign: Q, top_xpow: i64) -> Result<Vec<String>, CorrError> {
    let (r, s) = (eng.r, eng.s);
    if gcd(r, s) != 1 {
        return Err(CorrError::NotCoprime(r, s));
    }
    let mut bad = Vec::new();
    for k in 1..=r {
        let got = e_k0_all(eng, k as usize, gmax)?;
        let mut expect = BTreeMap::new();
        if k <= r - s {
            let a = a_constant(r, s, k);
            if !a.is_zero() && k % 2 == 0 && k / 2 <= gmax {
                expect.insert((0, -k), a);
            }
        } else if k == r && !top_sign.is_zero() {
            expect.insert((-r, top_xpow), top_sign.clone());
        }
        if got != expect {
            bad.push(format!("k={k}: got {got:?}, expected {expect:?}"));
        }
    }
    Ok(bad)
}

/// Residue formula for omega_{g,1+n}: sum over non-empty subsets Z of the
/// other sheets of the primed semi-connected correlators divided by the
/// recursion kernel, plus the shift (-1)^r A_{2g} dz0/z0^{2g} when n = 0.
/// Returned with the same keys as `CorrelatorTable` (m of z0 first).
pub fn residue_formula(eng: &mut Engine, g: i64, n: usize) -> Result<BTreeMap<Vec<i64>, Q>, CorrError> {
    let (r, s) = (eng.r, eng.s);
    let others: Vec<i64> = (1..r).collect();
    let mut total = CPoly::new();
    for size in 1..r as usize {
        for z in subsets(&others, size) {
            let k = 1 + size as i64;
            let target = 2 * g - k + n as i64;
            let zmax = size as i64 * (s - 1) - 1;
            let mut pts = vec![r];
            pts.extend(&z);
            let mut sc = SemiConnected { eng: &mut *eng, n, zmax };
            let c = sc.correlator(&pts, target, true)?;
            let ring = 2 * r as u32;
            let mut den = CycScalar::from_q(ring, num_traits::pow(qi(r), size));
            for &a in &z {
                den = den.mul(&CycScalar::theta_pow(r as u32, a * (s - r)).sub(&CycScalar::one(ring)));
            }
            let inv = den.inv()?;
            let shift = size as i64 * (s - 1);
            for (e, v) in c {
                let ez = e[0] - shift;
                if ez <= -1 {
                    let mut key = e.clone();
                    key[0] = ez;
                    let term: CPoly = [(key, v.mul(&inv).neg())].into_iter().collect();
                    cpoly_add(&mut total, &term);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (e, c) in total {
        let m: Vec<i64> = e.iter().map(|x| -x - 1).collect();
        out.insert(m, c.rational_part()?);
    }
    if n == 0 {
        let a = a_constant(r, s, 2 * g);
        if !a.is_zero() {
            *out.entry(vec![s * (2 * g - 1)]).or_insert_with(Q::zero) -= a;
        }
    }
    out.retain(|_, c| !c.is_zero());
    Ok(out)
}

/// Shifted recursion for s = 1.
pub fn shifted_tr_omega(r: i64, g: i64, n_total: usize) -> Result<CorrelatorTable, CorrError> {
    let mut eng = Engine::new(r, 1)?;
    shifted_tr_with(&mut eng, g, n_total)
}

pub fn shifted_tr_with(eng: &mut Engine, g: i64, n_total: usize) -> Result<CorrelatorTable, CorrError> {
    if eng.s != 1 {
        return Err(CorrError::DimensionViolation("shifted recursion needs s = 1".into()));
    }
    let entries = residue_formula(eng, g, n_total - 1)?;
    Ok(CorrelatorTable { r: eng.r, s: 1, g, n: n_total, entries })
}

/// omega_{g,1} by the residue formula, for coprime (r,s).
pub fn omega_g1_coprime(r: i64, s: i64, g: i64) -> Result<CorrelatorTable, CorrError> {
    wavefunc::validate(r, s)?;
    if gcd(r, s) != 1 {
        return Err(CorrError::NotCoprime(r, s));
    }
    let mut eng = Engine::new(r, s)?;
    omega_g1_coprime_with(&mut eng, g)
}

pub fn omega_g1_coprime_with(eng: &mut Engine, g: i64) -> Result<CorrelatorTable, CorrError> {
    if gcd(eng.r, eng.s) != 1 {
        return Err(CorrError::NotCoprime(eng.r, eng.s));
    }
    let entries = residue_formula(eng, g, 0)?;
    Ok(CorrelatorTable { r: eng.r, s: eng.s, g, n: 1, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactmath::rational::q;

    #[test]
    fn bgw_anchor() {
        let recs = intersection_numbers(2, 1, 1, 1).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].a, vec![1]);
        assert_eq!(recs[0].k, vec![0]);
        assert_eq!(recs[0].value, q(1, 8));
        let t = omega(2, 1, 1, 1).unwrap();
        assert_eq!(t.get(&[1]), q(-1, 16));
    }

    #[test]
    fn d1_closed_form() {
        for r in [3, 5] {
            let recs = intersection_numbers(r, 1, 1, 1).unwrap();
            let v = recs.iter().find(|x| x.a == vec![1] && x.k == vec![0]).unwrap();
            assert_eq!(v.value, q((r - 1) * r + 1, 24 * (r - 1)));
        }
    }

    #[test]
    fn two_point_singular_part() {
        for (r, s) in [(2, 1), (3, 2), (4, 1)] {
            assert!(omega02_check(r, s, 6).unwrap());
        }
    }

    #[test]
    fn multifactorials() {
        assert_eq!(multifactorial(7, 3), 28.into());
        assert_eq!(multifactorial(5, 2), 15.into());
        assert_eq!(multifactorial(3, 3), 3.into());
    }

    #[test]
    fn genus_zero_three_point_vanishes() {
        for (r, s) in [(3, 1), (3, 2), (5, 2)] {
            assert!(omega(r, s, 0, 3).unwrap().entries.is_empty(), "{r},{s}");
        }
    }

    #[test]
    fn unit_axiom_bessel() {
        let mut eng = Engine::new(2, 1).unwrap();
        let one = eng.omega_at(1, &[1]).unwrap();
        let two = eng.omega_at(1, &[1, 1]).unwrap();
        let v1 = intersection_value(2, 1, &[1], &one);
        let v2 = intersection_value(2, 2, &[1, 1], &two);
        assert_eq!(v2, v1);
    }

    #[test]
    fn structure_small() {
        let mut eng = Engine::new(3, 1).unwrap();
        for (g, n) in [(0, 3), (1, 1), (0, 4), (1, 2)] {
            let t = eng.omega(g, n).unwrap();
            assert!(t.is_symmetric() && t.vanishes_mod_r() && t.within_support(), "{g},{n}");
            assert!(pole_cancellation(&mut eng, g, n).unwrap());
        }
    }

    #[test]
    fn residue_routes_small() {
        let mut eng = Engine::new(2, 1).unwrap();
        let t = eng.omega(1, 1).unwrap();
        assert_eq!(shifted_tr_with(&mut eng, 1, 1).unwrap().entries, t.entries);
        let mut eng = Engine::new(3, 2).unwrap();
        let t = eng.omega(1, 1).unwrap();
        assert_eq!(omega_g1_coprime_with(&mut eng, 1).unwrap().entries, t.entries);
        assert_eq!(omega_g1_coprime(4, 2, 1), Err(CorrError::NotCoprime(4, 2)));
        let mut eng = Engine::new(5, 2).unwrap();
        let t = eng.omega(1, 1).unwrap();
        assert_eq!(t.get(&[2]), q(-4, 45));
        assert_eq!(omega_g1_coprime_with(&mut eng, 1).unwrap().entries, t.entries);
        let mut eng = Engine::new(4, 1).unwrap();
        let t = eng.omega(1, 1).unwrap();
        assert_eq!(t.get(&[1]), q(-13, 288));
        assert_eq!(shifted_tr_with(&mut eng, 1, 1).unwrap().entries, t.entries);
    }

    #[test]
    fn loop_equations_small() {
        let mut eng = Engine::new(2, 1).unwrap();
        for g in 0..=1 {
            for n in 0..=1 {
                let rep = check_loop_equations(&mut eng, n, g).unwrap();
                assert!(rep.violations.is_empty(), "{:?}", rep.violations);
            }
        }
        let bad = strengthened_n0(&mut eng, 2, -Q::one(), -1).unwrap();
        assert!(bad.is_empty(), "{bad:?}");
    }
}
