//! Acceptance suite. Prints one line per criterion and exits non-zero on
//! any unexpected outcome.
//!
//! Two criteria contain a literal statement that the computation refutes:
//! the top n = 0 loop identity E^(r)_0 = (-1)^r hbar^-r dx^r (criterion 6)
//! and "gcd(r,s)-to-one" for the index map (criterion 9). Those criteria are
//! reported as FAIL, together with the corrected statement that does hold.
//! The run counts as expected only if the literal statements fail and the
//! corrected ones pass.

use std::collections::BTreeMap;
use std::time::Instant;

use num_traits::{One, Zero};

use thetars::correlators::{self, Engine};
use thetars::exactmath::rational::{gcd, q, qi};
use thetars::exactmath::Q;
use thetars::integrability::{self, InitialCondition};
use thetars::kernel;
use thetars::walgebra::{self, PotentialTrunc};
use thetars::wavefunc::{self, WaveTable};

const PAIRS: [(i64, i64); 7] = [(2, 1), (3, 1), (3, 2), (4, 3), (5, 2), (5, 3), (4, 1)];

#[derive(Default)]
struct Criterion {
    failures: Vec<String>,
    refuted: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    /// A literal statement expected to be false.
    fn literal(&mut self, holds: bool, what: impl Into<String>) {
        if holds {
            self.failures.push(format!("literal statement unexpectedly holds: {}", what.into()));
        } else {
            self.refuted.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

struct Engines(BTreeMap<(i64, i64), Engine>);

impl Engines {
    fn get(&mut self, r: i64, s: i64) -> &mut Engine {
        self.0.entry((r, s)).or_insert_with(|| Engine::new(r, s).unwrap())
    }
}

fn stable(chi: i64) -> Vec<(i64, usize)> {
    let mut out = Vec::new();
    for h in 1..=chi {
        for n in 1..=(h + 2) {
            if (h + 2 - n) % 2 == 0 {
                out.push(((h + 2 - n) / 2, n as usize));
            }
        }
    }
    out
}

fn c1_wave_relations(_: &mut Engines, c: &mut Criterion) {
    for (r, s) in PAIRS {
        let (lo, hi) = wavefunc::kernel_window(r, s);
        let t = WaveTable::build(r, s, lo - r, hi + r, 6).unwrap();
        let rep = wavefunc::check_relations(&t, 6);
        c.check(rep.is_empty(), format!("({r},{s}): {:?}", rep.relations()));
        c.check(rep.checked == 2 * 7 * (hi - lo + 1) as usize, format!("({r},{s}): only {} residuals evaluated", rep.checked));
    }
}

fn c2_inverse(_: &mut Engines, c: &mut Criterion) {
    for (r, s) in PAIRS {
        let res = wavefunc::wave_matrix(r, s, 5, wavefunc::default_zwindow(r, s, 5));
        c.check(res.is_ok(), format!("({r},{s}): {:?}", res.err()));
    }
}

fn c3_bgw(e: &mut Engines, c: &mut Criterion) {
    let recs = e.get(2, 1).intersection_numbers(1, 1).unwrap();
    let v = recs.iter().find(|x| x.a == [1] && x.k == [0]).map(|x| x.value.clone());
    c.check(v == Some(q(1, 8)), format!("<Theta^(2,1)_(1,1)(1)> = {v:?}"));
    for r in [2, 3, 5] {
        let d = integrability::d_alpha(e.get(r, 1), 1).unwrap();
        // (1/24)((r-1)r+1)/(r-1)
        let want = Q::new(((r - 1) * r + 1).into(), (24 * (r - 1)).into());
        c.check(d == want, format!("d_1({r}) = {d}, expected {want}"));
    }
}

fn c4_structure(e: &mut Engines, c: &mut Criterion) {
    let mut tables = 0;
    for (r, s) in PAIRS {
        let eng = e.get(r, s);
        for (g, n) in stable(4) {
            let t = eng.omega(g, n).unwrap();
            tables += 1;
            c.check(t.is_symmetric(), format!("({r},{s}) ({g},{n}) not symmetric"));
            c.check(t.vanishes_mod_r(), format!("({r},{s}) ({g},{n}) has entries with m_i = 0 mod r"));
            c.check(t.within_support(), format!("({r},{s}) ({g},{n}) outside support"));
        }
        // omega_{0,1} = z^{s-r} d(z^r) = r z^{s-1} dz
        let table = WaveTable::for_kernel(r, s, 2).unwrap();
        let w1 = kernel::omega1(&kernel::numerator(&table, 2).unwrap()).unwrap();
        let want: BTreeMap<Vec<i64>, Q> = [(vec![s - 1], qi(r))].into_iter().collect();
        c.check(w1.hbar_slice(-1) == want, format!("({r},{s}) omega_(0,1) = {:?}", w1.hbar_slice(-1)));
        c.check(correlators::omega02_check(r, s, 6).unwrap(), format!("({r},{s}) omega_(0,2) singular part"));
    }
    c.note(format!("{tables} tables"));
}

fn c5_routes(e: &mut Engines, c: &mut Criterion) {
    let mut compared = 0;
    for r in [2, 3, 4] {
        let eng = e.get(r, 1);
        for (g, n) in [(1, 1), (1, 2), (2, 1)] {
            let a = eng.omega(g, n).unwrap();
            let b = correlators::shifted_tr_with(eng, g, n).unwrap();
            compared += a.entries.len();
            c.check(a.entries == b.entries, format!("({r},1) ({g},{n})"));
        }
    }
    for (r, s) in [(3, 2), (5, 2), (5, 3)] {
        let eng = e.get(r, s);
        for g in [1, 2] {
            let a = eng.omega(g, 1).unwrap();
            let b = correlators::omega_g1_coprime_with(eng, g).unwrap();
            compared += a.entries.len();
            c.check(a.entries == b.entries, format!("({r},{s}) g = {g}"));
        }
    }
    c.check(compared > 0, "no coefficients compared");
    c.note(format!("{compared} coefficients compared"));
}

fn c6_loops(e: &mut Engines, c: &mut Criterion) {
    for (r, s) in PAIRS {
        let eng = e.get(r, s);
        for g in 0..=2 {
            for n in 0..=1usize {
                if 2 * g + n as i64 > 4 {
                    continue;
                }
                let rep = correlators::check_loop_equations(eng, n, g).unwrap();
                c.check(rep.violations.is_empty(), format!("({r},{s}) ({g},{n}): {:?}", rep.violations));
            }
        }
        if gcd(r, s) == 1 {
            let corrected = if r % 2 == 1 { Q::one() } else { -Q::one() };
            let bad = correlators::strengthened_n0(eng, 2, corrected.clone(), s - r).unwrap();
            c.check(bad.is_empty(), format!("({r},{s}) E^(r)_0 = {corrected} hbar^-r x^(s-r) dx^r: {bad:?}"));
            let literal = -corrected;
            let bad = correlators::strengthened_n0(eng, 2, literal, 0).unwrap();
            c.literal(bad.is_empty(), format!("({r},{s}) E^(r)_0 = (-1)^r hbar^-r dx^r"));
        }
    }
    let a2 = walgebra::a_constant(5, 1, 2);
    c.check(a2 == q(-5, 32), format!("A_2(5,1) = {a2}"));
    // -(1/24)(r-2)r/(r-1)
    c.check(a2 == Q::new((-3 * 5).into(), (24 * 4).into()), "A_2(5,1) closed form");
    c.note("corrected top identity E^(r)_0 = (-1)^(r-1) hbar^-r x^(s-r) dx^r holds");
}

fn c7_w(e: &mut Engines, c: &mut Criterion) {
    for (r, s) in PAIRS {
        let m = 2 * r + s;
        let z = integrability::assemble_with(e.get(r, s), 4, m.max(4 * s)).unwrap();
        let rep = walgebra::verify_w_constraints(&z, m).unwrap();
        c.check(rep.violations.is_empty(), format!("({r},{s}): {} violations, first {:?}", rep.violations.len(), rep.violations.first()));
        c.check(!rep.checked.is_empty(), format!("({r},{s}): nothing checked"));
        for (i, got, a) in &rep.zero_modes {
            c.check(got == a, format!("({r},{s}) H^{i}_0: {got} vs {a}"));
        }
        for i in (1..=r).step_by(2) {
            let a = walgebra::a_constant(r, s, i);
            c.check(a.is_zero(), format!("({r},{s}) A_{i} = {a}"));
        }
    }
}

fn c8_initial(e: &mut Engines, c: &mut Criterion) {
    for (r, s) in PAIRS {
        let eng = e.get(r, s);
        for alpha in 1..r {
            match integrability::initial_conditions(eng, alpha, 5) {
                Ok(InitialCondition::Closed { exponent, .. }) => c.check(s == 1 && exponent == alpha + 1, format!("({r},{s}) u_{alpha}")),
                Ok(InitialCondition::Polynomial { coeffs, .. }) => {
                    c.check(s > 1 && integrability::polynomial_support_ok(s, alpha, &coeffs), format!("({r},{s}) u_{alpha} support"))
                }
                Err(err) => c.check(false, format!("({r},{s}) u_{alpha}: {err}")),
            }
        }
    }
    for r in [2, 3] {
        let eng = e.get(r, 1);
        let d1 = integrability::d_alpha(eng, 1).unwrap();
        let z = integrability::assemble_with(eng, 4, 4).unwrap();
        let res = integrability::check_string_equation(&z, &d1).unwrap();
        c.check(res.is_empty(), format!("({r},1) string residual {res:?}"));
    }
}

fn c9_index(_: &mut Engines, c: &mut Criterion) {
    let mut literal_defects = 0;
    for r in 2..=8 {
        for s in 1..r {
            let ix = walgebra::index_sets(r, s, 100);
            let bad = ix.verify();
            c.check(bad.is_empty(), format!("({r},{s}): {bad:?}"));
            // independent brute force: gaps and preimage counts
            let representable = |m: i64| (0..=m / s).any(|b| (m - b * s) % (r - s) == 0);
            let gaps: Vec<i64> = (1..=100).filter(|&m| !representable(m)).collect();
            let upto: Vec<i64> = ix.gaps.iter().copied().filter(|&m| m <= 100).collect();
            c.check(gaps == upto, format!("({r},{s}) gap set"));
            for m in 1..=100 {
                let mut count = 0;
                for i in 1..=r {
                    let lower = if i <= r - s { 0 } else { r - s - i + 1 };
                    for k in lower..=100 {
                        if (i - 1) * s + r * k == m {
                            count += 1;
                        }
                    }
                }
                c.check((count == 0) == gaps.contains(&m), format!("({r},{s}) image at {m}"));
                if count != 0 && count != gcd(r, s) {
                    literal_defects += 1;
                }
            }
        }
    }
    c.literal(literal_defects == 0, "every value has exactly gcd(r,s) preimages");
    c.note(format!("{literal_defects} values below 100 have fewer than gcd(r,s) preimages, e.g. m = 2 for (6,2); the count is min(gcd(r,s), #representations)"));
    let ix = walgebra::index_sets(7, 3, 100);
    c.check(ix.gaps == [1, 2, 5], format!("K_(7,3) = {:?}", ix.gaps));
    c.check(ix.gaps.last() == Some(&(3 * (7 - 3) - 7)), "max K_(7,3)");
}

fn strip(z: &PotentialTrunc) -> Vec<((i64, usize), BTreeMap<Vec<i64>, Q>)> {
    z.f.iter().filter(|(_, t)| !t.is_empty()).map(|(k, t)| (*k, t.clone())).collect()
}

fn c10_reconstruction(e: &mut Engines, c: &mut Criterion) {
    let full = integrability::assemble_with(e.get(5, 2), 2, 4).unwrap();
    let gaps = walgebra::index_sets(5, 2, 4).gaps;
    let reduced = full.restrict(&gaps);
    c.check(reduced.f.values().any(|t| !t.is_empty()), "(5,2) reduced data is empty");
    let rec = walgebra::reconstruct_potential(5, 2, &reduced, 2).unwrap();
    c.check(strip(&rec) == strip(&full), "(5,2) N = 2");
    for (r, s) in PAIRS {
        if s != 1 && s != r - 1 {
            continue;
        }
        let full = integrability::assemble_with(e.get(r, s), 2, 2 * s).unwrap();
        let rec = walgebra::reconstruct_potential(r, s, &PotentialTrunc::new(r, s, 2, 2 * s), 2).unwrap();
        c.check(!strip(&full).is_empty() && strip(&rec) == strip(&full), format!("({r},{s}) from trivial data"));
    }
}

type Run = fn(&mut Engines, &mut Criterion);

fn main() {
    let list: [(&str, Run); 10] = [
        ("wave relations, m <= 6", c1_wave_relations),
        ("Psi Psi^-1 = Id to hbar^5", c2_inverse),
        ("BGW value 1/8 and d_1(r)", c3_bgw),
        ("correlator structure, 2g-2+n <= 4", c4_structure),
        ("route agreement", c5_routes),
        ("loop equations", c6_loops),
        ("W-constraints to hbar^4, M = 2r+s", c7_w),
        ("initial conditions and string equation", c8_initial),
        ("index combinatorics", c9_index),
        ("reconstruction", c10_reconstruction),
    ];
    let mut engines = Engines(BTreeMap::new());
    let mut unexpected = 0;
    let mut failed = 0;
    for (i, (name, run)) in list.iter().enumerate() {
        let start = Instant::now();
        let mut c = Criterion::default();
        run(&mut engines, &mut c);
        let ok = c.failures.is_empty() && c.refuted.is_empty();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {:>2}: {} {name} ({secs:.1}s)", i + 1, if ok { "PASS" } else { "FAIL" });
        for f in &c.failures {
            println!("    failure: {f}");
        }
        for f in &c.refuted {
            println!("    literal statement refuted: {f}");
        }
        for n in &c.notes {
            println!("    note: {n}");
        }
        failed += usize::from(!ok);
        unexpected += c.failures.len();
    }
    println!("{} of {} criteria pass; {unexpected} unexpected failures", list.len() - failed, list.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
