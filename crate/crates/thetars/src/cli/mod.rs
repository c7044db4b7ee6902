//! Command-line surface: argument parsing, dispatch, JSON/CSV output and
//! exit codes (0 success, 1 failed identity, 2 usage, 3 truncation or I/O).

pub mod cache;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::correlators::{self, CorrError, Engine};
use crate::exactmath::rational::{gcd, q, to_pq};
use crate::exactmath::Q;
use crate::integrability::{self, InitialCondition};
use crate::kernel;
use crate::walgebra::{self, WError};
use crate::wavefunc::{self, WaveError, WaveTable};
use cache::Cache;

#[derive(Parser, Debug)]
#[command(name = "thetars", version, about = "Exact descendant integrals of Theta^{r,s} classes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub r: i64,
    #[arg(long)]
    pub s: i64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "THETA_RS_CACHE")]
    pub cache: Option<PathBuf>,
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Wavefunctions,
    Kernels,
    Loops,
    Wconstraints,
    String,
    Routes,
    Indexsets,
    Reconstruct,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Intersection numbers <Theta(a) prod psi^k> for one (g,n).
    Compute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        g: i64,
        #[arg(long)]
        n: usize,
    },
    /// Coefficients of omega_{g,n} on prod dz_i/z_i^{m_i+1}.
    Omega {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        g: i64,
        #[arg(long)]
        n: usize,
    },
    /// Coefficients F_{g,n}[m] of the descendant potential.
    Zpotential {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        order: i64,
        #[arg(long)]
        vars: Option<i64>,
    },
    /// Runs one identity suite.
    Verify {
        suite: Suite,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        g: Option<i64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        order: Option<i64>,
        #[arg(long)]
        vars: Option<i64>,
    },
    /// Intersection numbers for all stable (g,n) with g <= G, n <= N.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        g: i64,
        #[arg(long)]
        n: usize,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
    Resource(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<CorrError> for CliError {
    fn from(e: CorrError) -> Self {
        match e {
            CorrError::Wave(WaveError::InvalidParameters { .. }) | CorrError::Unstable(..) | CorrError::NotCoprime(..) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Resource(e.to_string()),
        }
    }
}

impl From<WaveError> for CliError {
    fn from(e: WaveError) -> Self {
        match e {
            WaveError::InvalidParameters { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Resource(e.to_string()),
        }
    }
}

impl From<WError> for CliError {
    fn from(e: WError) -> Self {
        CliError::Resource(e.to_string())
    }
}

impl From<kernel::KernelError> for CliError {
    fn from(e: kernel::KernelError) -> Self {
        CliError::Resource(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Resource(e.to_string())
    }
}

impl From<integrability::IntegrabilityError> for CliError {
    fn from(e: integrability::IntegrabilityError) -> Self {
        CliError::Resource(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Output

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Meta {
    pub tool_version: String,
    pub command: String,
    pub truncation: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub r: i64,
    pub s: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub entries: Vec<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<Verdict>,
    pub meta: Meta,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct IntersectionEntry {
    pub a: Vec<i64>,
    pub k: Vec<i64>,
    pub value: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub g: i64,
    pub n: usize,
    pub a: Vec<i64>,
    pub k: Vec<i64>,
    pub value: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct OmegaEntry {
    pub m: Vec<i64>,
    pub value: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct PotentialEntry {
    pub g: i64,
    pub n: usize,
    pub m: Vec<i64>,
    pub value: String,
}

fn meta(command: &str, truncation: BTreeMap<String, Value>) -> Meta {
    Meta { tool_version: env!("CARGO_PKG_VERSION").to_string(), command: command.to_string(), truncation }
}

fn joined(v: &[i64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

trait CsvRows {
    fn header(n: usize) -> Vec<String>;
    fn row(&self) -> Vec<String>;
}

impl CsvRows for IntersectionEntry {
    fn header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=n).map(|i| format!("a_{i}")).collect();
        h.extend((1..=n).map(|i| format!("k_{i}")));
        h.push("value".into());
        h
    }
    fn row(&self) -> Vec<String> {
        let mut r: Vec<String> = self.a.iter().chain(&self.k).map(|x| x.to_string()).collect();
        r.push(self.value.clone());
        r
    }
}

impl CsvRows for OmegaEntry {
    fn header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=n).map(|i| format!("m_{i}")).collect();
        h.push("value".into());
        h
    }
    fn row(&self) -> Vec<String> {
        let mut r: Vec<String> = self.m.iter().map(|x| x.to_string()).collect();
        r.push(self.value.clone());
        r
    }
}

impl CsvRows for TableEntry {
    fn header(_: usize) -> Vec<String> {
        ["g", "n", "a", "k", "value"].map(String::from).to_vec()
    }
    fn row(&self) -> Vec<String> {
        vec![self.g.to_string(), self.n.to_string(), joined(&self.a), joined(&self.k), self.value.clone()]
    }
}

impl CsvRows for PotentialEntry {
    fn header(_: usize) -> Vec<String> {
        ["g", "n", "m", "value"].map(String::from).to_vec()
    }
    fn row(&self) -> Vec<String> {
        vec![self.g.to_string(), self.n.to_string(), joined(&self.m), self.value.clone()]
    }
}

impl CsvRows for Verdict {
    fn header(_: usize) -> Vec<String> {
        ["check", "passed", "detail"].map(String::from).to_vec()
    }
    fn row(&self) -> Vec<String> {
        vec![self.name.clone(), self.passed.to_string(), self.detail.clone()]
    }
}

fn render<T: Serialize + CsvRows>(env: &Envelope<T>, format: Format, arity: usize) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(env).map_err(|e| CliError::Resource(e.to_string()))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            let res: Result<(), csv::Error> = (|| {
                w.write_record(T::header(arity))?;
                for e in &env.entries {
                    w.write_record(e.row())?;
                }
                Ok(())
            })();
            res.map_err(|e| CliError::Resource(e.to_string()))?;
            w.into_inner().map_err(|e| CliError::Resource(e.to_string()))
        }
    }
}

fn emit(bytes: &[u8], out: &Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dispatch

fn validate(r: i64, s: i64) -> Result<(), CliError> {
    if r < 2 || s < 1 || s > r - 1 {
        return Err(CliError::Usage(format!("need r >= 2 and 1 <= s <= r-1, got r = {r}, s = {s}")));
    }
    Ok(())
}

fn validate_gn(g: i64, n: usize) -> Result<(), CliError> {
    if g < 0 || n == 0 || 2 * g - 2 + n as i64 <= 0 {
        return Err(CliError::Usage(format!("(g,n) = ({g},{n}) is not stable")));
    }
    Ok(())
}

struct Session {
    eng: Engine,
    cache: Option<Cache>,
}

impl Session {
    fn open(c: &Common) -> Result<Self, CliError> {
        validate(c.r, c.s)?;
        let mut eng = Engine::new(c.r, c.s)?;
        let cache = c.cache.as_ref().map(Cache::new);
        if let Some(cache) = &cache {
            let n = cache.preload(&mut eng);
            if c.verbose {
                eprintln!("loaded {n} cached tables from {}", cache.dir().display());
            }
        }
        Ok(Session { eng, cache })
    }

    fn close(self) -> Result<(), CliError> {
        if let Some(cache) = &self.cache {
            cache.store(&self.eng)?;
        }
        Ok(())
    }
}

fn windows_json(s: i64, g: i64, n: usize) -> Value {
    json!(correlators::stable_windows(s, g, n).iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>())
}

fn run_compute(common: &Common, g: i64, n: usize) -> Result<Vec<u8>, CliError> {
    validate(common.r, common.s)?;
    validate_gn(g, n)?;
    let mut ses = Session::open(common)?;
    let recs = ses.eng.intersection_numbers(g, n)?;
    ses.close()?;
    let entries =
        recs.into_iter().map(|x| IntersectionEntry { a: x.a, k: x.k, value: to_pq(&x.value) }).collect::<Vec<_>>();
    let trunc = BTreeMap::from([
        ("wave_order".to_string(), json!(2 * g - 2 + n as i64)),
        ("windows".to_string(), windows_json(common.s, g, n)),
    ]);
    let env = Envelope { r: common.r, s: common.s, g: Some(g), n: Some(n), entries, verdicts: vec![], meta: meta("compute", trunc) };
    render(&env, common.format, n)
}

fn run_omega(common: &Common, g: i64, n: usize) -> Result<Vec<u8>, CliError> {
    validate(common.r, common.s)?;
    validate_gn(g, n)?;
    let mut ses = Session::open(common)?;
    let t = ses.eng.omega(g, n)?;
    ses.close()?;
    let entries = t.entries.iter().map(|(m, v)| OmegaEntry { m: m.clone(), value: to_pq(v) }).collect::<Vec<_>>();
    let trunc = BTreeMap::from([
        ("wave_order".to_string(), json!(2 * g - 2 + n as i64)),
        ("windows".to_string(), windows_json(common.s, g, n)),
    ]);
    let env = Envelope { r: common.r, s: common.s, g: Some(g), n: Some(n), entries, verdicts: vec![], meta: meta("omega", trunc) };
    render(&env, common.format, n)
}

fn run_zpotential(common: &Common, order: i64, vars: Option<i64>) -> Result<Vec<u8>, CliError> {
    validate(common.r, common.s)?;
    if order < 1 {
        return Err(CliError::Usage("order must be >= 1".into()));
    }
    let vars = vars.unwrap_or(common.s * order);
    let mut ses = Session::open(common)?;
    let z = integrability::assemble_with(&mut ses.eng, order, vars)?;
    ses.close()?;
    let mut entries = Vec::new();
    for (&(g, n), t) in &z.f {
        for (m, v) in t {
            entries.push(PotentialEntry { g, n, m: m.clone(), value: to_pq(v) });
        }
    }
    let trunc = BTreeMap::from([("order".to_string(), json!(order)), ("vars".to_string(), json!(vars))]);
    let env = Envelope { r: common.r, s: common.s, g: None, n: None, entries, verdicts: vec![], meta: meta("zpotential", trunc) };
    render(&env, common.format, 0)
}

fn run_table(common: &Common, gmax: i64, nmax: usize) -> Result<Vec<u8>, CliError> {
    validate(common.r, common.s)?;
    let mut ses = Session::open(common)?;
    let mut entries = Vec::new();
    for g in 0..=gmax {
        for n in 1..=nmax {
            if 2 * g - 2 + n as i64 <= 0 {
                continue;
            }
            for x in ses.eng.intersection_numbers(g, n)? {
                entries.push(TableEntry { g, n, a: x.a, k: x.k, value: to_pq(&x.value) });
            }
        }
    }
    ses.close()?;
    let trunc = BTreeMap::from([("g_max".to_string(), json!(gmax)), ("n_max".to_string(), json!(nmax))]);
    let env = Envelope { r: common.r, s: common.s, g: None, n: None, entries, verdicts: vec![], meta: meta("table", trunc) };
    render(&env, common.format, 0)
}

fn verdict(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { name: name.into(), passed, detail: detail.into() }
}

fn short<T: std::fmt::Debug>(v: &[T]) -> String {
    let head: Vec<String> = v.iter().take(3).map(|x| format!("{x:?}")).collect();
    if v.len() > 3 {
        format!("{} (+{} more)", head.join("; "), v.len() - 3)
    } else {
        head.join("; ")
    }
}

/// Identity checks behind `verify <suite>`; also used by the acceptance
/// suite.
pub fn suite_verdicts(
    suite: Suite,
    eng: &mut Engine,
    g: Option<i64>,
    n: Option<usize>,
    order: Option<i64>,
    vars: Option<i64>,
    trunc: &mut BTreeMap<String, Value>,
) -> Result<Vec<Verdict>, CliError> {
    let (r, s) = (eng.r, eng.s);
    let mut out = Vec::new();
    match suite {
        Suite::Wavefunctions => {
            let m = order.unwrap_or(6).max(1) as u32;
            let (lo, hi) = wavefunc::kernel_window(r, s);
            let table = WaveTable::build(r, s, lo - r, hi + r, m)?;
            let rep = wavefunc::check_relations(&table, m);
            out.push(verdict("derivative and multiplication relations", rep.is_empty(), format!("{} coefficients checked, k in [{lo},{hi}], m <= {m}", rep.checked)));
            let ho = (m - 1).max(1);
            trunc.insert("relation_order".into(), json!(m));
            trunc.insert("inverse_hbar_order".into(), json!(ho));
            match wavefunc::wave_matrix(r, s, ho, wavefunc::default_zwindow(r, s, ho)) {
                Ok(wm) => {
                    out.push(verdict("Psi Psi^-1 = Id", true, format!("hbar order {ho}")));
                    let d = wm.check_differential_system()?;
                    out.push(verdict("hbar Psi' = D Psi", d.is_empty(), short(&d.iter().map(|x| (x.0, x.1)).collect::<Vec<_>>())));
                    let d = wm.check_dual_system()?;
                    out.push(verdict("-hbar (Psi^-1)' = Psi^-1 D", d.is_empty(), short(&d.iter().map(|x| (x.0, x.1)).collect::<Vec<_>>())));
                }
                Err(e @ WaveError::InverseMismatch { .. }) => out.push(verdict("Psi Psi^-1 = Id", false, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        Suite::Kernels => {
            let o = order.unwrap_or(3).max(1) as u32;
            trunc.insert("order".into(), json!(o));
            let (count, bad) = kernel::compare_sum_forms(r, s, o, 12, 4)?;
            out.push(verdict("reduced kernel equals the infinite sum", bad.is_none(), match bad {
                None => format!("{count} coefficients compared"),
                Some((h, e)) => format!("mismatch at hbar^{h} z^{e:?}"),
            }));
            let table = WaveTable::for_kernel(r, s, o)?;
            let num = kernel::numerator(&table, o)?;
            out.push(verdict("leading numerator", kernel::leading_numerator_ok(&num), ""));
            let ok = correlators::omega02_check(r, s, 6)?;
            out.push(verdict("omega_{0,2} singular part", ok, "pole expansion to order 6"));
            let wm = wavefunc::wave_matrix(r, s, o + 1, wavefunc::default_zwindow(r, s, o + 1))?;
            let bad = kernel::check_diag_consistency(&wm)?;
            out.push(verdict("matrix kernel diagonal and off-diagonal entries", bad.is_empty(), short(&bad)));
            let tr = kernel::trace_residual(&wm)?;
            out.push(verdict("trace identity", tr.is_zero(), ""));
        }
        Suite::Loops => {
            let o = order.unwrap_or(4);
            trunc.insert("graded_order".into(), json!(o));
            for gg in 0..=o / 2 {
                for nn in 0..=1usize {
                    if 2 * gg + nn as i64 > o {
                        continue;
                    }
                    let rep = correlators::check_loop_equations(eng, nn, gg)?;
                    out.push(verdict(format!("pole bounds E^(k)_{{{gg},{nn}}}, k = 1..{r}"), rep.violations.is_empty(), short(&rep.violations)));
                }
            }
            let a2 = walgebra::a_constant(r, s, 2);
            if s == 1 && r > 2 {
                let closed = -q((r - 2) * r, 24 * (r - 1));
                out.push(verdict("A_2 closed form", a2 == closed, format!("A_2 = {a2}, closed form {closed}")));
            }
            if gcd(r, s) == 1 {
                let sign = if r % 2 == 1 { Q::one() } else { -Q::one() };
                let bad = correlators::strengthened_n0(eng, o / 2, sign, s - r)?;
                out.push(verdict(
                    "strengthened n = 0 identities, E^(r)_0 = (-1)^(r-1) hbar^-r x^(s-r) dx^r",
                    bad.is_empty(),
                    format!("A_2 = {a2} {}", short(&bad)).trim_end().to_string(),
                ));
            }
        }
        Suite::Wconstraints => {
            let o = order.unwrap_or(4);
            let m = vars.unwrap_or(2 * r + s);
            trunc.insert("hbar_order".into(), json!(o));
            trunc.insert("vars".into(), json!(m));
            let z = integrability::assemble_with(eng, o, m.max(s * o))?;
            let rep = walgebra::verify_w_constraints(&z, m)?;
            trunc.insert("max_k".into(), json!(rep.max_k));
            let v: Vec<String> = rep.violations.iter().map(|e| e.to_string()).collect();
            out.push(verdict(format!("H^i_k residuals ({} modes)", rep.checked.len()), v.is_empty(), short(&v)));
            for (i, got, a) in &rep.zero_modes {
                out.push(verdict(format!("zero mode H^{i}_0 = hbar^{i} A_{i}"), got == a, format!("{got} vs {a}")));
            }
            let odd: Vec<i64> = (1..=r - s).step_by(2).filter(|&i| !walgebra::a_constant(r, s, i).is_zero()).collect();
            out.push(verdict("odd A_i vanish", odd.is_empty(), format!("{odd:?}")));
            out.push(verdict("no negative hbar powers", rep.min_hbar >= 0, format!("lowest power {}", rep.min_hbar)));
        }
        Suite::String => {
            let o = order.unwrap_or(4);
            trunc.insert("order".into(), json!(o));
            trunc.insert("ic_order".into(), json!(o + 1));
            for alpha in 1..r {
                match integrability::initial_conditions(eng, alpha, o + 1) {
                    Ok(InitialCondition::Closed { d, exponent, .. }) => {
                        out.push(verdict(format!("u_{alpha} closed form"), true, format!("d_{alpha} = {d}, exponent {exponent}")))
                    }
                    Ok(InitialCondition::Polynomial { coeffs, .. }) => {
                        let ok = integrability::polynomial_support_ok(s, alpha, &coeffs);
                        let body: Vec<String> = coeffs.iter().map(|((h, p), c)| format!("{c} hbar^{h} x1^{p}")).collect();
                        out.push(verdict(format!("u_{alpha} polynomial support"), ok, body.join(" + ")));
                    }
                    Err(e @ integrability::IntegrabilityError::FormMismatch { .. }) => {
                        out.push(verdict(format!("u_{alpha} closed form"), false, e.to_string()))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if s == 1 {
                let d1 = integrability::d_alpha(eng, 1)?;
                let closed = integrability::d1_closed_form(r);
                out.push(verdict("d_1 closed form", d1 == closed, format!("{d1} vs {closed}")));
                let z = integrability::assemble_with(eng, o, o)?;
                let res = integrability::check_string_equation(&z, &d1)?;
                out.push(verdict("string equation", res.is_empty(), short(&res.iter().collect::<Vec<_>>())));
                out.push(verdict("d_1 = (r^2-1)/24 + r A_2", integrability::d1_identity_defect(r).is_zero(), ""));
                let bad = integrability::check_unit_axiom(eng, o)?;
                out.push(verdict("modified unit axiom", bad.is_empty(), short(&bad)));
            }
        }
        Suite::Routes => {
            let (g, n) = (g.unwrap_or(1), n.unwrap_or(1));
            validate_gn(g, n)?;
            let det = eng.omega(g, n)?;
            let other = if s == 1 {
                correlators::shifted_tr_with(eng, g, n)?
            } else if n == 1 {
                correlators::omega_g1_coprime_with(eng, g)?
            } else {
                return Err(CliError::Usage("for s > 1 only n = 1 has a second route".into()));
            };
            let name = if s == 1 { "determinantal vs shifted recursion" } else { "determinantal vs residue formula" };
            out.push(verdict(format!("{name}, (g,n) = ({g},{n})"), det.entries == other.entries, format!("{} coefficients", det.entries.len())));
        }
        Suite::Indexsets => {
            let bound = order.unwrap_or(100);
            trunc.insert("bound".into(), json!(bound));
            let ix = walgebra::index_sets(r, s, bound);
            let bad = ix.verify();
            let k = if ix.finite { format!("K = {:?}", ix.gaps) } else { format!("K up to {bound} = {:?}", ix.gaps) };
            out.push(verdict("image of I_{r,s} and preimage counts", bad.is_empty(), format!("{k} {}", short(&bad)).trim_end().to_string()));
            let defects = ix.multiplicity_defects();
            if !defects.is_empty() {
                out.push(verdict("values with fewer than gcd(r,s) preimages (informational)", true, format!("{defects:?}")));
            }
        }
        Suite::Reconstruct => {
            let o = order.unwrap_or(2);
            trunc.insert("order".into(), json!(o));
            let full = integrability::assemble_with(eng, o, s * o)?;
            let ix = walgebra::index_sets(r, s, s * o);
            let reduced = full.restrict(&ix.gaps);
            let rec = walgebra::reconstruct_potential(r, s, &reduced, o)?;
            let strip = |z: &walgebra::PotentialTrunc| z.f.iter().filter(|(_, t)| !t.is_empty()).map(|(k, t)| (*k, t.clone())).collect::<Vec<_>>();
            let n_red: usize = reduced.f.values().map(|t| t.len()).sum();
            out.push(verdict(
                "reconstruction from the reduced potential",
                strip(&rec) == strip(&full),
                format!("K = {:?}, {n_red} reduced coefficients", ix.gaps),
            ));
        }
    }
    Ok(out)
}

fn run_verify(
    suite: Suite,
    common: &Common,
    g: Option<i64>,
    n: Option<usize>,
    order: Option<i64>,
    vars: Option<i64>,
) -> Result<(Vec<u8>, bool), CliError> {
    validate(common.r, common.s)?;
    if suite == Suite::Routes && common.s > 1 && gcd(common.r, common.s) != 1 {
        return Err(CliError::Usage(format!("({},{}) is not coprime", common.r, common.s)));
    }
    let mut ses = Session::open(common)?;
    let mut trunc = BTreeMap::new();
    let verdicts = suite_verdicts(suite, &mut ses.eng, g, n, order, vars, &mut trunc)?;
    ses.close()?;
    let passed = verdicts.iter().all(|v| v.passed);
    let name = format!("verify {}", suite.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    let env = Envelope { r: common.r, s: common.s, g, n, entries: verdicts.clone(), verdicts, meta: meta(&name, trunc) };
    Ok((render(&env, common.format, 0)?, passed))
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Compute { common, g, n } => emit(&run_compute(common, *g, *n)?, &common.out),
        Command::Omega { common, g, n } => emit(&run_omega(common, *g, *n)?, &common.out),
        Command::Zpotential { common, order, vars } => emit(&run_zpotential(common, *order, *vars)?, &common.out),
        Command::Table { common, g, n } => emit(&run_table(common, *g, *n)?, &common.out),
        Command::Verify { suite, common, g, n, order, vars } => {
            let (bytes, passed) = run_verify(*suite, common, *g, *n, *order, *vars)?;
            emit(&bytes, &common.out)?;
            if passed {
                Ok(())
            } else {
                Err(CliError::Failed("identity check failed".into()))
            }
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Failed(m) | CliError::Resource(m) => m,
            };
            eprintln!("error: {msg}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let env = Envelope {
            r: 2,
            s: 1,
            g: Some(1),
            n: Some(1),
            entries: vec![IntersectionEntry { a: vec![1], k: vec![0], value: "1/8".into() }],
            verdicts: vec![],
            meta: meta("compute", BTreeMap::from([("wave_order".to_string(), json!(1))])),
        };
        let text = String::from_utf8(render(&env, Format::Json, 1).unwrap()).unwrap();
        let back: Envelope<IntersectionEntry> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, env);
        let csv = String::from_utf8(render(&env, Format::Csv, 1).unwrap()).unwrap();
        assert_eq!(csv, "a_1,k_1,value\n1,0,1/8\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["thetars", "compute", "--r", "1", "--s", "1", "--g", "1", "--n", "1"]), 2);
        assert_eq!(run(["thetars", "compute", "--r", "2", "--s", "1", "--g", "0", "--n", "2"]), 2);
        assert_eq!(run(["thetars", "bogus"]), 2);
    }
}
