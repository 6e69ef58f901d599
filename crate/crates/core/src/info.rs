//! Entropic quantities, information-spectrum divergences and rate-region
//! predicates for the two-sender task.
//!
//! Task instances are joint distributions over the five variables named by
//! [`X`], [`Y`], [`Z`], [`M`], [`N`]: Alice holds `X` and must convey `M`,
//! Bob holds `Y` and must convey `N`, Charlie holds `Z`.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::dist::{tuples, JointDist};
use crate::error::{Error, Result};
use crate::numeric::{self, le_scaled_pow2, one, rat, to_f64, zero, Prob};

pub const X: &str = "X";
pub const Y: &str = "Y";
pub const Z: &str = "Z";
pub const M: &str = "M";
pub const N: &str = "N";

/// Shannon entropy in bits of the marginal on `vars`.
pub fn entropy(d: &JointDist, vars: &[&str]) -> Result<f64> {
    if vars.is_empty() {
        return Ok(0.0);
    }
    let m = d.marginal(vars)?;
    Ok(m
        .probs()
        .iter()
        .filter(|p| !p.is_zero())
        .map(|p| {
            let f = to_f64(p);
            -f * numeric::log2(p)
        })
        .sum::<f64>()
        .max(0.0))
}

fn joined<'a>(a: &[&'a str], b: &[&'a str]) -> Vec<&'a str> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

fn check_disjoint(groups: &[&[&str]]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for g in groups {
        for n in *g {
            if !seen.insert(*n) {
                return Err(Error::OverlappingGroups(n.to_string()));
            }
        }
    }
    Ok(())
}

/// `H(vars | given)` in bits.
pub fn cond_entropy(d: &JointDist, vars: &[&str], given: &[&str]) -> Result<f64> {
    check_disjoint(&[vars, given])?;
    Ok((entropy(d, &joined(vars, given))? - entropy(d, given)?).max(0.0))
}

/// `I(a ; b | c)` in bits.
pub fn cond_mutual_info(d: &JointDist, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64> {
    check_disjoint(&[a, b, c])?;
    let v = entropy(d, &joined(a, c))? + entropy(d, &joined(b, c))?
        - entropy(d, &joined(&joined(a, b), c))?
        - entropy(d, c)?;
    Ok(v.max(0.0))
}

/// A pair of distributions on the same schema and a smoothing parameter.
#[derive(Debug, Clone)]
pub struct SpectrumQuery {
    pub num: JointDist,
    pub den: JointDist,
    pub epsilon: Prob,
}

impl SpectrumQuery {
    pub fn new(num: JointDist, den: JointDist, epsilon: Prob) -> Result<Self> {
        num.check_same_schema(&den)?;
        if epsilon < zero() || epsilon > one() {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside [0,1]",
                numeric::format_rational(&epsilon)
            )));
        }
        Ok(SpectrumQuery { num, den, epsilon })
    }

    /// Distinct likelihood ratios `num/den` on the support of `num`, sorted
    /// increasingly, with their `num`-mass. `None` stands for an infinite
    /// ratio (mass where `den` vanishes) and sorts last.
    pub fn breakpoints(&self) -> Vec<(Option<Prob>, Prob)> {
        let mut acc: BTreeMap<Option<Prob>, Prob> = BTreeMap::new();
        let mut inf = zero();
        for (p, q) in self.num.probs().iter().zip(self.den.probs()) {
            if p.is_zero() {
                continue;
            }
            if q.is_zero() {
                inf += p;
            } else {
                *acc.entry(Some(p / q)).or_insert_with(zero) += p;
            }
        }
        let mut out: Vec<(Option<Prob>, Prob)> = acc.into_iter().collect();
        if !inf.is_zero() {
            out.push((None, inf));
        }
        out
    }
}

fn log_of(r: &Option<Prob>) -> f64 {
    match r {
        Some(q) => numeric::log2(q),
        None => f64::INFINITY,
    }
}

/// Max information-spectrum divergence: the smallest breakpoint `a` whose
/// strict upper tail `Pr[ratio > 2^a]` is at most `epsilon`.
pub fn d_s(q: &SpectrumQuery) -> f64 {
    let bps = q.breakpoints();
    let total: Prob = bps.iter().map(|(_, p)| p.clone()).sum();
    let mut below = zero();
    for (r, p) in &bps {
        below += p;
        let tail = &total - &below;
        if tail <= q.epsilon {
            return log_of(r);
        }
    }
    f64::NEG_INFINITY
}

/// Hypothesis-testing spectrum divergence: the largest breakpoint `a` with
/// `Pr[ratio >= 2^a] >= 1 - epsilon`. With `epsilon = 1` the constraint is
/// empty and the value is `+inf`.
pub fn d_h(q: &SpectrumQuery) -> f64 {
    if q.epsilon >= one() {
        return f64::INFINITY;
    }
    let bps = q.breakpoints();
    let target = one() - &q.epsilon;
    let mut tail: Prob = bps.iter().map(|(_, p)| p.clone()).sum();
    let mut best = f64::NEG_INFINITY;
    for (r, p) in &bps {
        if tail >= target {
            best = log_of(r);
        }
        tail -= p;
    }
    best
}

/// Conditional probability lookups needed by the rate predicates, built
/// once per task instance.
#[derive(Debug, Clone)]
pub struct TaskTables {
    pub sizes: [usize; 5],
    /// `p(m|x)` indexed `[x][m]`.
    pub m_given_x: Vec<Vec<Prob>>,
    /// `p(n|y)` indexed `[y][n]`.
    pub n_given_y: Vec<Vec<Prob>>,
    /// `p(m|n,z)` indexed `[(n, z)][m]`; `None` when `p(n,z) = 0`.
    pub m_given_nz: HashMap<(usize, usize), Vec<Prob>>,
    /// `p(n|m,z)` indexed `[(m, z)][n]`.
    pub n_given_mz: HashMap<(usize, usize), Vec<Prob>>,
    /// `p(m,n|z)` indexed `[z][(m, n)]`.
    pub mn_given_z: Vec<Option<Vec<Prob>>>,
    pub m_card: usize,
    pub n_card: usize,
}

/// Index of the five task variables in a distribution's schema.
pub fn task_indices(d: &JointDist) -> Result<[usize; 5]> {
    let ix = d.indices_of(&[X, Y, Z, M, N])?;
    if d.vars().len() != 5 {
        return Err(Error::SchemaMismatch(format!(
            "task instance must have exactly X, Y, Z, M, N; got {:?}",
            d.names()
        )));
    }
    Ok([ix[0], ix[1], ix[2], ix[3], ix[4]])
}

/// Checks `M - X - YZN` and `N - Y - XZM`.
pub fn check_markov(d: &JointDist) -> Result<()> {
    task_indices(d)?;
    if !d.is_markov(&[M], &[X], &[Y, Z, N])? {
        return Err(Error::MarkovViolation("M - X - YZN".into()));
    }
    if !d.is_markov(&[N], &[Y], &[X, Z, M])? {
        return Err(Error::MarkovViolation("N - Y - XZM".into()));
    }
    Ok(())
}

/// Reorders a task instance into the canonical `X, Y, Z, M, N` layout.
pub fn canonical(d: &JointDist) -> Result<JointDist> {
    task_indices(d)?;
    d.reorder(&[X, Y, Z, M, N])
}

fn normalize_row(row: &mut [Prob]) -> bool {
    let s: Prob = row.iter().sum();
    if s.is_zero() {
        return false;
    }
    for v in row.iter_mut() {
        *v = &*v / &s;
    }
    true
}

impl TaskTables {
    pub fn build(d: &JointDist) -> Result<Self> {
        let d = canonical(d)?;
        let s = d.sizes();
        let sizes = [s[0], s[1], s[2], s[3], s[4]];
        let [sx, sy, sz, sm, sn] = sizes;
        let mut xm = vec![vec![zero(); sm]; sx];
        let mut yn = vec![vec![zero(); sn]; sy];
        let mut nzm: HashMap<(usize, usize), Vec<Prob>> = HashMap::new();
        let mut mzn: HashMap<(usize, usize), Vec<Prob>> = HashMap::new();
        let mut zmn: Vec<Vec<Prob>> = vec![vec![zero(); sm * sn]; sz];
        for (t, p) in d.support() {
            let (x, y, z, m, n) = (t[0], t[1], t[2], t[3], t[4]);
            xm[x][m] += p;
            yn[y][n] += p;
            nzm.entry((n, z)).or_insert_with(|| vec![zero(); sm])[m] += p;
            mzn.entry((m, z)).or_insert_with(|| vec![zero(); sn])[n] += p;
            zmn[z][m * sn + n] += p;
        }
        for row in xm.iter_mut().chain(yn.iter_mut()) {
            normalize_row(row);
        }
        for row in nzm.values_mut().chain(mzn.values_mut()) {
            normalize_row(row);
        }
        let mn_given_z = zmn
            .into_iter()
            .map(|mut row| if normalize_row(&mut row) { Some(row) } else { None })
            .collect();
        Ok(TaskTables {
            sizes,
            m_given_x: xm,
            n_given_y: yn,
            m_given_nz: nzm,
            n_given_mz: mzn,
            mn_given_z,
            m_card: sm,
            n_card: sn,
        })
    }

    /// `(p(m|x), p(m|n,z), p(n|y), p(n|m,z), p(m,n|z))` at a point of the
    /// support.
    pub fn ratios_at(&self, x: usize, y: usize, z: usize, m: usize, n: usize) -> RatioTerms {
        let get = |h: &HashMap<(usize, usize), Vec<Prob>>, k: (usize, usize), i: usize| {
            h.get(&k).map(|r| r[i].clone()).unwrap_or_else(zero)
        };
        RatioTerms {
            m_given_x: self.m_given_x[x][m].clone(),
            m_given_nz: get(&self.m_given_nz, (n, z), m),
            n_given_y: self.n_given_y[y][n].clone(),
            n_given_mz: get(&self.n_given_mz, (m, z), n),
            mn_given_z: self.mn_given_z[z]
                .as_ref()
                .map(|r| r[m * self.n_card + n].clone())
                .unwrap_or_else(zero),
        }
    }

    pub fn max_card(&self) -> usize {
        self.m_card.max(self.n_card)
    }
}

#[derive(Debug, Clone)]
pub struct RatioTerms {
    pub m_given_x: Prob,
    pub m_given_nz: Prob,
    pub n_given_y: Prob,
    pub n_given_mz: Prob,
    pub mn_given_z: Prob,
}

/// One side of a ratio threshold: `lhs <= coef * 2^exp`.
#[derive(Debug, Clone)]
pub struct Bound {
    pub coef: Prob,
    pub exp: f64,
}

impl Bound {
    pub fn new(coef: Prob, exp: f64) -> Self {
        Bound { coef, exp }
    }

    /// `coef * 2^exp / divisor`, kept exact when `divisor` is an integer.
    pub fn divided(coef: Prob, exp: f64, divisor: f64) -> Self {
        if divisor.fract() == 0.0 && divisor > 0.0 && divisor < 1e15 {
            Bound::new(coef / numeric::int(divisor as i64), exp)
        } else {
            Bound::new(coef, exp - divisor.log2())
        }
    }

    /// Decides `num <= den * coef * 2^exp`.
    pub fn admits(&self, num: &Prob, den: &Prob) -> bool {
        le_scaled_pow2(num, &(den * &self.coef), self.exp)
    }

    pub fn log2(&self) -> f64 {
        numeric::log2(&self.coef) + self.exp
    }
}

/// The three ratio conditions defining the rate event:
///
/// * `p(m|x) / p(m|n,z) <= first`
/// * `p(n|y) / p(n|m,z) <= second`
/// * `p(m|x) p(n|y) / p(m,n|z) <= joint`
#[derive(Debug, Clone)]
pub struct RateEvent {
    pub first: Bound,
    pub second: Bound,
    pub joint: Bound,
}

/// Number of `delta` factors in the joint condition by default.
pub const DEFAULT_JOINT_POWER: u32 = 4;

/// `log2(max(|M|,|N|) / delta)`, the size-dependent divisor of the joint
/// condition.
pub fn dev(max_card: usize, delta: &Prob) -> f64 {
    numeric::log2(&(numeric::int(max_card as i64) / delta))
}

impl RateEvent {
    /// The achievability event with thresholds `delta 2^R1`, `delta 2^R2`
    /// and `delta^power 2^(R1+R2) / dev`.
    pub fn achievability(r1: f64, r2: f64, delta: &Prob, max_card: usize, power: u32) -> Self {
        let dpow = num_traits::pow(delta.clone(), power as usize);
        RateEvent {
            first: Bound::new(delta.clone(), r1),
            second: Bound::new(delta.clone(), r2),
            joint: Bound::divided(dpow, r1 + r2, dev(max_card, delta)),
        }
    }

    /// The event implied by the comparison region, with constants
    /// `(delta/3)^4` and `(delta/3)^6`.
    pub fn comparison(r1: f64, r2: f64, delta: &Prob) -> Self {
        let d3 = delta / numeric::int(3);
        RateEvent {
            first: Bound::new(num_traits::pow(d3.clone(), 4), r1),
            second: Bound::new(num_traits::pow(d3.clone(), 4), r2),
            joint: Bound::new(num_traits::pow(d3, 6), r1 + r2),
        }
    }

    pub fn holds(&self, t: &RatioTerms) -> bool {
        if t.m_given_nz.is_zero() || t.n_given_mz.is_zero() || t.mn_given_z.is_zero() {
            return false;
        }
        self.first.admits(&t.m_given_x, &t.m_given_nz)
            && self.second.admits(&t.n_given_y, &t.n_given_mz)
            && self
                .joint
                .admits(&(&t.m_given_x * &t.n_given_y), &t.mn_given_z)
    }

    /// Exact probability of the event under `d`.
    pub fn mass(&self, d: &JointDist, tables: &TaskTables) -> Result<Prob> {
        let d = canonical(d)?;
        let mut acc = zero();
        for (t, p) in d.support() {
            if self.holds(&tables.ratios_at(t[0], t[1], t[2], t[3], t[4])) {
                acc += p;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Oneshot,
    Cmi,
    Comparison,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionReport {
    pub region_kind: RegionKind,
    pub r1: f64,
    pub r2: f64,
    #[serde(with = "numeric::serde_rational")]
    pub good_mass: Prob,
    pub good_mass_f64: f64,
    pub satisfied: bool,
    /// Named thresholds the rates are compared against.
    pub thresholds: BTreeMap<String, f64>,
    /// Named additive corrections.
    pub slack_terms: BTreeMap<String, f64>,
}

fn check_delta(delta: &Prob) -> Result<()> {
    if *delta <= zero() || *delta >= one() {
        return Err(Error::InvalidParameter("delta must lie in (0,1)".into()));
    }
    Ok(())
}

/// Exact mass of the achievability event for the given rates;
/// `satisfied` compares it against `1 - epsilon`.
pub fn region_oneshot(
    d: &JointDist,
    r1: f64,
    r2: f64,
    delta: &Prob,
    epsilon: &Prob,
) -> Result<RegionReport> {
    region_oneshot_with(d, r1, r2, delta, epsilon, DEFAULT_JOINT_POWER)
}

pub fn region_oneshot_with(
    d: &JointDist,
    r1: f64,
    r2: f64,
    delta: &Prob,
    epsilon: &Prob,
    power: u32,
) -> Result<RegionReport> {
    check_delta(delta)?;
    check_markov(d)?;
    let tables = TaskTables::build(d)?;
    let ev = RateEvent::achievability(r1, r2, delta, tables.max_card(), power);
    let good = ev.mass(d, &tables)?;
    let dv = dev(tables.max_card(), delta);
    let mut slack = BTreeMap::new();
    slack.insert("log_delta".into(), numeric::log2(delta));
    slack.insert("joint_delta_power".into(), power as f64 * numeric::log2(delta));
    slack.insert("log_log_max_card_over_delta".into(), dv.log2());
    slack.insert("message_overhead_3log_inv_delta".into(), -3.0 * numeric::log2(delta));
    let mut th = BTreeMap::new();
    th.insert("first_log2".into(), ev.first.log2());
    th.insert("second_log2".into(), ev.second.log2());
    th.insert("joint_log2".into(), ev.joint.log2());
    Ok(RegionReport {
        region_kind: RegionKind::Oneshot,
        r1,
        r2,
        good_mass_f64: to_f64(&good),
        satisfied: good >= one() - epsilon,
        good_mass: good,
        thresholds: th,
        slack_terms: slack,
    })
}

/// The three conditional mutual informations bounding the asymptotic region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CmiThresholds {
    pub i_x_m_given_nz: f64,
    pub i_y_n_given_mz: f64,
    pub i_xy_mn_given_z: f64,
}

pub fn cmi_thresholds(d: &JointDist) -> Result<CmiThresholds> {
    task_indices(d)?;
    Ok(CmiThresholds {
        i_x_m_given_nz: cond_mutual_info(d, &[X], &[M], &[N, Z])?,
        i_y_n_given_mz: cond_mutual_info(d, &[Y], &[N], &[M, Z])?,
        i_xy_mn_given_z: cond_mutual_info(d, &[X, Y], &[M, N], &[Z])?,
    })
}

/// One-shot rate that achieves error `delta` from an asymptotic rate `r`:
/// `16 r / delta^2 + 10 / delta + log log (max(|M|,|N|) / delta)`.
pub fn inflated_rate(r: f64, delta: f64, max_card: usize) -> f64 {
    16.0 * r / (delta * delta) + 10.0 / delta + (max_card as f64 / delta).log2().log2()
}

/// Masses of the three single-ratio events at the Markov-inequality
/// thresholds `2^((R/d + 1)/d)`. Each is at least `1 - 2d` whenever the
/// matching conditional mutual information is at most `R`.
pub fn substate_masses(d: &JointDist, r1: f64, r2: f64, dprime: f64) -> Result<[f64; 3]> {
    let tables = TaskTables::build(d)?;
    let d = canonical(d)?;
    let e = |r: f64| (r / dprime + 1.0) / dprime;
    let b = [
        Bound::new(one(), e(r1)),
        Bound::new(one(), e(r2)),
        Bound::new(one(), e(r1 + r2)),
    ];
    let mut acc = [0.0; 3];
    for (t, p) in d.support() {
        let rt = tables.ratios_at(t[0], t[1], t[2], t[3], t[4]);
        let pf = to_f64(p);
        if b[0].admits(&rt.m_given_x, &rt.m_given_nz) {
            acc[0] += pf;
        }
        if b[1].admits(&rt.n_given_y, &rt.n_given_mz) {
            acc[1] += pf;
        }
        if b[2].admits(&(&rt.m_given_x * &rt.n_given_y), &rt.mn_given_z) {
            acc[2] += pf;
        }
    }
    Ok(acc)
}

const RATE_TOL: f64 = 1e-12;

/// Compares the rates against the conditional mutual informations and
/// reports the one-shot rates that achieve error `delta`. `good_mass` is the
/// exact probability that all three substate events hold at `delta`.
pub fn region_cmi(d: &JointDist, r1: f64, r2: f64, delta: &Prob) -> Result<RegionReport> {
    check_delta(delta)?;
    check_markov(d)?;
    let th = cmi_thresholds(d)?;
    let tables = TaskTables::build(d)?;
    let df = to_f64(delta);
    let e = |r: f64| (r / df + 1.0) / df;
    let ev = RateEvent {
        first: Bound::new(one(), e(r1)),
        second: Bound::new(one(), e(r2)),
        joint: Bound::new(one(), e(r1 + r2)),
    };
    let good = ev.mass(d, &tables)?;
    let satisfied = r1 + RATE_TOL >= th.i_x_m_given_nz
        && r2 + RATE_TOL >= th.i_y_n_given_mz
        && r1 + r2 + RATE_TOL >= th.i_xy_mn_given_z;
    let mut thresholds = BTreeMap::new();
    thresholds.insert("i_x_m_given_nz".into(), th.i_x_m_given_nz);
    thresholds.insert("i_y_n_given_mz".into(), th.i_y_n_given_mz);
    thresholds.insert("i_xy_mn_given_z".into(), th.i_xy_mn_given_z);
    let mc = tables.max_card();
    let mut slack = BTreeMap::new();
    slack.insert("inflated_r1".into(), inflated_rate(r1, df, mc));
    slack.insert("inflated_r2".into(), inflated_rate(r2, df, mc));
    slack.insert("ten_over_delta".into(), 10.0 / df);
    slack.insert("log_log_max_card_over_delta".into(), (mc as f64 / df).log2().log2());
    Ok(RegionReport {
        region_kind: RegionKind::Cmi,
        r1,
        r2,
        good_mass_f64: to_f64(&good),
        good_mass: good,
        satisfied,
        thresholds,
        slack_terms: slack,
    })
}

/// The five spectrum quantities of the comparison region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonTerms {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
}

fn single(d: &JointDist, name: &str) -> Result<JointDist> {
    if d.vars().len() != 1 {
        return Err(Error::SchemaMismatch(
            "auxiliary distribution must have one variable".into(),
        ));
    }
    d.rename(d.vars()[0].name.clone().as_str(), name)
}

pub fn comparison_terms(
    d: &JointDist,
    s: &JointDist,
    t: &JointDist,
    eps: [&Prob; 3],
    delta: &Prob,
) -> Result<ComparisonTerms> {
    task_indices(d)?;
    let s = single(s, M)?;
    let t = single(t, N)?;
    if s.size_of(M)? != d.size_of(M)? || t.size_of(N)? != d.size_of(N)? {
        return Err(Error::SchemaMismatch("auxiliary alphabet sizes differ".into()));
    }
    let q = |num: JointDist, den: JointDist, e: &Prob| SpectrumQuery::new(num, den, e.clone());
    let xm = d.marginal(&[X, M])?;
    let k1 = d_s(&q(xm, d.marginal(&[X])?.product(&s)?, delta)?);
    let mnz = d.marginal(&[M, N, Z])?;
    let k2 = d_h(&q(mnz.clone(), s.product(&d.marginal(&[N, Z])?)?, eps[0])?);
    let yn = d.marginal(&[Y, N])?;
    let k3 = d_s(&q(yn, d.marginal(&[Y])?.product(&t)?, delta)?);
    let mzn = d.marginal(&[M, Z, N])?;
    let k4 = d_h(&q(mzn, d.marginal(&[M, Z])?.product(&t)?, eps[1])?);
    let stz = s.product(&t)?.product(&d.marginal(&[Z])?)?;
    let k5 = d_h(&q(mnz, stz.reorder(&[M, N, Z])?, eps[2])?);
    Ok(ComparisonTerms { k1, k2, k3, k4, k5 })
}

/// Checks the rates against the comparison region and evaluates the event it
/// implies. `satisfied` reports membership in the comparison region;
/// `slack_terms["target"]` is `1 - eps1 - eps2 - eps3 - 2 delta`.
#[allow(clippy::too_many_arguments)]
pub fn region_compare(
    d: &JointDist,
    s: &JointDist,
    t: &JointDist,
    eps1: &Prob,
    eps2: &Prob,
    eps3: &Prob,
    delta: &Prob,
    r1: f64,
    r2: f64,
) -> Result<RegionReport> {
    check_delta(delta)?;
    let k = comparison_terms(d, s, t, [eps1, eps2, eps3], delta)?;
    let l3 = numeric::log2(&(numeric::int(3) / delta));
    let need1 = k.k1 - k.k2 + 4.0 * l3;
    let need2 = k.k3 - k.k4 + 4.0 * l3;
    let need12 = k.k1 + k.k3 - k.k5 + 6.0 * l3;
    let ge = |r: f64, need: f64| if need.is_nan() { false } else { r + RATE_TOL >= need };
    let satisfied = ge(r1, need1) && ge(r2, need2) && ge(r1 + r2, need12);
    let tables = TaskTables::build(d)?;
    let good = RateEvent::comparison(r1, r2, delta).mass(d, &tables)?;
    let target = one() - eps1 - eps2 - eps3 - numeric::int(2) * delta;
    let mut thresholds = BTreeMap::new();
    for (name, v) in [
        ("k1", k.k1),
        ("k2", k.k2),
        ("k3", k.k3),
        ("k4", k.k4),
        ("k5", k.k5),
        ("r1_min", need1),
        ("r2_min", need2),
        ("sum_min", need12),
    ] {
        thresholds.insert(name.into(), v);
    }
    let mut slack = BTreeMap::new();
    slack.insert("four_log_3_over_delta".into(), 4.0 * l3);
    slack.insert("six_log_3_over_delta".into(), 6.0 * l3);
    slack.insert("target".into(), to_f64(&target));
    Ok(RegionReport {
        region_kind: RegionKind::Comparison,
        r1,
        r2,
        good_mass_f64: to_f64(&good),
        good_mass: good,
        satisfied,
        thresholds,
        slack_terms: slack,
    })
}

/// `1 - eps1 - eps2 - eps3 - 2 delta`.
pub fn comparison_target(eps: [&Prob; 3], delta: &Prob) -> Prob {
    one() - eps[0] - eps[1] - eps[2] - numeric::int(2) * delta
}

/// Smallest rates on the grid `step * k` (with `r1 == r2` when `symmetric`)
/// whose achievability event has mass at least `1 - epsilon`.
pub fn minimal_symmetric_rate(
    d: &JointDist,
    delta: &Prob,
    epsilon: &Prob,
    step: f64,
    max_rate: f64,
) -> Result<Option<f64>> {
    check_markov(d)?;
    let tables = TaskTables::build(d)?;
    let mut r = 0.0;
    while r <= max_rate {
        let ev = RateEvent::achievability(r, r, delta, tables.max_card(), DEFAULT_JOINT_POWER);
        if ev.mass(d, &tables)? >= one() - epsilon {
            return Ok(Some(r));
        }
        r += step;
    }
    Ok(None)
}

/// Relabels the symbols of one variable by a permutation.
pub fn relabel(d: &JointDist, var: &str, perm: &[usize]) -> Result<JointDist> {
    let n = d.size_of(var)?;
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        seen[p] = true;
    }
    d.pushforward(var, perm, n)
}

/// Uniform distribution on one variable.
pub fn uniform_on(name: &str, size: usize) -> JointDist {
    JointDist::uniform(vec![crate::dist::Var::new(name, size)]).expect("nonempty")
}

/// Probability that `ratio(t) <= 2^a` summed over a distribution, where
/// `ratio` is supplied in exact form; used by tests as a direct oracle.
pub fn mass_ratio_at_most(d: &JointDist, a: f64, ratio: impl Fn(&[usize]) -> Option<Prob>) -> Prob {
    let sizes = d.sizes();
    tuples(&sizes)
        .filter_map(|t| {
            let p = d.prob(&t);
            if p.is_zero() {
                return None;
            }
            match ratio(&t) {
                Some(r) if le_scaled_pow2(&r, &Prob::one(), a) => Some(p.clone()),
                _ => None,
            }
        })
        .sum()
}

/// `1/k` as a rational.
pub fn inv(k: i64) -> Prob {
    rat(1, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Var;
    use crate::numeric::{int, rat};

    fn point(name: &str, size: usize, at: usize) -> JointDist {
        JointDist::point_mass(vec![Var::new(name, size)], &[at]).unwrap()
    }

    /// Builds an instance from p(x,y,z) and kernels p(m|x), p(n|y).
    fn instance(
        xyz: &JointDist,
        sm: usize,
        km: impl Fn(usize) -> Vec<Prob>,
        sn: usize,
        kn: impl Fn(usize) -> Vec<Prob>,
    ) -> JointDist {
        xyz.extend(M, sm, |t| km(t[0]))
            .unwrap()
            .extend(N, sn, |t| kn(t[1]))
            .unwrap()
    }

    #[test]
    fn entropy_examples() {
        let u = uniform_on("X", 8);
        assert!((entropy(&u, &["X"]).unwrap() - 3.0).abs() < 1e-12);
        let xm = uniform_on("X", 3).product(&uniform_on("M", 5)).unwrap();
        assert!(cond_mutual_info(&xm, &["X"], &["M"], &[]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn d_s_examples() {
        let u = uniform_on("X", 8);
        for e in [rat(0, 1), rat(1, 3), rat(99, 100)] {
            let q = SpectrumQuery::new(u.clone(), u.clone(), e).unwrap();
            assert_eq!(d_s(&q), 0.0);
            assert_eq!(d_h(&q), 0.0);
        }
        let q = SpectrumQuery::new(point("X", 8, 2), u.clone(), rat(1, 2)).unwrap();
        assert!((d_s(&q) - 3.0).abs() < 1e-12);
        let q = SpectrumQuery::new(u.clone(), point("X", 8, 2), rat(1, 2)).unwrap();
        assert_eq!(d_s(&q), f64::INFINITY);
        // epsilon = 1 returns the smallest breakpoint
        let two = JointDist::new(vec![Var::new("X", 2)], vec![rat(3, 4), rat(1, 4)]).unwrap();
        let q = SpectrumQuery::new(two, uniform_on("X", 2), one()).unwrap();
        assert!((d_s(&q) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn d_h_two_point() {
        // num (1-e', e') vs uniform: ratios 2(1-e') and 2e'
        let ep = rat(1, 10);
        let num = JointDist::new(vec![Var::new("X", 2)], vec![one() - &ep, ep.clone()]).unwrap();
        let q = SpectrumQuery::new(num.clone(), uniform_on("X", 2), rat(1, 5)).unwrap();
        assert!((d_h(&q) - (1.8f64).log2()).abs() < 1e-12);
        let q = SpectrumQuery::new(num, uniform_on("X", 2), rat(1, 20)).unwrap();
        assert!((d_h(&q) - (0.2f64).log2()).abs() < 1e-12);
    }

    fn trivial_xyz(sx: usize, sy: usize) -> JointDist {
        uniform_on(X, sx)
            .product(&uniform_on(Y, sy))
            .unwrap()
            .product(&uniform_on(Z, 1))
            .unwrap()
    }

    #[test]
    fn constants_always_satisfy() {
        let d = instance(&trivial_xyz(2, 3), 1, |_| vec![one()], 1, |_| vec![one()]);
        // the joint condition needs 2^(R1+R2) >= dev / delta^4
        let r = region_oneshot(&d, 7.0, 7.0, &rat(1, 4), &rat(0, 1)).unwrap();
        assert_eq!(r.good_mass, one());
        assert!(r.satisfied);
    }

    #[test]
    fn zero_rates_fail_on_nontrivial_m() {
        let d = instance(
            &trivial_xyz(2, 2),
            2,
            |x| if x == 0 { vec![one(), zero()] } else { vec![zero(), one()] },
            1,
            |_| vec![one()],
        );
        let r = region_oneshot(&d, 0.0, 0.0, &rat(1, 4), &rat(1, 20)).unwrap();
        assert!(r.good_mass < one());
        assert!(!r.satisfied);
    }

    #[test]
    fn dsc_event_matches_direct_enumeration() {
        // M = X, N = Y, Z trivial: conditions become 1/p(x|y), 1/p(y|x), 1/p(x,y)
        let xy = JointDist::new(
            vec![Var::new(X, 2), Var::new(Y, 2)],
            vec![rat(3, 8), rat(1, 8), rat(1, 8), rat(3, 8)],
        )
        .unwrap();
        let xyz = xy.product(&uniform_on(Z, 1)).unwrap();
        let id = |k: usize| move |a: usize| (0..k).map(|b| if a == b { one() } else { zero() }).collect::<Vec<_>>();
        let d = instance(&xyz, 2, id(2), 2, id(2));
        let delta = rat(1, 4);
        for (r1, r2) in [(2.0, 2.0), (3.0, 4.0), (5.0, 5.0), (6.0, 7.0)] {
            let rep = region_oneshot(&d, r1, r2, &delta, &zero()).unwrap();
            let dv = dev(2, &delta);
            let mut direct = zero();
            for (t, p) in xy.support() {
                let pxy = p.clone();
                let px_y = &pxy / xy.marginal(&[Y]).unwrap().prob(&[t[1]]);
                let py_x = &pxy / xy.marginal(&[X]).unwrap().prob(&[t[0]]);
                let a = numeric::log2(&(one() / (&px_y * &delta))) <= r1 + 1e-12;
                let b = numeric::log2(&(one() / (&py_x * &delta))) <= r2 + 1e-12;
                let c = -numeric::log2(&pxy) - 4.0 * numeric::log2(&delta) + dv.log2() <= r1 + r2 + 1e-12;
                if a && b && c {
                    direct += pxy;
                }
            }
            assert_eq!(rep.good_mass, direct, "rates {r1},{r2}");
        }
    }

    #[test]
    fn cmi_examples() {
        let d = instance(&trivial_xyz(2, 2), 2, |_| vec![rat(1, 3), rat(2, 3)], 2, |_| vec![rat(1, 2), rat(1, 2)]);
        let th = cmi_thresholds(&d).unwrap();
        assert!(th.i_x_m_given_nz.abs() < 1e-12);
        assert!(th.i_xy_mn_given_z.abs() < 1e-12);
        let xyz = uniform_on(X, 4).product(&uniform_on(Y, 1)).unwrap().product(&uniform_on(Z, 1)).unwrap();
        let d = instance(&xyz, 4, |x| (0..4).map(|m| if m == x { one() } else { zero() }).collect(), 1, |_| vec![one()]);
        let th = cmi_thresholds(&d).unwrap();
        assert!((th.i_x_m_given_nz - 2.0).abs() < 1e-12);
        assert!(th.i_y_n_given_mz.abs() < 1e-12);
        assert!((th.i_xy_mn_given_z - 2.0).abs() < 1e-12);
        let rep = region_cmi(&d, 2.0, 0.0, &rat(1, 4)).unwrap();
        assert!(rep.satisfied);
        assert!(!region_cmi(&d, 1.5, 0.0, &rat(1, 4)).unwrap().satisfied);
    }

    #[test]
    fn markov_violation_is_reported() {
        // M copies Y instead of X
        let xyz = uniform_on(X, 2).product(&uniform_on(Y, 2)).unwrap().product(&uniform_on(Z, 1)).unwrap();
        let d = xyz
            .extend(M, 2, |t| if t[1] == 0 { vec![one(), zero()] } else { vec![zero(), one()] })
            .unwrap()
            .extend(N, 1, |_| vec![one()])
            .unwrap();
        assert!(matches!(
            region_oneshot(&d, 1.0, 1.0, &rat(1, 4), &zero()),
            Err(Error::MarkovViolation(_))
        ));
    }

    #[test]
    fn comparison_with_unit_eps_is_satisfied() {
        let d = instance(&trivial_xyz(2, 2), 2, |x| if x == 0 { vec![rat(3, 4), rat(1, 4)] } else { vec![rat(1, 4), rat(3, 4)] }, 2, |_| vec![rat(1, 2), rat(1, 2)]);
        let s = d.marginal(&[M]).unwrap();
        let t = d.marginal(&[N]).unwrap();
        let rep = region_compare(&d, &s, &t, &one(), &one(), &one(), &rat(1, 4), 0.0, 0.0).unwrap();
        assert!(rep.satisfied);
        let _ = int(1);
    }
}
