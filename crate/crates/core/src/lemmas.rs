//! Randomized verification batteries. Each case draws its instance from a
//! stream keyed by `(seed, index)`, so any failing case can be replayed
//! from those two numbers alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coding::convex::{bipartite_convex_split_tv_exact, convex_split_tv_exact};
use crate::coding::lemma1::lemma1_outcome;
use crate::coding::partition::required_multiple;
use crate::coding::posdecode::sequential_decode_error_exact;
use crate::coding::{verify_test_set, ExtendOptions, ExtendedSource, TestSetA, TestSetParams};
use crate::dist::{EventSet, JointDist, Var};
use crate::error::{Error, Result};
use crate::gen::{random_dist, random_row, random_task, random_task_dyadic, random_subset, TaskShape};
use crate::info::{comparison_target, region_compare, TaskTables, M, N, X};
use crate::numeric::{format_rational, int, one, pow2, rat, to_f64, zero, Prob};
use crate::protocol::sch_equivalence_check;

pub const SUITES: [&str; 10] = [
    "restriction",
    "monotone",
    "pinsker",
    "convexsplit",
    "bipartite",
    "posdecode",
    "lemma1",
    "setA",
    "sch",
    "region",
];

/// One checked instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub suite: String,
    pub seed: u64,
    pub index: u64,
    pub holds: bool,
    /// The quantities compared.
    pub detail: Value,
    /// Enough to rebuild the instance without the generator.
    pub instance: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub count: u64,
    pub passed: u64,
    pub failed: u64,
    pub failures: Vec<CaseOutcome>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }
}

pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn dist_json(d: &JointDist) -> Value {
    serde_json::to_value(d.to_file()).expect("serializable")
}

fn q(p: &Prob) -> String {
    format_rational(p)
}

fn pick<T: Clone, R: Rng>(rng: &mut R, items: &[T]) -> T {
    items[rng.random_range(0..items.len())].clone()
}

struct Checked {
    holds: bool,
    detail: Value,
    instance: Value,
}

/// Runs case `index` of `suite`.
pub fn run_case(suite: &str, seed: u64, index: u64) -> Result<CaseOutcome> {
    let mut rng = case_rng(seed, index);
    let c = match suite {
        "restriction" => restriction(&mut rng)?,
        "monotone" => monotone(&mut rng)?,
        "pinsker" => pinsker(&mut rng)?,
        "convexsplit" => convexsplit(&mut rng)?,
        "bipartite" => bipartite(&mut rng)?,
        "posdecode" => posdecode(&mut rng)?,
        "lemma1" => lemma1(&mut rng)?,
        "setA" => set_a(&mut rng)?,
        "sch" => sch(&mut rng)?,
        "region" => region(&mut rng)?,
        other => return Err(Error::InvalidParameter(format!("unknown suite `{other}`"))),
    };
    Ok(CaseOutcome {
        suite: suite.to_string(),
        seed,
        index,
        holds: c.holds,
        detail: c.detail,
        instance: c.instance,
    })
}

/// Runs cases `0..count` in parallel.
pub fn run_suite(suite: &str, seed: u64, count: u64) -> Result<SuiteReport> {
    if !SUITES.contains(&suite) {
        return Err(Error::InvalidParameter(format!("unknown suite `{suite}`")));
    }
    let outcomes = (0..count)
        .into_par_iter()
        .map(|i| run_case(suite, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let failures: Vec<CaseOutcome> = outcomes.into_iter().filter(|c| !c.holds).collect();
    Ok(SuiteReport {
        suite: suite.to_string(),
        seed,
        count,
        passed: count - failures.len() as u64,
        failed: failures.len() as u64,
        failures,
    })
}

/// Distance to the restriction equals the mass outside the event.
fn restriction<R: Rng>(rng: &mut R) -> Result<Checked> {
    let vars = vec![Var::new("A", rng.random_range(2..=4)), Var::new("B", rng.random_range(1..=3))];
    loop {
        let d = random_dist(rng, vars.clone(), 6, 0.3);
        let sizes = d.sizes();
        let keep = random_subset(rng, sizes[0] * sizes[1], 0.5);
        let members: Vec<Vec<usize>> = (0..keep.len())
            .filter(|&i| keep[i])
            .map(|i| vec![i / sizes[1], i % sizes[1]])
            .collect();
        let g = EventSet::new(&d, &["A", "B"], members.clone())?;
        let pg = d.prob_event(&g)?;
        if pg == zero() {
            continue;
        }
        let tv = d.tv_half(&d.restrict(&g)?)?;
        let expect = one() - &pg;
        return Ok(Checked {
            holds: tv == expect,
            detail: json!({ "tv": q(&tv), "one_minus_pr_g": q(&expect) }),
            instance: json!({ "dist": dist_json(&d), "event": members }),
        });
    }
}

/// Data processing for total variation and relative entropy.
fn monotone<R: Rng>(rng: &mut R) -> Result<Checked> {
    let vars = vec![Var::new("A", rng.random_range(2..=4)), Var::new("B", rng.random_range(1..=3))];
    let d1 = random_dist(rng, vars.clone(), 6, 0.2);
    let d2 = random_dist(rng, vars, 6, 0.2);
    let a = d1.sizes()[0];
    let out = rng.random_range(1..=a);
    let f: Vec<usize> = (0..a).map(|_| rng.random_range(0..out)).collect();
    let tv = d1.tv_half(&d2)?;
    let tv_f = d1.pushforward("A", &f, out)?.tv_half(&d2.pushforward("A", &f, out)?)?;
    let kl = d1.kl(&d2)?;
    let kl_m = d1.marginal(&["A"])?.kl(&d2.marginal(&["A"])?)?;
    let kl_ok = !kl.is_finite() || kl_m <= kl + 1e-12;
    Ok(Checked {
        holds: tv_f <= tv && kl_ok,
        detail: json!({ "tv": q(&tv), "tv_pushforward": q(&tv_f), "kl": kl, "kl_marginal": kl_m }),
        instance: json!({ "d1": dist_json(&d1), "d2": dist_json(&d2), "map": f, "image_size": out }),
    })
}

/// `||d1 - d2||_1 <= 2 sqrt(D(d1 || d2))`, with the divergence in bits.
fn pinsker<R: Rng>(rng: &mut R) -> Result<Checked> {
    let vars = vec![Var::new("A", rng.random_range(2..=6))];
    let d1 = random_dist(rng, vars.clone(), 8, 0.3);
    let d2 = random_dist(rng, vars, 8, 0.0);
    let l1 = 2.0 * to_f64(&d1.tv_half(&d2)?);
    let kl = d1.kl(&d2)?;
    Ok(Checked {
        holds: l1 <= 2.0 * kl.sqrt() + 1e-12,
        detail: json!({ "l1": l1, "kl": kl }),
        instance: json!({ "d1": dist_json(&d1), "d2": dist_json(&d2) }),
    })
}

/// Mass where `num / den` exceeds `threshold`, with zero denominators
/// counted as infinite ratios.
fn tail_above(num: &[Prob], den: &[Prob], threshold: &Prob) -> Prob {
    num.iter()
        .zip(den)
        .filter(|(p, d)| **p > zero() && (**d == zero() || *p / *d > *threshold))
        .map(|(p, _)| p.clone())
        .sum()
}

/// With `eps` the smallest value for which `R >= d_s^eps + 2 log(3/delta)`,
/// the mixture is within `eps + delta` of the product.
fn convexsplit<R: Rng>(rng: &mut R) -> Result<Checked> {
    let xs = rng.random_range(1..=3);
    let ms = rng.random_range(2..=4);
    // the threshold 2^R delta^2 / 9 exceeds 1 only for R = 4 and delta > 3/4
    let r: u32 = pick(rng, &[0, 2, 4, 4, 4]);
    let delta = pick(rng, &[rat(1, 2), rat(9, 10), rat(19, 20), rat(99, 100)]);
    let w_row = random_row(rng, ms, 5, 0.1);
    let w = JointDist::new(vec![Var::new(M, ms)], w_row.clone())?;
    let product = rng.random_bool(0.25);
    let px = random_dist(rng, vec![Var::new(X, xs)], 5, 0.0);
    let xm = if product {
        px.product(&w)?
    } else {
        // blend toward the product so the ratio event is often informative
        let lam = pick(rng, &[rat(1, 16), rat(1, 8), rat(1, 4), one()]);
        let free = random_dist(rng, vec![Var::new(X, xs), Var::new(M, ms)], 6, 0.2);
        let prod = px.product(&w)?;
        let probs = free
            .probs()
            .iter()
            .zip(prod.probs())
            .map(|(a, b)| &lam * a + (one() - &lam) * b)
            .collect();
        JointDist::new(free.vars().to_vec(), probs)?
    };
    let ref_law = xm.marginal(&[X])?.product(&w)?;
    // R - 2 log(3/delta) as a rational power: ratio > 2^R delta^2 / 9
    let threshold = pow2(r as i64) * &delta * &delta / int(9);
    let eps = tail_above(xm.probs(), ref_law.probs(), &threshold);
    let tv = convex_split_tv_exact(&xm, &w, r)?;
    let bound = &eps + &delta;
    let holds = tv <= bound && (!product || tv == zero());
    Ok(Checked {
        holds,
        detail: json!({ "tv": q(&tv), "eps": q(&eps), "bound": q(&bound), "product": product }),
        instance: json!({ "xm": dist_json(&xm), "w": dist_json(&w), "r": r, "delta": q(&delta) }),
    })
}

/// The two-index mixture is within `eps + delta`, with `eps` the mass
/// outside the joint ratio event at `delta^2 / 24`.
fn bipartite<R: Rng>(rng: &mut R) -> Result<Checked> {
    let xs = rng.random_range(1..=2);
    let (r1, r2) = (rng.random_range(0..=2), rng.random_range(0..=2));
    let delta = pick(rng, &[rat(1, 2), rat(9, 10)]);
    let u = JointDist::new(vec![Var::new(M, 2)], random_row(rng, 2, 5, 0.0))?;
    let v = JointDist::new(vec![Var::new(N, 2)], random_row(rng, 2, 5, 0.0))?;
    let product = rng.random_bool(0.25);
    let xmn = if product {
        random_dist(rng, vec![Var::new(X, xs)], 5, 0.0).product(&u)?.product(&v)?
    } else {
        random_dist(rng, vec![Var::new(X, xs), Var::new(M, 2), Var::new(N, 2)], 6, 0.2)
    };
    let c = &delta * &delta / int(24);
    let px = xmn.marginal(&[X])?;
    let pxm = xmn.marginal(&[X, M])?;
    let pxn = xmn.marginal(&[X, N])?;
    let (t1, t2, t12) = (&c * pow2(r1), &c * pow2(r2), &c * pow2(r1 + r2));
    let mut inside = zero();
    for (t, p) in xmn.support() {
        let (x, m, n) = (t[0], t[1], t[2]);
        let base = px.prob(&[x]);
        let (pu, pv) = (u.prob(&[m]), v.prob(&[n]));
        if pxm.prob(&[x, m]) / (base * pu) <= t1
            && pxn.prob(&[x, n]) / (base * pv) <= t2
            && p / (base * pu * pv) <= t12
        {
            inside += p;
        }
    }
    let eps = one() - inside;
    let tv = bipartite_convex_split_tv_exact(&xmn, &u, &v, r1 as u32, r2 as u32)?;
    let bound = &eps + &delta;
    Ok(Checked {
        holds: tv <= bound && (!product || tv == zero()),
        detail: json!({ "tv": q(&tv), "eps": q(&eps), "bound": q(&bound), "product": product }),
        instance: json!({
            "xmn": dist_json(&xmn), "u": dist_json(&u), "v": dist_json(&v),
            "r1": r1, "r2": r2, "delta": q(&delta)
        }),
    })
}

/// Sequential decoding error is at most the cross-acceptance sum plus the
/// worst miss probability.
fn posdecode<R: Rng>(rng: &mut R) -> Result<Checked> {
    let c = rng.random_range(1..=5);
    let h = rng.random_range(2..=8);
    let d = random_dist(rng, vec![Var::new("C", c), Var::new("H", h)], 6, 0.3);
    let mut sets = Vec::with_capacity(c);
    let mut tests = Vec::with_capacity(c);
    for _ in 0..c {
        let members: Vec<Vec<usize>> = (0..h).filter(|_| rng.random_bool(0.5)).map(|v| vec![v]).collect();
        tests.push(EventSet::new(&d, &["H"], members.clone())?);
        sets.push(members);
    }
    let r = sequential_decode_error_exact(&d, "C", &tests)?;
    Ok(Checked {
        holds: r.tv <= r.bound,
        detail: json!({ "tv": q(&r.tv), "bound": q(&r.bound), "epsilon": q(&r.epsilon) }),
        instance: json!({ "joint": dist_json(&d), "tests": sets }),
    })
}

/// Tail inequality on `[8] x [8]` laws supported on `e <= g`.
fn lemma1<R: Rng>(rng: &mut R) -> Result<Checked> {
    let vars = vec![Var::new("E", 8), Var::new("G", 8)];
    let d = loop {
        let w: Vec<Prob> = (0..64)
            .map(|i| {
                if i / 8 > i % 8 || rng.random_bool(0.4) {
                    zero()
                } else {
                    int(rng.random_range(1..=9))
                }
            })
            .collect();
        if let Ok(d) = JointDist::normalized(vars.clone(), w) {
            break d;
        }
    };
    let out = lemma1_outcome(&d)?;
    Ok(Checked {
        holds: out.holds,
        detail: json!({ "worst_delta": q(&out.worst_delta), "worst_excess": q(&out.worst_excess) }),
        instance: json!({ "eg": dist_json(&d) }),
    })
}

/// Random small task instance at `delta = 1/4` with `K <= 96`.
pub fn random_set_a_instance<R: Rng>(rng: &mut R) -> (JointDist, f64, f64) {
    let m = rng.random_range(1..=3);
    let n = rng.random_range(1..=3);
    let shape = TaskShape {
        x: rng.random_range(1..=2),
        y: rng.random_range(1..=2),
        z: rng.random_range(1..=2),
        m,
        n,
    };
    // three symbols need K a multiple of 64; two allow a factor of 3
    let denom = if m.max(n) == 3 { pick(rng, &[2, 4]) } else { pick(rng, &[2, 3, 4]) };
    let d = random_task_dyadic(rng, &shape, denom);
    let r1 = pick(rng, &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    let r2 = pick(rng, &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    (d, r1, r2)
}

/// Builds the test set for an instance at `delta` with `K` padded for the
/// partition, and verifies every bound exactly.
pub fn check_set_a(d: &JointDist, r1: f64, r2: f64, delta: &Prob) -> Result<(ExtendedSource, crate::coding::TestSetReport)> {
    let tables = TaskTables::build(d)?;
    let opts = ExtendOptions {
        k_multiple: required_multiple(delta, tables.max_card())?,
        ..Default::default()
    };
    let src = ExtendedSource::build(d, &opts)?;
    let a = TestSetA::build(&src, &TestSetParams::new(r1, r2, delta.clone()))?;
    let rep = verify_test_set(&a, &src)?;
    Ok((src, rep))
}

fn set_a<R: Rng>(rng: &mut R) -> Result<Checked> {
    let (d, r1, r2) = random_set_a_instance(rng);
    let delta = rat(1, 4);
    let (src, rep) = check_set_a(&d, r1, r2, &delta)?;
    Ok(Checked {
        holds: rep.all_hold(),
        detail: json!({ "k": src.k, "report": serde_json::to_value(&rep).expect("serializable") }),
        instance: json!({ "dist": dist_json(&d), "r1": r1, "r2": r2, "delta": q(&delta) }),
    })
}

fn sch<R: Rng>(rng: &mut R) -> Result<Checked> {
    let xs = rng.random_range(2..=3);
    let vars = vec![Var::new("Y", rng.random_range(1..=3)), Var::new("X", xs), Var::new("X2", xs)];
    // lean toward X' = X so mismatch probabilities vary
    let base = random_dist(rng, vars.clone(), 6, 0.3);
    let boost = rng.random_range(0..=20);
    let w: Vec<Prob> = base
        .iter()
        .map(|(t, p)| if t[1] == t[2] { p * int(1 + boost) } else { p.clone() })
        .collect();
    let d = JointDist::normalized(vars, w)?;
    let c = sch_equivalence_check(&d)?;
    Ok(Checked {
        holds: c.ok,
        detail: json!({ "tv": q(&c.tv_to_ideal), "pr_mismatch": q(&c.pr_mismatch) }),
        instance: json!({ "yxx": dist_json(&d) }),
    })
}

/// Random instance and parameters for the comparison-region containment.
pub struct RegionCase {
    pub dist: JointDist,
    pub eps: [Prob; 3],
    pub delta: Prob,
    pub r1: f64,
    pub r2: f64,
}

pub fn random_region_case<R: Rng>(rng: &mut R) -> Result<RegionCase> {
    let shape = TaskShape {
        x: rng.random_range(1..=2),
        y: rng.random_range(1..=2),
        z: rng.random_range(1..=2),
        m: 2,
        n: 2,
    };
    let d = random_task(rng, &shape, 4);
    let eps = [0, 1, 2].map(|_| pick(rng, &[rat(1, 20), rat(1, 10), rat(1, 5)]));
    let delta = pick(rng, &[rat(1, 8), rat(1, 4)]);
    let s = d.marginal(&[M])?;
    let t = d.marginal(&[N])?;
    // probe at zero rates for the thresholds, then place rates on or above them
    let probe = region_compare(&d, &s, &t, &eps[0], &eps[1], &eps[2], &delta, 0.0, 0.0)?;
    let th = |k: &str| probe.thresholds[k];
    let r1 = th("r1_min").max(0.0) + pick(rng, &[0.0, 0.5, 2.0]);
    let r2 = th("r2_min").max(th("sum_min") - r1).max(0.0) + pick(rng, &[0.0, 0.5, 2.0]);
    Ok(RegionCase {
        dist: d,
        eps,
        delta,
        r1,
        r2,
    })
}

fn region<R: Rng>(rng: &mut R) -> Result<Checked> {
    let c = random_region_case(rng)?;
    let s = c.dist.marginal(&[M])?;
    let t = c.dist.marginal(&[N])?;
    let rep = region_compare(&c.dist, &s, &t, &c.eps[0], &c.eps[1], &c.eps[2], &c.delta, c.r1, c.r2)?;
    let target = comparison_target([&c.eps[0], &c.eps[1], &c.eps[2]], &c.delta);
    Ok(Checked {
        holds: !rep.satisfied || rep.good_mass >= target,
        detail: json!({
            "satisfied": rep.satisfied, "good_mass": q(&rep.good_mass), "target": q(&target),
            "thresholds": rep.thresholds
        }),
        instance: json!({
            "dist": dist_json(&c.dist), "eps": c.eps.iter().map(q).collect::<Vec<_>>(),
            "delta": q(&c.delta), "r1": c.r1, "r2": c.r2
        }),
    })
}
