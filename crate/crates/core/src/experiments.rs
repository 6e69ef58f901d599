//! Constructions with numerical claims attached: the one-way hard instance
//! and its extraction argument, the two-order interactive scheme, the
//! full-support counterexample, and shared-randomness reduction.

use std::collections::HashMap;

use num_traits::Signed;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{JointDist, Var};
use crate::error::{Error, Result};
use crate::info::{canonical, check_markov, cond_entropy, M, N, X, Y, Z};
use crate::numeric::{self, ceil_tol, exact_sqrt, int, one, rat, to_f64, zero, Prob};
use crate::protocol::{task_b_minimal_rate, ProtocolConfig, SideParams};

// ---------------------------------------------------------------------------
// hard instance for one-way protocols

/// `Z` uniform on `[N]`; the first `delta N` values of `Z` carry no
/// information about `X`, the rest determine it.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub n: usize,
    pub eps: Prob,
    /// `sqrt(eps)`.
    pub delta: Prob,
    /// `delta N`, the number of uninformative side-information values.
    pub mixing: usize,
    /// `(1 - delta) N`.
    pub x_card: usize,
    /// Law over `(X, Z)`.
    pub dist: JointDist,
}

pub fn build_hard_instance(n: usize, eps: &Prob) -> Result<HardInstance> {
    if !eps.is_positive() || *eps > rat(1, 64) {
        return Err(Error::InvalidParameter("eps must lie in (0, 1/64]".into()));
    }
    let delta = exact_sqrt(eps).ok_or_else(|| Error::InvalidParameter("sqrt(eps) must be rational".into()))?;
    let mixing_q = &delta * int(n as i64);
    if !mixing_q.is_integer() {
        return Err(Error::InvalidParameter(format!(
            "delta N = {} is not an integer",
            numeric::format_rational(&mixing_q)
        )));
    }
    let mixing = mixing_q.to_integer().try_into().unwrap_or(0usize);
    if mixing == 0 || mixing >= n {
        return Err(Error::InvalidParameter("need 0 < delta N < N".into()));
    }
    let x_card = n - mixing;
    let spread = rat(1, (n * x_card) as i64);
    let point = rat(1, n as i64);
    let dist = JointDist::from_fn(vec![Var::new(X, x_card), Var::new(Z, n)], |t| {
        if t[1] < mixing {
            spread.clone()
        } else if t[0] == t[1] - mixing {
            point.clone()
        } else {
            zero()
        }
    })?;
    Ok(HardInstance {
        n,
        eps: eps.clone(),
        delta,
        mixing,
        x_card,
        dist,
    })
}

impl HardInstance {
    /// `delta log2((1 - delta) N)`.
    pub fn h_x_given_z_closed_form(&self) -> f64 {
        to_f64(&self.delta) * (self.x_card as f64).log2()
    }

    pub fn h_x_given_z(&self) -> Result<f64> {
        cond_entropy(&self.dist, &[X], &[Z])
    }

    /// `H(X|Z) / (6 sqrt(eps))`, the claimed lower bound on expected cost.
    pub fn cost_lower_bound(&self) -> f64 {
        self.h_x_given_z_closed_form() / (6.0 * to_f64(&self.delta))
    }
}

/// A one-way protocol with randomness shared by sender and receiver. The
/// sender sees `x`, the receiver sees the message and `z`.
pub trait OneWayProtocol: Sync {
    fn name(&self) -> String;
    /// Law of the shared randomness.
    fn randomness(&self) -> Vec<Prob>;
    fn encode(&self, x: usize, r: usize) -> Vec<bool>;
    fn decode(&self, msg: &[bool], z: usize, r: usize) -> usize;
}

fn to_bits(v: usize, len: u32) -> Vec<bool> {
    (0..len).rev().map(|i| (v >> i) & 1 == 1).collect()
}

fn from_bits(b: &[bool]) -> usize {
    b.iter().fold(0, |acc, &bit| (acc << 1) | bit as usize)
}

fn bits_for(card: usize) -> u32 {
    usize::BITS - (card.max(2) - 1).leading_zeros()
}

/// Sends `x` in fixed length.
#[derive(Debug, Clone)]
pub struct Verbatim {
    pub x_card: usize,
}

impl OneWayProtocol for Verbatim {
    fn name(&self) -> String {
        "verbatim".into()
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![one()]
    }
    fn encode(&self, x: usize, _: usize) -> Vec<bool> {
        to_bits(x, bits_for(self.x_card))
    }
    fn decode(&self, msg: &[bool], _: usize, _: usize) -> usize {
        from_bits(msg)
    }
}

/// Sends `x + r mod |X|` in fixed length for a uniform shift `r`.
#[derive(Debug, Clone)]
pub struct ShiftedVerbatim {
    pub x_card: usize,
    pub shifts: usize,
}

impl OneWayProtocol for ShiftedVerbatim {
    fn name(&self) -> String {
        format!("shifted_verbatim_{}", self.shifts)
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![rat(1, self.shifts as i64); self.shifts]
    }
    fn encode(&self, x: usize, r: usize) -> Vec<bool> {
        to_bits((x + r) % self.x_card, bits_for(self.x_card))
    }
    fn decode(&self, msg: &[bool], _: usize, r: usize) -> usize {
        (from_bits(msg) + self.x_card - r % self.x_card) % self.x_card
    }
}

/// Truncated binary code: the first `2^(k+1) - |X|` symbols get `k` bits,
/// the rest `k + 1`, with `k = floor(log2 |X|)`.
#[derive(Debug, Clone)]
pub struct TruncatedBinary {
    pub x_card: usize,
}

impl TruncatedBinary {
    fn split(&self) -> (u32, usize) {
        let k = usize::BITS - 1 - self.x_card.leading_zeros();
        let short = (1usize << (k + 1)) - self.x_card;
        (k, short)
    }
}

impl OneWayProtocol for TruncatedBinary {
    fn name(&self) -> String {
        "truncated_binary".into()
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![one()]
    }
    fn encode(&self, x: usize, _: usize) -> Vec<bool> {
        let (k, short) = self.split();
        if x < short {
            to_bits(x, k)
        } else {
            to_bits(x + short, k + 1)
        }
    }
    fn decode(&self, msg: &[bool], _: usize, _: usize) -> usize {
        let (k, short) = self.split();
        let v = from_bits(msg);
        if msg.len() as u32 == k {
            v
        } else {
            v - short
        }
    }
}

/// Symbols below `skip` send a single `0` and the receiver guesses from the
/// side information; the rest send `1` followed by `x`.
#[derive(Debug, Clone)]
pub struct FlagGuess {
    pub x_card: usize,
    pub mixing: usize,
    pub skip: usize,
}

impl OneWayProtocol for FlagGuess {
    fn name(&self) -> String {
        format!("flag_guess_{}", self.skip)
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![one()]
    }
    fn encode(&self, x: usize, _: usize) -> Vec<bool> {
        if x < self.skip {
            vec![false]
        } else {
            let mut v = vec![true];
            v.extend(to_bits(x, bits_for(self.x_card)));
            v
        }
    }
    fn decode(&self, msg: &[bool], z: usize, _: usize) -> usize {
        if msg[0] {
            from_bits(&msg[1..])
        } else { z.saturating_sub(self.mixing) }
    }
}

/// Fixed-length `x` followed by its parity bit.
#[derive(Debug, Clone)]
pub struct ParityVerbatim {
    pub x_card: usize,
}

impl OneWayProtocol for ParityVerbatim {
    fn name(&self) -> String {
        "parity_verbatim".into()
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![one()]
    }
    fn encode(&self, x: usize, _: usize) -> Vec<bool> {
        let mut v = to_bits(x, bits_for(self.x_card));
        v.push(x.count_ones() % 2 == 1);
        v
    }
    fn decode(&self, msg: &[bool], _: usize, _: usize) -> usize {
        from_bits(&msg[..msg.len() - 1])
    }
}

/// The receiver ignores the (empty) message and guesses from `z`.
#[derive(Debug, Clone)]
pub struct GuessFromSide {
    pub mixing: usize,
}

impl OneWayProtocol for GuessFromSide {
    fn name(&self) -> String {
        "guess_from_side".into()
    }
    fn randomness(&self) -> Vec<Prob> {
        vec![one()]
    }
    fn encode(&self, _: usize, _: usize) -> Vec<bool> {
        Vec::new()
    }
    fn decode(&self, _: &[bool], z: usize, _: usize) -> usize {
        z.saturating_sub(self.mixing)
    }
}

/// Runs one of several protocols, chosen by the shared randomness.
pub struct Mixture {
    pub parts: Vec<(Prob, Box<dyn OneWayProtocol>)>,
}

impl Mixture {
    fn locate(&self, r: usize) -> (usize, usize) {
        let mut r = r;
        for (i, (_, p)) in self.parts.iter().enumerate() {
            let n = p.randomness().len();
            if r < n {
                return (i, r);
            }
            r -= n;
        }
        panic!("randomness index out of range")
    }
}

impl OneWayProtocol for Mixture {
    fn name(&self) -> String {
        let names: Vec<String> = self.parts.iter().map(|(_, p)| p.name()).collect();
        format!("mixture({})", names.join(","))
    }
    fn randomness(&self) -> Vec<Prob> {
        self.parts
            .iter()
            .flat_map(|(w, p)| p.randomness().into_iter().map(move |q| w * q))
            .collect()
    }
    fn encode(&self, x: usize, r: usize) -> Vec<bool> {
        let (i, r) = self.locate(r);
        self.parts[i].1.encode(x, r)
    }
    fn decode(&self, msg: &[bool], z: usize, r: usize) -> usize {
        let (i, r) = self.locate(r);
        self.parts[i].1.decode(msg, z, r)
    }
}

/// Five protocols with error at most `eps` on the instance, beyond
/// verbatim sending.
pub fn hand_built_protocols(h: &HardInstance) -> Vec<Box<dyn OneWayProtocol>> {
    // guessing costs delta / |X| per skipped nonzero symbol
    let skip = (&h.delta * int(h.x_card as i64)).floor().to_integer().try_into().unwrap_or(0usize) + 1;
    vec![
        Box::new(ShiftedVerbatim {
            x_card: h.x_card,
            shifts: 4,
        }),
        Box::new(TruncatedBinary { x_card: h.x_card }),
        Box::new(FlagGuess {
            x_card: h.x_card,
            mixing: h.mixing,
            skip,
        }),
        Box::new(ParityVerbatim { x_card: h.x_card }),
        Box::new(Mixture {
            parts: vec![
                (rat(1, 2), Box::new(Verbatim { x_card: h.x_card })),
                (
                    rat(1, 2),
                    Box::new(FlagGuess {
                        x_card: h.x_card,
                        mixing: h.mixing,
                        skip,
                    }),
                ),
            ],
        }),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneWayEval {
    pub protocol: String,
    #[serde(with = "numeric::serde_rational")]
    pub expected_cost: Prob,
    #[serde(with = "numeric::serde_rational")]
    pub error: Prob,
    /// Per value of the randomness: expected length and error.
    #[serde(skip)]
    per_r: Vec<(Prob, Prob)>,
}

fn check_protocol(p: &dyn OneWayProtocol, x_card: usize) -> Result<Vec<Prob>> {
    let pr = p.randomness();
    if pr.is_empty() || pr.iter().any(|q| q.is_negative()) || pr.iter().sum::<Prob>() != one() {
        return Err(Error::InvalidParameter(format!("{}: randomness is not a distribution", p.name())));
    }
    for r in 0..pr.len() {
        let mut words: Vec<Vec<bool>> = (0..x_card).map(|x| p.encode(x, r)).collect();
        words.sort();
        words.dedup();
        for w in words.windows(2) {
            if w[1].starts_with(&w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "{}: codewords are not prefix-free for r = {r}",
                    p.name()
                )));
            }
        }
    }
    Ok(pr)
}

/// Exact expected length and error over `(x, z, r)`.
pub fn evaluate_oneway(p: &dyn OneWayProtocol, h: &HardInstance) -> Result<OneWayEval> {
    let pr = check_protocol(p, h.x_card)?;
    let px = rat(1, h.x_card as i64);
    let mut per_r = Vec::with_capacity(pr.len());
    let mut cost = zero();
    let mut err = zero();
    for (r, w) in pr.iter().enumerate() {
        let words: Vec<Vec<bool>> = (0..h.x_card).map(|x| p.encode(x, r)).collect();
        let len: usize = words.iter().map(|m| m.len()).sum();
        let c = &px * int(len as i64);
        let mut e = zero();
        for (t, q) in h.dist.support() {
            if p.decode(&words[t[0]], t[1], r) != t[0] {
                e += q;
            }
        }
        cost += w * &c;
        err += w * &e;
        per_r.push((c, e));
    }
    Ok(OneWayEval {
        protocol: p.name(),
        expected_cost: cost,
        error: err,
        per_r,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extraction {
    pub protocol: String,
    pub expected_cost: f64,
    pub error: f64,
    pub r0: usize,
    pub z0: usize,
    /// Expected length at `r0`, at most `3C`.
    pub cost_at_r0: f64,
    /// Error at `r0`, at most `3 eps`.
    pub error_at_r0: f64,
    /// Error at `(z0, r0)` averaged over `X`, at most `3 eps / delta`.
    pub error_at_z0: f64,
    /// Fraction of `x` decoded correctly at `(z0, r0)`.
    pub correct_fraction: f64,
    pub correct_fraction_holds: bool,
    /// `3C >= log2((1 - 3 sqrt(eps)) (1 - delta) N)`.
    pub cost_chain_holds: bool,
    /// `log2((1 - 3 sqrt(eps)) (1 - delta) N) >= log2(N) / 2`.
    pub size_chain_holds: bool,
    /// `log2(N) / 2 >= H(X|Z) / (2 sqrt(eps))`.
    pub entropy_chain_holds: bool,
    pub lower_bound: f64,
    /// `C >= H(X|Z) / (6 sqrt(eps))`.
    pub derived_cost_bound_holds: bool,
}

/// Follows the averaging argument: fix a good value of the randomness, then
/// a good uninformative side-information value, and check each link of the
/// resulting cost chain.
pub fn reduction_extract(p: &dyn OneWayProtocol, h: &HardInstance) -> Result<Extraction> {
    let ev = evaluate_oneway(p, h)?;
    if ev.error > h.eps {
        return Err(Error::Precondition(format!(
            "{}: error {} exceeds eps = {}",
            p.name(),
            numeric::format_rational(&ev.error),
            numeric::format_rational(&h.eps)
        )));
    }
    let three = int(3);
    let r0 = ev
        .per_r
        .iter()
        .position(|(c, e)| *c <= &three * &ev.expected_cost && *e <= &three * &ev.error)
        .ok_or_else(|| Error::Precondition("no value of the randomness passes both averages".into()))?;
    let (cost_r0, err_r0) = ev.per_r[r0].clone();
    let px = rat(1, h.x_card as i64);
    let words: Vec<Vec<bool>> = (0..h.x_card).map(|x| p.encode(x, r0)).collect();
    let z_err = |z: usize| -> Prob {
        let wrong = (0..h.x_card).filter(|&x| p.decode(&words[x], z, r0) != x).count();
        &px * int(wrong as i64)
    };
    let limit = &three * &ev.error / &h.delta;
    let z0 = (0..h.mixing)
        .find(|&z| z_err(z) <= limit)
        .ok_or_else(|| Error::Precondition("no uninformative side value passes the average".into()))?;
    let err_z0 = z_err(z0);
    let correct = one() - &err_z0;
    let root = to_f64(&h.delta);
    let c = to_f64(&ev.expected_cost);
    let size_term = ((1.0 - 3.0 * root) * h.x_card as f64).log2();
    let log_n = (h.n as f64).log2();
    let hxz = h.h_x_given_z_closed_form();
    Ok(Extraction {
        protocol: p.name(),
        expected_cost: c,
        error: to_f64(&ev.error),
        r0,
        z0,
        cost_at_r0: to_f64(&cost_r0),
        error_at_r0: to_f64(&err_r0),
        error_at_z0: to_f64(&err_z0),
        correct_fraction: to_f64(&correct),
        correct_fraction_holds: correct >= one() - &three * &h.delta,
        cost_chain_holds: 3.0 * c >= size_term - 1e-12,
        size_chain_holds: size_term >= 0.5 * log_n - 1e-12,
        entropy_chain_holds: 0.5 * log_n >= hxz / (2.0 * root) - 1e-12,
        lower_bound: h.cost_lower_bound(),
        derived_cost_bound_holds: c >= h.cost_lower_bound() - 1e-12,
    })
}

// ---------------------------------------------------------------------------
// interactive scheme over the two corner orders

/// Measured cost of one single-sender stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TaskBRun {
    pub rate: f64,
    pub bits: u32,
}

/// Supplies the single-sender subroutine: given a law over `X, M, Z`,
/// the cost of delivering `M` to the receiver holding `Z`.
pub trait TaskBRunner {
    fn run(&self, d_xmz: &JointDist) -> Result<TaskBRun>;
}

/// Uses the smallest grid rate whose one-sender event reaches `1 - epsilon`
/// and reports the banked message length at that rate.
#[derive(Debug, Clone)]
pub struct BankedTaskB {
    pub delta: Prob,
    pub epsilon: Prob,
    pub step: f64,
    pub max_rate: f64,
}

impl TaskBRunner for BankedTaskB {
    fn run(&self, d_xmz: &JointDist) -> Result<TaskBRun> {
        let card = d_xmz.size_of(M)?;
        let rate = task_b_minimal_rate(d_xmz, &self.delta, &self.epsilon, self.step, self.max_rate)?
            .ok_or_else(|| Error::Budget(format!("no rate up to {} reaches the target mass", self.max_rate)))?;
        let side = SideParams::new(rate, card, &self.delta)?;
        Ok(TaskBRun {
            rate,
            bits: side.message_bits(),
        })
    }
}

/// Law over `X, M, Z` for one stage: `source` plays `X`, `message` plays
/// `M`, and the receiver's knowledge `side` is merged into `Z`.
fn stage(d: &JointDist, source: &str, message: &str, side: &[&str]) -> Result<JointDist> {
    let mut keep = vec![source, message];
    keep.extend_from_slice(side);
    let s = d.marginal(&keep)?.merge(side, "side")?;
    let s = if source == X { s } else { s.rename(source, X)? };
    let s = if message == M { s } else { s.rename(message, M)? };
    s.rename("side", Z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CornerCost {
    /// Probability of the order in which `N` goes first.
    pub p_n_first: f64,
    /// `(Bob, Alice)` stages when `N` goes first.
    pub n_first: [TaskBRun; 2],
    /// `(Alice, Bob)` stages when `M` goes first.
    pub m_first: [TaskBRun; 2],
    pub alice: f64,
    pub bob: f64,
    /// One bit from the receiver to each sender.
    pub feedback: f64,
    pub total: f64,
}

pub fn interactive_corner_scheme(d: &JointDist, p_mix: &Prob, runner: &dyn TaskBRunner) -> Result<CornerCost> {
    if p_mix.is_negative() || *p_mix > one() {
        return Err(Error::InvalidParameter("mixing probability must lie in [0, 1]".into()));
    }
    check_markov(d)?;
    let d = canonical(d)?;
    let bob_first = runner.run(&stage(&d, Y, N, &[Z])?)?;
    let alice_second = runner.run(&stage(&d, X, M, &[N, Z])?)?;
    let alice_first = runner.run(&stage(&d, X, M, &[Z])?)?;
    let bob_second = runner.run(&stage(&d, Y, N, &[M, Z])?)?;
    let p = to_f64(p_mix);
    let alice = p * alice_second.bits as f64 + (1.0 - p) * alice_first.bits as f64;
    let bob = p * bob_first.bits as f64 + (1.0 - p) * bob_second.bits as f64;
    Ok(CornerCost {
        p_n_first: p,
        n_first: [bob_first, alice_second],
        m_first: [alice_first, bob_second],
        alice,
        bob,
        feedback: 2.0,
        total: alice + bob + 2.0,
    })
}

// ---------------------------------------------------------------------------
// full-support counterexample

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBranch {
    /// `1 - alpha <= sqrt(4 eps)`.
    Large,
    Small,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let rising = f(hi) > f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Root of `alpha (1 - alpha)^2 = 2 eps`, preferring the one near 1.
pub fn solve_alpha(eps: f64) -> Result<(f64, AlphaBranch)> {
    let target = 2.0 * eps;
    // the cubic peaks at alpha = 1/3 with value 4/27
    if !(eps > 0.0 && target <= 4.0 / 27.0) {
        return Err(Error::InvalidParameter(format!("alpha (1 - alpha)^2 = {target} has no root in (0,1)")));
    }
    let f = |a: f64| a * (1.0 - a) * (1.0 - a) - target;
    let large = bisect(f, 1.0 / 3.0, 1.0);
    if 1.0 - large <= (4.0 * eps).sqrt() {
        return Ok((large, AlphaBranch::Large));
    }
    Ok((bisect(f, 0.0, 1.0 / 3.0), AlphaBranch::Small))
}

/// `X = Y` with a heavy symbol of mass `alpha`, and both messages noisy
/// copies of `X` that keep the symbol with probability `alpha`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CounterexampleInstance {
    pub alpha: f64,
    pub size: usize,
}

pub fn build_counterexample(alpha: f64, size: usize) -> Result<CounterexampleInstance> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0,1)".into()));
    }
    if size < 3 {
        return Err(Error::InvalidParameter("alphabet needs at least 3 symbols".into()));
    }
    Ok(CounterexampleInstance { alpha, size })
}

/// Exact law over `X, M, N` for a rational `alpha` (the second source is a
/// copy of `X` and is omitted).
pub fn counterexample_dist(alpha: &Prob, size: usize) -> Result<JointDist> {
    let rest = (one() - alpha) / int(size as i64 - 1);
    let px = |x: usize| if x == 0 { alpha.clone() } else { rest.clone() };
    let k = |x: usize, m: usize| if m == x { alpha.clone() } else { rest.clone() };
    JointDist::from_fn(
        vec![Var::new(X, size), Var::new(M, size), Var::new(N, size)],
        |t| px(t[0]) * k(t[0], t[1]) * k(t[0], t[2]),
    )
}

impl CounterexampleInstance {
    fn other(&self) -> f64 {
        (1.0 - self.alpha) / (self.size - 1) as f64
    }

    /// `p(m, n)` on the five classes: `m = n = 1`; `m = 1 != n`;
    /// `n = 1 != m`; `m = n != 1`; and all distinct from each other and 1.
    pub fn pmn_values(&self) -> [f64; 5] {
        let a = self.alpha;
        let b = self.other();
        let l = self.size as f64;
        let mixed = a * a * b + a * b * b + (l - 2.0) * b * b * b;
        [
            a * a * a + (l - 1.0) * b * b * b,
            mixed,
            mixed,
            mixed,
            3.0 * a * b * b + (l - 3.0) * b * b * b,
        ]
    }

    /// Number of `(m, n)` pairs in each class.
    pub fn class_sizes(&self) -> [f64; 5] {
        let l = self.size as f64;
        [1.0, l - 1.0, l - 1.0, l - 1.0, (l - 1.0) * (l - 2.0)]
    }

    pub fn h_mn(&self) -> f64 {
        self.pmn_values()
            .iter()
            .zip(self.class_sizes())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, c)| -c * p * p.log2())
            .sum()
    }

    fn pmn_class(&self, m: usize, n: usize) -> f64 {
        let v = self.pmn_values();
        match (m == 0, n == 0) {
            (true, true) => v[0],
            (true, false) => v[1],
            (false, true) => v[2],
            _ if m == n => v[3],
            _ => v[4],
        }
    }

    /// `(mass, ratio)` per symmetry class of `(x, m, n)`, with `ratio =
    /// p(m|x) p(n|x) / p(m, n)`. Symbol `0` is the heavy symbol; other
    /// labels stand for distinct light symbols in order of appearance.
    pub fn ratio_classes(&self) -> Vec<(f64, f64)> {
        let a = self.alpha;
        let b = self.other();
        let l = self.size;
        let mut out = Vec::new();
        for x in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    let t = [x, m, n];
                    // canonical: light labels first appear as 1, 2, 3 in order
                    let mut next = 1;
                    let mut ok = true;
                    for &v in &t {
                        if v == next {
                            next += 1;
                        } else if v > next {
                            ok = false;
                        }
                    }
                    if !ok {
                        continue;
                    }
                    let distinct = next - 1;
                    if distinct > l - 1 {
                        continue;
                    }
                    let count: f64 = (0..distinct).map(|i| (l - 1 - i) as f64).product();
                    let pxv = if x == 0 { a } else { b };
                    let pm = if m == x { a } else { b };
                    let pn = if n == x { a } else { b };
                    out.push((count * pxv * pm * pn, pm * pn / self.pmn_class(m, n)));
                }
            }
        }
        out
    }

    /// Smallest `c` with `Pr[ratio <= 2^c] >= 1 - eps`.
    pub fn c_prime(&self, eps: f64) -> f64 {
        let mut classes = self.ratio_classes();
        classes.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut mass = 0.0;
        let mut i = 0;
        while i < classes.len() {
            let r = classes[i].1;
            while i < classes.len() && classes[i].1 <= r * (1.0 + 1e-12) {
                mass += classes[i].0;
                i += 1;
            }
            if mass >= 1.0 - eps - 1e-12 {
                return r.log2();
            }
        }
        classes.last().map_or(0.0, |c| c.1.log2())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub alpha: f64,
    pub size: usize,
    pub eps: f64,
    pub pmn_values: [f64; 5],
    /// Total mass of the five classes; 1 up to rounding.
    pub pmn_total: f64,
    pub h_mn: f64,
    pub c_prime: f64,
    pub ratio: f64,
    /// `7 sqrt(eps)`.
    pub ratio_bound: f64,
    pub ok: bool,
    /// `H(MN) <= (1 - alpha^3) log2 |X| + 3`.
    pub entropy_bound_holds: bool,
    /// Same with the pairs of two distinct light symbols charged
    /// `2 log2 |X|`: `H(MN) <= (1 - alpha^3 + (1 - alpha)^2 (1 + 2 alpha)) log2 |X| + 3`.
    pub corrected_entropy_bound_holds: bool,
    /// `c' >= log2 |X| - 3`.
    pub threshold_bound_holds: bool,
}

pub fn verify_counterexample(inst: &CounterexampleInstance, eps: f64) -> CounterexampleReport {
    let h = inst.h_mn();
    let c = inst.c_prime(eps);
    let log_l = (inst.size as f64).log2();
    let v = inst.pmn_values();
    let ratio = h / c;
    let bound = 7.0 * eps.sqrt();
    CounterexampleReport {
        alpha: inst.alpha,
        size: inst.size,
        eps,
        pmn_values: v,
        pmn_total: v.iter().zip(inst.class_sizes()).map(|(p, c)| p * c).sum(),
        h_mn: h,
        c_prime: c,
        ratio,
        ratio_bound: bound,
        ok: c > 0.0 && ratio <= bound,
        entropy_bound_holds: h <= (1.0 - inst.alpha.powi(3)) * log_l + 3.0,
        corrected_entropy_bound_holds: h
            <= (1.0 - inst.alpha.powi(3) + (1.0 - inst.alpha).powi(2) * (1.0 + 2.0 * inst.alpha)) * log_l + 3.0,
        threshold_bound_holds: c >= log_l - 3.0,
    }
}

// ---------------------------------------------------------------------------
// shared-randomness reduction

#[derive(Debug, Clone)]
pub struct ReduceOptions {
    pub delta: Prob,
    /// Candidate lists to try.
    pub budget: u32,
    pub seed: u64,
    /// Overrides `ceil(24 |M| |N| / delta^3)`.
    pub list_size: Option<u64>,
    /// Streams used to estimate the unrestricted error when blocks are
    /// longer than one copy.
    pub reference_streams: u64,
}

impl ReduceOptions {
    pub fn new(delta: Prob, budget: u32, seed: u64) -> Self {
        ReduceOptions {
            delta,
            budget,
            seed,
            list_size: None,
            reference_streams: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedProtocol {
    pub list_size: u64,
    /// `ceil(log2 list_size)` per sender-receiver pair.
    pub shared_bits: u32,
    /// `ceil(log2(24 |M| |N| / delta^3))`.
    pub bit_limit: u32,
    /// Error of the unrestricted protocol.
    pub baseline_tv: f64,
    pub baseline_exact: bool,
    /// `baseline_tv + 2 delta`.
    pub bound: f64,
    pub found: bool,
    pub candidates_tried: u32,
    /// Error of the accepted (or best) candidate.
    pub tv: f64,
    /// Stream ids shared by each sender and the receiver.
    pub streams: [Vec<u64>; 2],
}

type BlockState = Vec<(usize, u64)>;

/// Average over the streams of the law of the signaled block's contents,
/// per input symbol.
fn block_laws(cfg: &ProtocolConfig, side: usize, streams: &[u64]) -> Vec<HashMap<BlockState, f64>> {
    let sp = cfg.sides[side];
    let weights = if side == 0 { &cfg.src.w } else { &cfg.src.v };
    let inputs = weights.len();
    let b = sp.block_size() as usize;
    let blocks = (sp.copies() as usize) / b;
    let mut laws: Vec<HashMap<BlockState, f64>> = vec![HashMap::new(); inputs];
    let share = 1.0 / streams.len() as f64;
    let mut counts = vec![0u32; inputs * blocks];
    for &s in streams {
        let copies = cfg.copies(side, s, 1, sp.copies());
        counts.iter_mut().for_each(|c| *c = 0);
        for (j, &(m, e)) in copies.iter().enumerate() {
            for (u, w) in weights.iter().enumerate() {
                if e <= w[m] {
                    counts[u * blocks + j / b] += 1;
                }
            }
        }
        for u in 0..inputs {
            if weights[u].iter().all(|&w| w == 0) {
                continue;
            }
            let row = &counts[u * blocks..(u + 1) * blocks];
            let total: u32 = row.iter().sum();
            for (k, &c) in row.iter().enumerate() {
                let p = if total == 0 {
                    1.0 / blocks as f64
                } else if c == 0 {
                    continue;
                } else {
                    c as f64 / total as f64
                };
                *laws[u].entry(copies[k * b..(k + 1) * b].to_vec()).or_insert(0.0) += p * share;
            }
        }
    }
    laws
}

/// Exact planted-copy law with unrestricted randomness, for unit blocks.
fn planted_laws(cfg: &ProtocolConfig, side: usize) -> Vec<HashMap<BlockState, f64>> {
    let sp = cfg.sides[side];
    let weights = if side == 0 { &cfg.src.w } else { &cfg.src.v };
    let card = weights.first().map_or(1, |r| r.len());
    let k = cfg.src.k;
    weights
        .iter()
        .map(|w| {
            let mut law = HashMap::new();
            if w.iter().all(|&v| v == 0) {
                return law;
            }
            let miss = (1.0 - 1.0 / card as f64).powf(sp.copies() as f64);
            let rejected = (card as u64 * k) - k;
            for m in 0..card {
                for e in 1..=k {
                    let p = if e <= w[m] {
                        (1.0 - miss) / k as f64
                    } else if rejected > 0 {
                        miss / rejected as f64
                    } else {
                        0.0
                    };
                    if p > 0.0 {
                        law.insert(vec![(m, e)], p);
                    }
                }
            }
            law
        })
        .collect()
}

/// Half-l1 distance between the ideal law and the receiver's output when
/// the two signaled blocks follow the given per-input laws.
fn output_tv(cfg: &ProtocolConfig, first: &[HashMap<BlockState, f64>], second: &[HashMap<BlockState, f64>]) -> f64 {
    let base = &cfg.src.base;
    let [_, _, _, sm, sn] = cfg.src.tables.sizes;
    let xyz = base.marginal(&[X, Y, Z]).expect("task variables");
    let mut l1 = 0.0;
    for (t, q) in xyz.support() {
        let (x, y, z) = (t[0], t[1], t[2]);
        let pq = to_f64(q);
        let mut out = vec![0.0; sm * sn];
        for (s1, q1) in &first[x] {
            for (s2, q2) in &second[y] {
                let scan = cfg.scan_blocks(s1, s2, z);
                out[scan.m * sn + scan.n] += q1 * q2;
            }
        }
        for m in 0..sm {
            for n in 0..sn {
                let ideal = to_f64(base.prob(&[x, y, z, m, n]));
                l1 += (pq * out[m * sn + n] - ideal).abs();
            }
        }
    }
    0.5 * l1
}

/// Draws candidate lists of shared streams and returns the first whose
/// exact output law is within `baseline + 2 delta` of the ideal.
pub fn reduce_randomness(cfg: &ProtocolConfig, opts: &ReduceOptions) -> Result<ReducedProtocol> {
    let delta = &opts.delta;
    if !delta.is_positive() || *delta > one() {
        return Err(Error::InvalidParameter("delta must lie in (0, 1]".into()));
    }
    let cards = (cfg.src.m_card() * cfg.src.n_card()) as i64;
    let target = int(24 * cards) / num_traits::pow(delta.clone(), 3);
    let bit_limit = ceil_tol(numeric::log2(&target)).max(0) as u32;
    let list_size = opts
        .list_size
        .unwrap_or_else(|| target.ceil().to_integer().try_into().unwrap_or(u64::MAX));
    if list_size == 0 {
        return Err(Error::InvalidParameter("list size must be positive".into()));
    }
    let shared_bits = ceil_tol((list_size as f64).log2()).max(0) as u32;
    let unit = cfg.sides.iter().all(|s| s.block_size() == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (baseline, exact) = if unit {
        (output_tv(cfg, &planted_laws(cfg, 0), &planted_laws(cfg, 1)), true)
    } else {
        let refs: [Vec<u64>; 2] = [0, 1].map(|_| (0..opts.reference_streams).map(|_| rng.next_u64()).collect());
        (
            output_tv(cfg, &block_laws(cfg, 0, &refs[0]), &block_laws(cfg, 1, &refs[1])),
            false,
        )
    };
    let bound = baseline + 2.0 * to_f64(delta);
    let mut best: Option<(f64, [Vec<u64>; 2])> = None;
    let mut tried = 0;
    for _ in 0..opts.budget {
        tried += 1;
        let lists: [Vec<u64>; 2] = [0, 1].map(|_| (0..list_size).map(|_| rng.next_u64()).collect());
        let tv = output_tv(cfg, &block_laws(cfg, 0, &lists[0]), &block_laws(cfg, 1, &lists[1]));
        if best.as_ref().is_none_or(|(b, _)| tv < *b) {
            best = Some((tv, lists));
        }
        if best.as_ref().is_some_and(|(b, _)| *b <= bound) {
            break;
        }
    }
    let (tv, streams) = best.unwrap_or((f64::NAN, [Vec::new(), Vec::new()]));
    Ok(ReducedProtocol {
        list_size,
        shared_bits,
        bit_limit,
        baseline_tv: baseline,
        baseline_exact: exact,
        bound,
        found: tv <= bound,
        candidates_tried: tried,
        tv,
        streams,
    })
}

/// Error of the protocol restricted to the given stream lists.
pub fn reduced_output_tv(cfg: &ProtocolConfig, streams: &[Vec<u64>; 2]) -> f64 {
    output_tv(cfg, &block_laws(cfg, 0, &streams[0]), &block_laws(cfg, 1, &streams[1]))
}
