//! The two-sender protocol: each sender picks a planted index among shared
//! copies by convex split, sends the index's block number, and the receiver
//! scans the signaled block pair for the first point of the acceptance set.
//!
//! Shared copies are never stored. Copy `j` of a sender in trial `t` is the
//! `j`-th 64-bit word of a ChaCha8 stream keyed by the master seed and the
//! stream id `(t, party)`, so the receiver regenerates any block by seeking.

use std::io::Write;
use std::sync::Arc;

use num_traits::ToPrimitive;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::partition::required_multiple;
use crate::coding::{ExtendOptions, ExtendedSource, TestSetA, TestSetParams};
use crate::dist::{DistFile, JointDist, Var};
use crate::error::{Error, Result};
use crate::gen::{indicator_row, task_from_kernels};
use crate::info::{canonical, check_markov, RateEvent, TaskTables, M, N, X, Y, Z};
use crate::numeric::{self, ceil_tol, floor_tol, int, one, parse_rational, to_f64, zero, Prob};

/// Largest `log2` of the number of shared copies per sender.
pub const MAX_COPY_BITS: u32 = 24;

/// Bootstrap resamples used for confidence intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Streams reserved per trial: two copy streams, two private streams and
/// the input stream.
const STREAMS_PER_TRIAL: u64 = 8;
const INPUT_STREAM: u64 = 4;

/// Rate bookkeeping for one sender.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SideParams {
    pub rate: f64,
    /// `log2` of the block size.
    pub block_bits: u32,
    /// `log2` of the number of blocks, i.e. the message length.
    pub index_bits: u32,
    /// A sender with a one-symbol alphabet sends nothing.
    pub silent: bool,
}

impl SideParams {
    pub fn new(rate: f64, card: usize, delta: &Prob) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidParameter(format!("rate {rate} must be finite and nonnegative")));
        }
        if card == 1 {
            return Ok(SideParams {
                rate,
                block_bits: 0,
                index_bits: 0,
                silent: true,
            });
        }
        let block = floor_tol((card as f64).log2() - rate).max(0);
        let index = ceil_tol(rate + 2.0 * numeric::log2(&(int(3) / delta))).max(0);
        if block + index > MAX_COPY_BITS as i64 {
            return Err(Error::Budget(format!(
                "2^{} shared copies exceed the cap 2^{MAX_COPY_BITS}",
                block + index
            )));
        }
        Ok(SideParams {
            rate,
            block_bits: block as u32,
            index_bits: index as u32,
            silent: false,
        })
    }

    pub fn copies(&self) -> u64 {
        1 << (self.block_bits + self.index_bits)
    }

    pub fn block_size(&self) -> u64 {
        1 << self.block_bits
    }

    pub fn message_bits(&self) -> u32 {
        if self.silent {
            0
        } else {
            self.index_bits
        }
    }

    /// `ceil(rate + 3 log2(1/delta))`, the nominal message length.
    pub fn nominal_bits(&self, delta: &Prob) -> u32 {
        if self.silent {
            0
        } else {
            ceil_tol(self.rate - 3.0 * numeric::log2(delta)).max(0) as u32
        }
    }
}

/// Everything a run needs, shared read-only across trials.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub src: Arc<ExtendedSource>,
    pub test_set: Arc<TestSetA>,
    pub delta: Prob,
    pub sides: [SideParams; 2],
    pub seed: u64,
    inputs: Arc<InputSampler>,
}

#[derive(Debug)]
struct InputSampler {
    index: WeightedIndex<u64>,
    /// `(x, y, z)` per outcome of `index`.
    points: Vec<[usize; 3]>,
}

impl InputSampler {
    fn new(base: &JointDist) -> Result<Self> {
        let xyz = base.marginal(&[X, Y, Z])?;
        let sizes = xyz.sizes();
        let support: Vec<(Vec<usize>, Prob)> = xyz.support().map(|(t, p)| (t, p.clone())).collect();
        let lcm = numeric::lcm_all(support.iter().map(|(_, p)| p.denom()));
        let exact: Option<Vec<u64>> = lcm.to_u64().and_then(|_| {
            support
                .iter()
                .map(|(_, p)| (p * Prob::from_integer(lcm.clone())).to_integer().to_u64())
                .collect()
        });
        // fall back to 52-bit fixed point when the exact weights overflow
        let weights = exact.unwrap_or_else(|| {
            support
                .iter()
                .map(|(_, p)| ((to_f64(p) * (1u64 << 52) as f64).round() as u64).max(1))
                .collect()
        });
        let index = WeightedIndex::new(weights).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let _ = sizes;
        Ok(InputSampler {
            index,
            points: support.into_iter().map(|(t, _)| [t[0], t[1], t[2]]).collect(),
        })
    }
}

/// One sender's choice in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    /// Planted index, 1-based.
    pub index: u64,
    /// Message symbol of the planted copy.
    pub symbol: usize,
    /// Uniformizer value of the planted copy, 1-based.
    pub level: u64,
    /// Set when no copy was compatible with the input.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub j1: u64,
    pub j2: u64,
    /// Block numbers sent, 1-based.
    pub msg1: u64,
    pub msg2: u64,
    /// Index pair where the receiver stopped, if any.
    pub decoded: Option<(u64, u64)>,
    /// Receiver's output `(m', n')`.
    pub m_out: usize,
    pub n_out: usize,
    /// No pair of the block was accepted; the output is `(0, 0)`.
    pub fallback: bool,
    pub encoder_fallback: [bool; 2],
    /// Membership tests performed by the receiver.
    pub scans: u64,
    pub bits: u32,
}

/// Splits a word into a symbol below `card` and a level in `[1, k]`.
fn split_word(h: u64, card: usize, k: u64) -> (usize, u64) {
    let wide = h as u128 * card as u128;
    let symbol = (wide >> 64) as usize;
    let rest = wide as u64;
    let level = ((rest as u128 * k as u128) >> 64) as u64 + 1;
    (symbol, level)
}

impl ProtocolConfig {
    /// Builds the extension, the acceptance set and the rate bookkeeping.
    /// `K` is padded as the partition requires.
    pub fn from_dist(d: &JointDist, r1: f64, r2: f64, delta: &Prob, seed: u64, opts: &ExtendOptions) -> Result<Self> {
        let d = canonical(d)?;
        let max_card = d.size_of(M)?.max(d.size_of(N)?);
        let need = required_multiple(delta, max_card)?;
        let opts = ExtendOptions {
            k_multiple: num_integer::Integer::lcm(&need, &opts.k_multiple.max(1)),
            ..opts.clone()
        };
        let src = ExtendedSource::build(&d, &opts)?;
        let a = TestSetA::build(&src, &TestSetParams::new(r1, r2, delta.clone()))?;
        Self::new(Arc::new(src), Arc::new(a), seed)
    }

    pub fn new(src: Arc<ExtendedSource>, test_set: Arc<TestSetA>, seed: u64) -> Result<Self> {
        if test_set.k != src.k {
            return Err(Error::SchemaMismatch(format!(
                "acceptance set built for K = {} but the source has K = {}",
                test_set.k, src.k
            )));
        }
        let p = &test_set.params;
        let delta = p.delta.clone();
        let sides = [
            SideParams::new(p.r1, src.m_card(), &delta)?,
            SideParams::new(p.r2, src.n_card(), &delta)?,
        ];
        let inputs = Arc::new(InputSampler::new(&src.base)?);
        Ok(ProtocolConfig {
            src,
            test_set,
            delta,
            sides,
            seed,
            inputs,
        })
    }

    pub fn reseeded(&self, seed: u64) -> Self {
        ProtocolConfig { seed, ..self.clone() }
    }

    pub fn r1(&self) -> f64 {
        self.test_set.params.r1
    }

    pub fn r2(&self) -> f64 {
        self.test_set.params.r2
    }

    /// `1 - Pr[rate event]`, the smallest error parameter the rates admit.
    pub fn epsilon(&self) -> Prob {
        one() - &self.test_set.rate_event_mass
    }

    pub fn bits_per_trial(&self) -> u32 {
        self.sides.iter().map(|s| s.message_bits()).sum()
    }

    pub fn nominal_bits_per_trial(&self) -> u32 {
        self.sides.iter().map(|s| s.nominal_bits(&self.delta)).sum()
    }

    fn stream(&self, trial: u64, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial.wrapping_mul(STREAMS_PER_TRIAL).wrapping_add(id));
        rng
    }

    fn alphabet(&self, side: usize) -> usize {
        if side == 0 {
            self.src.m_card()
        } else {
            self.src.n_card()
        }
    }

    /// Shared copies `first..first+len` (1-based) of one sender.
    pub fn copies(&self, side: usize, trial: u64, first: u64, len: u64) -> Vec<(usize, u64)> {
        let mut rng = self.stream(trial, side as u64);
        rng.set_word_pos(2 * (first as u128 - 1));
        let card = self.alphabet(side);
        (0..len).map(|_| split_word(rng.next_u64(), card, self.src.k)).collect()
    }

    pub fn sample_inputs(&self, trial: u64) -> [usize; 3] {
        let mut rng = self.stream(trial, INPUT_STREAM);
        self.inputs.points[self.inputs.index.sample(&mut rng)]
    }

    /// A sender's convex-split choice: uniform over the copies compatible
    /// with its input.
    pub fn encode(&self, side: usize, trial: u64, input: usize) -> Encoded {
        let sp = &self.sides[side];
        let weights = if side == 0 { &self.src.w[input] } else { &self.src.v[input] };
        let mut shared = self.stream(trial, side as u64);
        let card = self.alphabet(side);
        let mut accepted = Vec::new();
        for j in 1..=sp.copies() {
            let (s, e) = split_word(shared.next_u64(), card, self.src.k);
            if e <= weights[s] {
                accepted.push((j, s, e));
            }
        }
        let mut private = self.stream(trial, 2 + side as u64);
        if accepted.is_empty() {
            let j = private.random_range(1..=sp.copies());
            let (s, e) = self.copies(side, trial, j, 1)[0];
            return Encoded {
                index: j,
                symbol: s,
                level: e,
                fallback: true,
            };
        }
        let (j, s, e) = accepted[private.random_range(0..accepted.len())];
        Encoded {
            index: j,
            symbol: s,
            level: e,
            fallback: false,
        }
    }

    /// The receiver's lexicographic scan of the signaled block pair.
    pub fn decode(&self, trial: u64, z: usize, msg1: u64, msg2: u64) -> (Option<(u64, u64)>, usize, usize, u64) {
        let [b1, b2] = [self.sides[0].block_size(), self.sides[1].block_size()];
        let start1 = (msg1 - 1) * b1 + 1;
        let start2 = (msg2 - 1) * b2 + 1;
        let first = self.copies(0, trial, start1, b1);
        let second = self.copies(1, trial, start2, b2);
        let scan = self.scan_blocks(&first, &second, z);
        let decoded = scan.hit.map(|(a, b)| (start1 + a as u64, start2 + b as u64));
        (decoded, scan.m, scan.n, scan.tests)
    }

    /// First pair of the two blocks, in lexicographic order, whose copies
    /// lie in the acceptance set.
    pub fn scan_blocks(&self, first: &[(usize, u64)], second: &[(usize, u64)], z: usize) -> BlockScan {
        let mut tests = 0;
        for (a, &(m, e)) in first.iter().enumerate() {
            for (b, &(n, f)) in second.iter().enumerate() {
                tests += 1;
                if self.test_set.contains(m, n, z, e, f) {
                    return BlockScan {
                        hit: Some((a, b)),
                        m,
                        n,
                        tests,
                    };
                }
            }
        }
        BlockScan {
            hit: None,
            m: 0,
            n: 0,
            tests,
        }
    }
}

/// Result of scanning a block pair; `(m, n)` is `(0, 0)` without a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockScan {
    /// Offsets within the two blocks.
    pub hit: Option<(usize, usize)>,
    pub m: usize,
    pub n: usize,
    pub tests: u64,
}

pub fn run_trial(cfg: &ProtocolConfig, trial: u64) -> TrialOutcome {
    let [x, y, z] = cfg.sample_inputs(trial);
    let first = cfg.encode(0, trial, x);
    let second = cfg.encode(1, trial, y);
    let msg1 = ((first.index - 1) >> cfg.sides[0].block_bits) + 1;
    let msg2 = ((second.index - 1) >> cfg.sides[1].block_bits) + 1;
    let (decoded, m_out, n_out, scans) = cfg.decode(trial, z, msg1, msg2);
    TrialOutcome {
        trial,
        x,
        y,
        z,
        j1: first.index,
        j2: second.index,
        msg1,
        msg2,
        decoded,
        m_out,
        n_out,
        fallback: decoded.is_none(),
        encoder_fallback: [first.fallback, second.fallback],
        scans,
        bits: cfg.bits_per_trial(),
    }
}

/// Runs trials `0..trials` in order.
pub fn run_trials(cfg: &ProtocolConfig, trials: u64) -> Vec<TrialOutcome> {
    (0..trials).into_par_iter().map(|t| run_trial(cfg, t)).collect()
}

/// Streams the transcript of trials `0..trials` as JSON lines.
pub fn write_transcript(cfg: &ProtocolConfig, trials: u64, mut out: impl Write) -> std::io::Result<()> {
    for t in 0..trials {
        let line = serde_json::to_string(&run_trial(cfg, t)).expect("serializable");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Counts over `(x, y, z, m', n')`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalJoint {
    pub sizes: [usize; 5],
    pub counts: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
}

impl EmpiricalJoint {
    pub fn new(sizes: [usize; 5], seed: u64) -> Self {
        EmpiricalJoint {
            sizes,
            counts: vec![0; sizes.iter().product()],
            trials: 0,
            seed,
        }
    }

    fn flat(&self, t: [usize; 5]) -> usize {
        t.iter().zip(&self.sizes).fold(0, |acc, (&v, &s)| acc * s + v)
    }

    fn tuple(&self, mut i: usize) -> [usize; 5] {
        let mut t = [0; 5];
        for k in (0..5).rev() {
            t[k] = i % self.sizes[k];
            i /= self.sizes[k];
        }
        t
    }

    pub fn record(&mut self, t: [usize; 5]) {
        let i = self.flat(t);
        self.counts[i] += 1;
        self.trials += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalJoint) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.trials += other.trials;
    }

    pub fn count(&self, t: [usize; 5]) -> u64 {
        self.counts[self.flat(t)]
    }

    /// Empirical frequency of an event over `(x, y, z, m', n')`.
    pub fn frequency(&self, pred: impl Fn([usize; 5]) -> bool) -> f64 {
        event_frequency(self, &self.counts, &pred)
    }

    /// Half-l1 distance between the empirical law and a canonical task
    /// instance.
    pub fn tv_to(&self, ideal: &JointDist) -> Result<f64> {
        let p = ideal_table(self, ideal)?;
        Ok(tv_of_counts(&self.counts, self.trials, &p))
    }

    /// One row per cell: `x,y,z,m,n,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,m,n,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let t = self.tuple(i);
            s.push_str(&format!("{},{},{},{},{},{c}\n", t[0], t[1], t[2], t[3], t[4]));
        }
        s
    }
}

fn ideal_table(emp: &EmpiricalJoint, ideal: &JointDist) -> Result<Vec<f64>> {
    let d = canonical(ideal)?;
    let s = d.sizes();
    if s[..] != emp.sizes[..] {
        return Err(Error::SchemaMismatch(format!("alphabet sizes {s:?} vs {:?}", emp.sizes)));
    }
    Ok(d.probs().iter().map(to_f64).collect())
}

fn tv_of_counts(counts: &[u64], total: u64, p: &[f64]) -> f64 {
    if total == 0 {
        return f64::NAN;
    }
    let t = total as f64;
    0.5 * counts.iter().zip(p).map(|(&c, &q)| (c as f64 / t - q).abs()).sum::<f64>()
}

fn event_frequency(emp: &EmpiricalJoint, counts: &[u64], pred: &dyn Fn([usize; 5]) -> bool) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return f64::NAN;
    }
    let hit: u64 = counts
        .iter()
        .enumerate()
        .filter(|(i, _)| pred(emp.tuple(*i)))
        .map(|(_, &c)| c)
        .sum();
    hit as f64 / total as f64
}

/// Percentile interval of a statistic over multinomial resamples of the
/// counts.
pub fn bootstrap_ci(counts: &[u64], stat: impl Fn(&[u64]) -> f64, resamples: usize, seed: u64) -> [f64; 2] {
    let total: u64 = counts.iter().sum();
    if total == 0 || resamples == 0 {
        return [f64::NAN, f64::NAN];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut left = total;
            let mut mass = 1.0f64;
            let sample: Vec<u64> = counts
                .iter()
                .map(|&c| {
                    if left == 0 || c == 0 {
                        return 0;
                    }
                    let p = c as f64 / total as f64;
                    let k = if p >= mass {
                        left
                    } else {
                        Binomial::new(left, (p / mass).clamp(0.0, 1.0))
                            .expect("valid binomial")
                            .sample(&mut rng)
                    };
                    left -= k;
                    mass -= p;
                    k
                })
                .collect();
            stat(&sample)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let at = |q: f64| values[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    [at(0.025), at(0.975)]
}

#[derive(Debug, Clone, Default)]
struct Tally {
    counts: Vec<u64>,
    decode_fallbacks: u64,
    encoder_fallbacks: u64,
    scans: u64,
    trials: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        if self.counts.is_empty() {
            return o;
        }
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        self.decode_fallbacks += o.decode_fallbacks;
        self.encoder_fallbacks += o.encoder_fallbacks;
        self.scans += o.scans;
        self.trials += o.trials;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub seed: u64,
    pub r1: f64,
    pub r2: f64,
    #[serde(with = "numeric::serde_rational")]
    pub delta: Prob,
    pub k: u64,
    /// Plug-in half-l1 distance between the empirical and ideal laws.
    pub tv_estimate: f64,
    pub ci95: [f64; 2],
    /// `1 - Pr[rate event]`.
    pub epsilon: f64,
    pub bound_eps_8delta: f64,
    pub bound_eps_10delta: f64,
    /// Upper confidence limit within the respective bound.
    pub within_8delta: bool,
    pub within_10delta: bool,
    pub decode_fallbacks: u64,
    pub encoder_fallbacks: u64,
    pub mean_scans: f64,
    pub bits_per_trial: u32,
    pub nominal_bits_per_trial: u32,
    pub perturbation_tv: f64,
    pub joint: EmpiricalJoint,
}

/// Runs `trials` trials and compares the receiver's joint law with the
/// ideal one.
pub fn estimate_error(cfg: &ProtocolConfig, trials: u64, seed: u64) -> ErrorEstimate {
    let cfg = cfg.reseeded(seed);
    let sizes = cfg.src.tables.sizes;
    let cells: usize = sizes.iter().product();
    let tally = (0..trials)
        .into_par_iter()
        .fold(Tally::default, |mut t, i| {
            if t.counts.is_empty() {
                t.counts = vec![0; cells];
            }
            let o = run_trial(&cfg, i);
            let flat = [o.x, o.y, o.z, o.m_out, o.n_out]
                .iter()
                .zip(&sizes)
                .fold(0, |acc, (&v, &s)| acc * s + v);
            t.counts[flat] += 1;
            t.decode_fallbacks += o.fallback as u64;
            t.encoder_fallbacks += o.encoder_fallback.iter().filter(|&&b| b).count() as u64;
            t.scans += o.scans;
            t.trials += 1;
            t
        })
        .reduce(Tally::default, Tally::merge);
    let mut joint = EmpiricalJoint::new(sizes, seed);
    if !tally.counts.is_empty() {
        joint.counts = tally.counts;
    }
    joint.trials = tally.trials;
    let p: Vec<f64> = cfg.src.base.probs().iter().map(to_f64).collect();
    let tv = tv_of_counts(&joint.counts, joint.trials, &p);
    let ci = bootstrap_ci(
        &joint.counts,
        |c| tv_of_counts(c, c.iter().sum(), &p),
        BOOTSTRAP_RESAMPLES,
        seed ^ 0x5eed,
    );
    let eps = to_f64(&cfg.epsilon());
    let d = to_f64(&cfg.delta);
    let b8 = eps + 8.0 * d;
    let b10 = eps + 10.0 * d;
    ErrorEstimate {
        trials,
        seed,
        r1: cfg.r1(),
        r2: cfg.r2(),
        delta: cfg.delta.clone(),
        k: cfg.src.k,
        tv_estimate: tv,
        ci95: ci,
        epsilon: eps,
        bound_eps_8delta: b8,
        bound_eps_10delta: b10,
        within_8delta: ci[1] <= b8,
        within_10delta: ci[1] <= b10,
        decode_fallbacks: tally.decode_fallbacks,
        encoder_fallbacks: tally.encoder_fallbacks,
        mean_scans: if trials > 0 { tally.scans as f64 / trials as f64 } else { 0.0 },
        bits_per_trial: cfg.bits_per_trial(),
        nominal_bits_per_trial: cfg.nominal_bits_per_trial(),
        perturbation_tv: to_f64(&cfg.src.perturbation_tv),
        joint,
    }
}

/// Frequency of an event with its bootstrap interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventEstimate {
    pub value: f64,
    pub ci95: [f64; 2],
}

pub fn estimate_event(joint: &EmpiricalJoint, pred: impl Fn([usize; 5]) -> bool, seed: u64) -> EventEstimate {
    let value = joint.frequency(&pred);
    let ci95 = bootstrap_ci(
        &joint.counts,
        |c| event_frequency(joint, c, &pred),
        BOOTSTRAP_RESAMPLES,
        seed,
    );
    EventEstimate { value, ci95 }
}

/// Identity kernel of an alphabet.
fn copy_kernel(size: usize) -> Vec<Vec<Prob>> {
    (0..size).map(|i| indicator_row(size, i)).collect()
}

/// Task instance for reproducing `(X, Y)`: `M` copies `X`, `N` copies `Y`,
/// no side information. The input's first two variables play `X` and `Y`.
pub fn dsc_instance(d_xy: &JointDist) -> Result<JointDist> {
    if d_xy.vars().len() != 2 {
        return Err(Error::SchemaMismatch("expected exactly two variables".into()));
    }
    let s = d_xy.sizes();
    let xy = JointDist::new(vec![Var::new(X, s[0]), Var::new(Y, s[1])], d_xy.probs().to_vec())?;
    let xyz = xy.extend(Z, 1, |_| vec![one()])?;
    task_from_kernels(&xyz, s[0], &copy_kernel(s[0]), s[1], &copy_kernel(s[1]))
}

pub fn specialize_dsc(d_xy: &JointDist, r1: f64, r2: f64, delta: &Prob, seed: u64) -> Result<ProtocolConfig> {
    ProtocolConfig::from_dist(&dsc_instance(d_xy)?, r1, r2, delta, seed, &ExtendOptions::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DscReport {
    /// Empirical `Pr[(X, Y) != (X', Y')]`.
    pub mismatch: EventEstimate,
    pub epsilon: f64,
    pub bound_eps_8delta: f64,
    pub within_bound: bool,
    pub estimate: ErrorEstimate,
}

pub fn dsc_mismatch(cfg: &ProtocolConfig, trials: u64, seed: u64) -> DscReport {
    let estimate = estimate_error(cfg, trials, seed);
    let mismatch = estimate_event(&estimate.joint, |t| t[0] != t[3] || t[1] != t[4], seed ^ 0xd5c);
    let bound = estimate.bound_eps_8delta;
    DscReport {
        within_bound: mismatch.ci95[0] <= bound && mismatch.value <= bound,
        epsilon: estimate.epsilon,
        bound_eps_8delta: bound,
        mismatch,
        estimate,
    }
}

/// Task instance with `Y` and `N` trivial, from a law over `X, M, Z`
/// (matched by name).
pub fn task_b_instance(d_xmz: &JointDist) -> Result<JointDist> {
    let d = d_xmz.reorder(&[X, M, Z])?;
    if !d.is_markov(&[M], &[X], &[Z])? {
        return Err(Error::MarkovViolation("M - X - Z".into()));
    }
    let d = d.extend(Y, 1, |_| vec![one()])?;
    let d = d.extend(N, 1, |_| vec![one()])?;
    canonical(&d)
}

/// Smallest rate on the grid `step * k` whose one-sender event (with the
/// silent side at `log2(1/delta)`) has mass at least `1 - epsilon`.
pub fn task_b_minimal_rate(
    d_xmz: &JointDist,
    delta: &Prob,
    epsilon: &Prob,
    step: f64,
    max_rate: f64,
) -> Result<Option<f64>> {
    let d = task_b_instance(d_xmz)?;
    let tables = TaskTables::build(&d)?;
    let r2 = -numeric::log2(delta);
    let mut k = 0u32;
    loop {
        let r = step * k as f64;
        if r > max_rate {
            return Ok(None);
        }
        let ev = RateEvent::achievability(r, r2, delta, tables.max_card(), crate::info::DEFAULT_JOINT_POWER);
        if ev.mass(&d, &tables)? >= one() - epsilon {
            return Ok(Some(r));
        }
        k += 1;
    }
}

/// One-sender specialization. The silent side's rate is `log2(1/delta)`,
/// which makes its threshold and acceptance interval vacuous.
pub fn specialize_task_b(d_xmz: &JointDist, r: f64, delta: &Prob, seed: u64) -> Result<ProtocolConfig> {
    let d = task_b_instance(d_xmz)?;
    let r2 = -numeric::log2(delta);
    ProtocolConfig::from_dist(&d, r, r2, delta, seed, &ExtendOptions::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchCheck {
    #[serde(with = "numeric::serde_rational")]
    pub pr_mismatch: Prob,
    #[serde(with = "numeric::serde_rational")]
    pub tv_to_ideal: Prob,
    pub ok: bool,
}

/// Compares a law over `(Y, X, X')` (by position) with the ideal law where
/// `X'` copies `X`.
pub fn sch_equivalence_check(d_yxx: &JointDist) -> Result<SchCheck> {
    let s = d_yxx.sizes();
    if s.len() != 3 {
        return Err(Error::SchemaMismatch("expected variables (Y, X, X')".into()));
    }
    if s[1] != s[2] {
        return Err(Error::SchemaMismatch(format!("X has {} symbols but X' has {}", s[1], s[2])));
    }
    let mut yx = vec![zero(); s[0] * s[1]];
    let mut pr = zero();
    for (t, p) in d_yxx.support() {
        yx[t[0] * s[1] + t[1]] += p;
        if t[1] != t[2] {
            pr += p;
        }
    }
    let ideal = JointDist::from_fn(d_yxx.vars().to_vec(), |t| {
        if t[1] == t[2] {
            yx[t[0] * s[1] + t[1]].clone()
        } else {
            zero()
        }
    })?;
    let tv = d_yxx.tv_half(&ideal)?;
    Ok(SchCheck {
        ok: tv <= int(4) * &pr,
        pr_mismatch: pr,
        tv_to_ideal: tv,
    })
}

/// A lossy reproduction task: a source, two auxiliary kernels, a decoding
/// map `(m, n, z) -> (x', y')` and a distortion over `(x, y, x', y')`.
#[derive(Debug, Clone)]
pub struct LossyTask {
    pub xyz: JointDist,
    pub m_card: usize,
    pub m_kernel: Vec<Vec<Prob>>,
    pub n_card: usize,
    pub n_kernel: Vec<Vec<Prob>>,
    /// Indexed by `(m * |N| + n) * |Z| + z`.
    pub decode: Vec<(usize, usize)>,
    /// Reconstruction alphabet sizes.
    pub recon: (usize, usize),
    /// Indexed by `((x * |Y| + y) * |X'| + x') * |Y'| + y'`.
    pub distortion: Vec<f64>,
    pub k: f64,
}

impl LossyTask {
    fn sizes(&self) -> Result<[usize; 3]> {
        Ok([self.xyz.size_of(X)?, self.xyz.size_of(Y)?, self.xyz.size_of(Z)?])
    }

    pub fn instance(&self) -> Result<JointDist> {
        let d = task_from_kernels(
            &self.xyz.reorder(&[X, Y, Z])?,
            self.m_card,
            &self.m_kernel,
            self.n_card,
            &self.n_kernel,
        )?;
        canonical(&d)
    }

    fn validate(&self) -> Result<()> {
        let [sx, sy, sz] = self.sizes()?;
        if !(self.k > 0.0) {
            return Err(Error::InvalidParameter("distortion threshold k must be positive".into()));
        }
        if self.decode.len() != self.m_card * self.n_card * sz {
            return Err(Error::SchemaMismatch(format!(
                "decoding map has {} entries, expected {}",
                self.decode.len(),
                self.m_card * self.n_card * sz
            )));
        }
        if self.decode.iter().any(|&(a, b)| a >= self.recon.0 || b >= self.recon.1) {
            return Err(Error::InvalidParameter("decoding map leaves the reconstruction alphabet".into()));
        }
        if self.distortion.len() != sx * sy * self.recon.0 * self.recon.1 {
            return Err(Error::SchemaMismatch("distortion table has the wrong length".into()));
        }
        Ok(())
    }

    /// `d(x, y, f(m, n, z))`.
    pub fn distortion_at(&self, x: usize, y: usize, z: usize, m: usize, n: usize) -> f64 {
        let sz = self.xyz.size_of(Z).unwrap_or(1);
        let sy = self.xyz.size_of(Y).unwrap_or(1);
        let (a, b) = self.decode[(m * self.n_card + n) * sz + z];
        self.distortion[((x * sy + y) * self.recon.0 + a) * self.recon.1 + b]
    }

    /// Exact `Pr[d(XY, f(MNZ)) >= k]` on the ideal joint.
    pub fn ideal_error(&self) -> Result<Prob> {
        self.validate()?;
        let d = self.instance()?;
        Ok(d.mass_where(|t| self.distortion_at(t[0], t[1], t[2], t[3], t[4]) >= self.k))
    }
}

/// Hamming distortion `[x != x'] + [y != y']` with reconstruction
/// alphabets equal to the source alphabets.
pub fn hamming_distortion(sx: usize, sy: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(sx * sy * sx * sy);
    for x in 0..sx {
        for y in 0..sy {
            for a in 0..sx {
                for b in 0..sy {
                    out.push((x != a) as u8 as f64 + (y != b) as u8 as f64);
                }
            }
        }
    }
    out
}

/// Serialized form of a [`LossyTask`]; a missing distortion table means
/// Hamming distortion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossyTaskFile {
    pub xyz: DistFile,
    pub m_kernel: Vec<Vec<String>>,
    pub n_kernel: Vec<Vec<String>>,
    pub decode: Vec<(usize, usize)>,
    #[serde(default)]
    pub recon: Option<(usize, usize)>,
    #[serde(default)]
    pub distortion: Option<Vec<f64>>,
    pub k: f64,
}

impl LossyTaskFile {
    pub fn into_task(self, normalize: bool) -> Result<LossyTask> {
        let xyz = self.xyz.into_dist(normalize)?;
        let parse = |rows: Vec<Vec<String>>| -> Result<Vec<Vec<Prob>>> {
            rows.iter()
                .map(|r| r.iter().map(|s| parse_rational(s)).collect())
                .collect()
        };
        let m_kernel = parse(self.m_kernel)?;
        let n_kernel = parse(self.n_kernel)?;
        let sx = xyz.size_of(X)?;
        let sy = xyz.size_of(Y)?;
        let recon = self.recon.unwrap_or((sx, sy));
        let distortion = match self.distortion {
            Some(t) => t,
            None if recon == (sx, sy) => hamming_distortion(sx, sy),
            None => {
                return Err(Error::InvalidParameter(
                    "Hamming distortion needs reconstruction alphabets equal to X and Y".into(),
                ))
            }
        };
        Ok(LossyTask {
            m_card: m_kernel.first().map_or(0, |r| r.len()),
            n_card: n_kernel.first().map_or(0, |r| r.len()),
            xyz,
            m_kernel,
            n_kernel,
            decode: self.decode,
            recon,
            distortion,
            k: self.k,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossyReport {
    /// Exact `Pr[d >= k]` without communication constraints.
    pub ideal_epsilon: f64,
    /// Mass of the rate event at `delta'`.
    pub hypothesis_mass: f64,
    /// `hypothesis_mass >= 1 - delta`.
    pub hypothesis_holds: bool,
    pub pr_distortion_exceeds: EventEstimate,
    /// `eps + delta + 8 delta'`.
    pub bound: f64,
    /// `eps + delta + 10 delta'`.
    pub bound_10: f64,
    pub within_bound: bool,
    pub estimate: ErrorEstimate,
}

/// Runs the protocol on the auxiliary instance, applies the decoding map
/// to the receiver's output and estimates the distortion tail.
#[allow(clippy::too_many_arguments)]
pub fn lossy_achieve(
    task: &LossyTask,
    r1: f64,
    r2: f64,
    delta: &Prob,
    delta_prime: &Prob,
    trials: u64,
    seed: u64,
) -> Result<LossyReport> {
    let eps = task.ideal_error()?;
    let d = task.instance()?;
    check_markov(&d)?;
    let cfg = ProtocolConfig::from_dist(&d, r1, r2, delta_prime, seed, &ExtendOptions::default())?;
    let tables = TaskTables::build(&d)?;
    let ev = RateEvent::achievability(r1, r2, delta_prime, tables.max_card(), crate::info::DEFAULT_JOINT_POWER);
    let mass = ev.mass(&d, &tables)?;
    let estimate = estimate_error(&cfg, trials, seed);
    let pr = estimate_event(
        &estimate.joint,
        |t| task.distortion_at(t[0], t[1], t[2], t[3], t[4]) >= task.k,
        seed ^ 0x1055,
    );
    let base = to_f64(&eps) + to_f64(delta);
    let dp = to_f64(delta_prime);
    let bound = base + 8.0 * dp;
    Ok(LossyReport {
        ideal_epsilon: to_f64(&eps),
        hypothesis_holds: mass >= one() - delta,
        hypothesis_mass: to_f64(&mass),
        within_bound: pr.ci95[0] <= bound && pr.value <= bound,
        pr_distortion_exceeds: pr,
        bound,
        bound_10: base + 10.0 * dp,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;

    fn noisy_pair() -> JointDist {
        // X, Y uniform independent bits; M, N flip with probability 1/4
        let xyz = JointDist::uniform(vec![Var::new(X, 2), Var::new(Y, 2), Var::new(Z, 1)]).unwrap();
        let k = vec![vec![rat(3, 4), rat(1, 4)], vec![rat(1, 4), rat(3, 4)]];
        task_from_kernels(&xyz, 2, &k, 2, &k).unwrap()
    }

    fn constants() -> JointDist {
        let xyz = JointDist::uniform(vec![Var::new(X, 2), Var::new(Y, 3), Var::new(Z, 2)]).unwrap();
        task_from_kernels(&xyz, 1, &[vec![one()], vec![one()]], 1, &vec![vec![one()]; 3]).unwrap()
    }

    #[test]
    fn side_params_follow_the_rate_split() {
        let d = rat(1, 4);
        let s = SideParams::new(6.0, 2, &d).unwrap();
        // 6 + 2 log2 12 = 13.17 rounds up to 14; 2 symbols need no block
        assert_eq!((s.block_bits, s.index_bits), (0, 14));
        assert_eq!(s.nominal_bits(&d), 12);
        let wide = SideParams::new(1.0, 16, &d).unwrap();
        assert_eq!(wide.block_bits, 3);
        assert_eq!(wide.copies(), 1 << (3 + 9));
        assert!(SideParams::new(1.0, 1, &d).unwrap().silent);
        assert!(matches!(SideParams::new(30.0, 4, &d), Err(Error::Budget(_))));
    }

    #[test]
    fn seeking_reproduces_sequential_copies() {
        let cfg = ProtocolConfig::from_dist(&noisy_pair(), 3.0, 3.0, &rat(1, 4), 7, &ExtendOptions::default()).unwrap();
        let all = cfg.copies(0, 5, 1, 64);
        let tail = cfg.copies(0, 5, 33, 32);
        assert_eq!(&all[32..], &tail[..]);
        assert!(all.iter().all(|&(m, e)| m < 2 && (1..=cfg.src.k).contains(&e)));
        assert_ne!(cfg.copies(0, 6, 1, 64), all);
        assert_ne!(cfg.copies(1, 5, 1, 64), all);
    }

    #[test]
    fn constants_decode_on_the_first_test() {
        // the joint threshold needs R1 + R2 >= 4 log2(1/delta) + log2 log2(1/delta)
        let cfg = ProtocolConfig::from_dist(&constants(), 5.0, 5.0, &rat(1, 4), 1, &ExtendOptions::default()).unwrap();
        assert_eq!(cfg.epsilon(), zero());
        for t in 0..200 {
            let o = run_trial(&cfg, t);
            assert_eq!(o.scans, 1);
            // a rejected pair falls back to (0, 0), which is the constant
            assert_eq!((o.m_out, o.n_out), (0, 0));
            assert_eq!(o.bits, 0);
        }
        let est = estimate_error(&cfg, 4000, 3);
        // rejections happen only inside the corner cell, of mass 1/16
        assert!(est.decode_fallbacks < 4000 / 10);
        // only the input sampling noise remains
        assert!(est.tv_estimate < 0.05, "{}", est.tv_estimate);
    }

    #[test]
    fn blocks_contain_the_planted_index() {
        let xyz = JointDist::uniform(vec![Var::new(X, 4), Var::new(Y, 1), Var::new(Z, 1)]).unwrap();
        let mk: Vec<Vec<Prob>> = (0..4).map(|x| indicator_row(4, x)).collect();
        let d = task_from_kernels(&xyz, 4, &mk, 1, &[vec![one()]]).unwrap();
        let cfg = ProtocolConfig::from_dist(&d, 0.5, 2.0, &rat(1, 4), 11, &ExtendOptions::default()).unwrap();
        assert_eq!(cfg.sides[0].block_bits, 1);
        for t in 0..300 {
            let o = run_trial(&cfg, t);
            let b = cfg.sides[0].block_size();
            assert!((o.msg1 - 1) * b < o.j1 && o.j1 <= o.msg1 * b);
            if let Some((a, _)) = o.decoded {
                assert!((o.msg1 - 1) * b < a && a <= o.msg1 * b);
            }
            assert_eq!(o.fallback, o.decoded.is_none());
            assert!(o.scans <= b);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ProtocolConfig::from_dist(&noisy_pair(), 3.0, 3.0, &rat(1, 4), 99, &ExtendOptions::default()).unwrap();
        let a = run_trials(&cfg, 50);
        let b: Vec<TrialOutcome> = (0..50).map(|t| run_trial(&cfg, t)).collect();
        assert_eq!(a, b);
        let e1 = estimate_error(&cfg, 500, 4);
        let e2 = estimate_error(&cfg, 500, 4);
        assert_eq!(e1.joint, e2.joint);
        assert_eq!(e1.ci95, e2.ci95);
    }

    #[test]
    fn encoder_marginal_matches_the_conditional() {
        let cfg = ProtocolConfig::from_dist(&noisy_pair(), 2.0, 2.0, &rat(1, 4), 5, &ExtendOptions::default()).unwrap();
        let trials = 4000;
        let k = cfg.src.k;
        let mut hits = vec![0u64; 2 * k as usize];
        for t in 0..trials {
            let enc = cfg.encode(0, t, 0);
            assert!(!enc.fallback);
            hits[enc.symbol * k as usize + enc.level as usize - 1] += 1;
        }
        for m in 0..2 {
            for e in 1..=k {
                let p = to_f64(&cfg.src.e_given_mx(e, m, 0)) * to_f64(&cfg.src.tables.m_given_x[0][m]);
                let obs = hits[m * k as usize + e as usize - 1] as f64 / trials as f64;
                let sd = (p * (1.0 - p) / trials as f64).sqrt();
                assert!((obs - p).abs() <= 3.0 * sd + 1e-9, "m={m} e={e} obs={obs} p={p}");
            }
        }
    }

    #[test]
    fn empirical_joint_counts_and_csv() {
        let mut j = EmpiricalJoint::new([2, 1, 1, 2, 1], 0);
        j.record([0, 0, 0, 0, 0]);
        j.record([1, 0, 0, 0, 0]);
        j.record([1, 0, 0, 1, 0]);
        assert_eq!(j.trials, 3);
        assert_eq!(j.counts.iter().sum::<u64>(), 3);
        assert_eq!(j.count([1, 0, 0, 0, 0]), 1);
        assert!((j.frequency(|t| t[0] != t[3]) - 1.0 / 3.0).abs() < 1e-12);
        let csv = j.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("1,0,0,1,0,1"));
    }

    #[test]
    fn bootstrap_interval_brackets_a_fixed_frequency() {
        let counts = vec![250u64, 750];
        let ci = bootstrap_ci(&counts, |c| c[0] as f64 / c.iter().sum::<u64>() as f64, 200, 1);
        assert!(ci[0] < 0.25 && 0.25 < ci[1], "{ci:?}");
        assert!(ci[1] - ci[0] < 0.1);
    }

    #[test]
    fn sch_tv_equals_the_mismatch_probability() {
        let vars = vec![Var::new("Y", 2), Var::new("X", 2), Var::new("Xp", 2)];
        let same = JointDist::from_fn(vars.clone(), |t| if t[1] == t[2] { rat(1, 4) } else { zero() }).unwrap();
        let r = sch_equivalence_check(&same).unwrap();
        assert_eq!((r.pr_mismatch.clone(), r.tv_to_ideal.clone()), (zero(), zero()));
        let indep = JointDist::uniform(vars).unwrap();
        let r = sch_equivalence_check(&indep).unwrap();
        assert_eq!(r.pr_mismatch, rat(1, 2));
        assert_eq!(r.tv_to_ideal, rat(1, 2));
        assert!(r.ok);
        let bad = JointDist::uniform(vec![Var::new("Y", 2), Var::new("X", 2), Var::new("Xp", 3)]).unwrap();
        assert!(sch_equivalence_check(&bad).is_err());
    }

    #[test]
    fn task_b_silences_the_trivial_side() {
        let xz = JointDist::from_fn(vec![Var::new(X, 2), Var::new(Z, 2)], |t| {
            if t[0] == t[1] {
                rat(1, 2)
            } else {
                zero()
            }
        })
        .unwrap();
        let d = xz.extend(M, 2, |t| indicator_row(2, t[0])).unwrap();
        // delta^3 2^R >= log2(2 / delta) needs R >= 8
        let cfg = specialize_task_b(&d, 8.0, &rat(1, 4), 3).unwrap();
        assert_eq!(cfg.epsilon(), zero());
        assert!(cfg.sides[1].silent);
        assert_eq!(cfg.bits_per_trial(), cfg.sides[0].index_bits);
        let est = estimate_error(&cfg, 3000, 8);
        assert!(est.decode_fallbacks < 3000 / 10);
        assert!(est.tv_estimate < 0.1, "{}", est.tv_estimate);
        // M - X - Z violated when M copies Z through a noisy X
        let xz = JointDist::uniform(vec![Var::new(X, 2), Var::new(Z, 2)]).unwrap();
        let bad = xz.extend(M, 2, |t| indicator_row(2, t[1])).unwrap();
        assert!(matches!(task_b_instance(&bad), Err(Error::MarkovViolation(_))));
    }

    #[test]
    fn dsc_instance_copies_both_sources() {
        let xy = JointDist::from_fn(vec![Var::new("A", 2), Var::new("B", 2)], |t| {
            if t[0] == t[1] {
                rat(1, 2)
            } else {
                zero()
            }
        })
        .unwrap();
        let d = dsc_instance(&xy).unwrap();
        assert!(d.is_markov(&[M], &[X], &[Y, Z, N]).unwrap());
        assert_eq!(d.mass_where(|t| t[0] != t[3] || t[1] != t[4]), zero());
    }

    #[test]
    fn lossy_zero_distortion_never_exceeds() {
        let xyz = JointDist::uniform(vec![Var::new(X, 2), Var::new(Y, 1), Var::new(Z, 1)]).unwrap();
        let task = LossyTask {
            xyz,
            m_card: 1,
            m_kernel: vec![vec![one()]; 2],
            n_card: 1,
            n_kernel: vec![vec![one()]],
            decode: vec![(0, 0)],
            recon: (2, 1),
            distortion: vec![0.0; 4],
            k: 1.0,
        };
        assert_eq!(task.ideal_error().unwrap(), zero());
        let r = lossy_achieve(&task, 1.0, 1.0, &rat(1, 10), &rat(1, 4), 500, 1).unwrap();
        assert_eq!(r.pr_distortion_exceeds.value, 0.0);
        assert!(r.within_bound);
        let bad = LossyTask { k: 0.0, ..task };
        assert!(matches!(bad.ideal_error(), Err(Error::InvalidParameter(_))));
    }
}
