//! Random instance generators for property batteries and benchmarks.
//!
//! All generators draw small integer weights so that every probability is an
//! exact rational with a modest denominator.

use rand::Rng;

use crate::dist::{JointDist, Var};
use crate::info::{M, N, X, Y, Z};
use crate::numeric::{int, one, zero, Prob};

/// Random distribution over `vars` with integer weights in `0..=max_weight`
/// (at least one positive), normalized.
pub fn random_dist<R: Rng>(rng: &mut R, vars: Vec<Var>, max_weight: u32, zero_prob: f64) -> JointDist {
    let n: usize = vars.iter().map(|v| v.size).product();
    loop {
        let w: Vec<Prob> = (0..n)
            .map(|_| {
                if rng.random_bool(zero_prob) {
                    zero()
                } else {
                    int(rng.random_range(1..=max_weight as i64))
                }
            })
            .collect();
        if let Ok(d) = JointDist::normalized(vars.clone(), w) {
            return d;
        }
    }
}

/// Random probability vector of length `k` with weights in `1..=max_weight`,
/// optionally zeroing entries (at least one stays positive).
pub fn random_row<R: Rng>(rng: &mut R, k: usize, max_weight: u32, zero_prob: f64) -> Vec<Prob> {
    loop {
        let w: Vec<i64> = (0..k)
            .map(|_| {
                if rng.random_bool(zero_prob) {
                    0
                } else {
                    rng.random_range(1..=max_weight as i64)
                }
            })
            .collect();
        let s: i64 = w.iter().sum();
        if s > 0 {
            return w.into_iter().map(|v| Prob::new(v.into(), s.into())).collect();
        }
    }
}

/// Random row whose entries are multiples of `1/denom`.
pub fn random_row_with_denominator<R: Rng>(rng: &mut R, k: usize, denom: u32) -> Vec<Prob> {
    let mut counts = vec![0i64; k];
    for _ in 0..denom {
        counts[rng.random_range(0..k)] += 1;
    }
    counts
        .into_iter()
        .map(|c| Prob::new(c.into(), (denom as i64).into()))
        .collect()
}

/// Alphabet sizes and kernels describing a task instance.
#[derive(Debug, Clone)]
pub struct TaskShape {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub m: usize,
    pub n: usize,
}

/// Assembles a task instance from `p(x,y,z)` and the two encoder kernels.
pub fn task_from_kernels(
    xyz: &JointDist,
    m_card: usize,
    m_kernel: &[Vec<Prob>],
    n_card: usize,
    n_kernel: &[Vec<Prob>],
) -> crate::Result<JointDist> {
    let xi = xyz.var_index(X)?;
    let yi = xyz.var_index(Y)?;
    let d = xyz.extend(M, m_card, |t| m_kernel[t[xi]].clone())?;
    d.extend(N, n_card, |t| n_kernel[t[yi]].clone())
}

/// Random task instance satisfying both Markov conditions by construction.
pub fn random_task<R: Rng>(rng: &mut R, shape: &TaskShape, max_weight: u32) -> JointDist {
    let xyz = random_dist(
        rng,
        vec![Var::new(X, shape.x), Var::new(Y, shape.y), Var::new(Z, shape.z)],
        max_weight,
        0.2,
    );
    let mk: Vec<Vec<Prob>> = (0..shape.x).map(|_| random_row(rng, shape.m, max_weight, 0.2)).collect();
    let nk: Vec<Vec<Prob>> = (0..shape.y).map(|_| random_row(rng, shape.n, max_weight, 0.2)).collect();
    task_from_kernels(&xyz, shape.m, &mk, shape.n, &nk).expect("valid kernels")
}

/// Random task instance whose kernels have entries in multiples of
/// `1/denom`, keeping the uniformizer resolution small.
pub fn random_task_dyadic<R: Rng>(rng: &mut R, shape: &TaskShape, denom: u32) -> JointDist {
    let xyz = random_dist(
        rng,
        vec![Var::new(X, shape.x), Var::new(Y, shape.y), Var::new(Z, shape.z)],
        4,
        0.1,
    );
    let mk: Vec<Vec<Prob>> = (0..shape.x)
        .map(|_| random_row_with_denominator(rng, shape.m, denom))
        .collect();
    let nk: Vec<Vec<Prob>> = (0..shape.y)
        .map(|_| random_row_with_denominator(rng, shape.n, denom))
        .collect();
    task_from_kernels(&xyz, shape.m, &mk, shape.n, &nk).expect("valid kernels")
}

/// A random subset of `0..n` as a membership vector, nonempty.
pub fn random_subset<R: Rng>(rng: &mut R, n: usize, keep_prob: f64) -> Vec<bool> {
    loop {
        let v: Vec<bool> = (0..n).map(|_| rng.random_bool(keep_prob)).collect();
        if v.iter().any(|&b| b) {
            return v;
        }
    }
}

/// Deterministic point-mass kernel row.
pub fn indicator_row(k: usize, at: usize) -> Vec<Prob> {
    (0..k).map(|i| if i == at { one() } else { zero() }).collect()
}
