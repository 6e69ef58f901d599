//! Sequential position-based decoding: test candidate positions in order and
//! output the first one whose test accepts.

use num_traits::Signed;

use crate::dist::{EventSet, JointDist};
use crate::error::{Error, Result};
use crate::numeric::{one, zero, Prob};

/// Largest `|C| |H|` enumerated by [`sequential_decode_error_exact`].
pub const DECODE_BUDGET: usize = 10_000_000;

/// First `i` (1-based) whose test contains `h`, or `tests.len() + 1`.
///
/// `h` is a tuple over the variables of the tests, in their order.
pub fn sequential_decode(h: &[usize], tests: &[EventSet]) -> usize {
    tests
        .iter()
        .position(|a| a.contains(h))
        .map_or(tests.len() + 1, |i| i + 1)
}

#[derive(Debug, Clone)]
pub struct DecodeError {
    /// Exact half-l1 distance between `(H, C)` and `(H, C')`.
    pub tv: Prob,
    /// `sum_i p(i) sum_{j != i} Pr_{H_i}[A_j] + eps`.
    pub bound: Prob,
    /// `max_i Pr_{H_i}[not A_i]` over the support of `C`.
    pub epsilon: Prob,
}

/// Exact error of the sequential decoder on a joint law of `C` (named
/// `c_var`, symbol `i` meaning position `i + 1`) and the remaining
/// variables `H`.
pub fn sequential_decode_error_exact(joint: &JointDist, c_var: &str, tests: &[EventSet]) -> Result<DecodeError> {
    let ci = joint.var_index(c_var)?;
    let c_size = joint.size_of(c_var)?;
    let c = tests.len();
    if c_size < c {
        return Err(Error::InvalidParameter(format!(
            "{c} tests but `{c_var}` has only {c_size} symbols"
        )));
    }
    if joint.len() > DECODE_BUDGET {
        return Err(Error::Budget(format!("{} states exceed {DECODE_BUDGET}", joint.len())));
    }
    let names: Vec<&str> = joint.names();
    let h_index: Vec<usize> = (0..names.len()).filter(|&i| i != ci).collect();
    let proj: Vec<Vec<usize>> = tests
        .iter()
        .map(|a| {
            a.vars()
                .iter()
                .map(|v| {
                    h_index
                        .iter()
                        .copied()
                        .find(|&i| names[i] == v)
                        .ok_or_else(|| Error::UnknownVariable(v.clone()))
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<_>>()?;
    let accepts = |t: &[usize], j: usize| -> bool {
        let sub: Vec<usize> = proj[j].iter().map(|&i| t[i]).collect();
        tests[j].contains(&sub)
    };

    let h_sizes: Vec<usize> = h_index.iter().map(|&i| joint.vars()[i].size).collect();
    let h_flat = |t: &[usize]| h_index.iter().zip(&h_sizes).fold(0usize, |acc, (&i, &s)| acc * s + t[i]);
    let h_total: usize = h_sizes.iter().product();
    // joint[h][i] and the decoder's output per h
    let mut table = vec![vec![zero(); c_size]; h_total];
    let mut decoded = vec![c; h_total];
    let mut seen = vec![false; h_total];
    let mut pc = vec![zero(); c_size];
    // in_test[i][j] = Pr[C = i, H in A_j]
    let mut in_test = vec![vec![zero(); c]; c_size];
    for (t, p) in joint.iter() {
        let h = h_flat(&t);
        let i = t[ci];
        if !seen[h] {
            seen[h] = true;
            decoded[h] = (0..c).find(|&j| accepts(&t, j)).unwrap_or(c);
        }
        if p.is_positive() {
            table[h][i] += p;
            pc[i] += p;
            for (j, slot) in in_test[i].iter_mut().enumerate() {
                if accepts(&t, j) {
                    *slot += p;
                }
            }
        }
    }
    let mut l1 = zero();
    for h in 0..h_total {
        let ph: Prob = table[h].iter().sum();
        for (i, q) in table[h].iter().enumerate() {
            let ideal = if decoded[h] == i { ph.clone() } else { zero() };
            l1 += (q - ideal).abs();
        }
        if decoded[h] == c && c >= c_size {
            // fallback symbol outside C's alphabet
            l1 += &ph;
        }
    }
    let tv = l1 / Prob::from_integer(2.into());

    let mut epsilon = zero();
    let mut cross = zero();
    for i in 0..c_size {
        if !pc[i].is_positive() {
            continue;
        }
        if i >= c {
            return Err(Error::Precondition(format!(
                "`{c_var}` has mass on position {} beyond the {c} tests",
                i + 1
            )));
        }
        let miss = one() - &in_test[i][i] / &pc[i];
        if miss > epsilon {
            epsilon = miss;
        }
        for (j, v) in in_test[i].iter().enumerate() {
            if j != i {
                cross += v;
            }
        }
    }
    Ok(DecodeError {
        bound: cross + &epsilon,
        tv,
        epsilon,
    })
}
