//! One-dimensional tail lemma: if `E <= G` always, then the set of `e` whose
//! tail `Pr[G >= e]` is at most `delta` has `E`-mass at most `delta`.

use num_traits::Zero;

use crate::dist::JointDist;
use crate::error::{Error, Result};
use crate::numeric::{one, zero, Prob};

/// Outcome of [`lemma1_check`] with the tightest breakpoint.
#[derive(Debug, Clone)]
pub struct Lemma1Outcome {
    pub holds: bool,
    /// Breakpoint `delta` maximizing `Pr_E[tail(E) <= delta] - delta`.
    pub worst_delta: Prob,
    /// The value of that difference (`<= 0` when the lemma holds).
    pub worst_excess: Prob,
}

/// Checks the tail inequality at every breakpoint of a law over
/// `[K] x [K]`, given as a two-variable distribution `(E, G)` with symbol
/// `i` standing for the integer `i + 1`.
pub fn lemma1_check(eg: &JointDist) -> Result<bool> {
    Ok(lemma1_outcome(eg)?.holds)
}

pub fn lemma1_outcome(eg: &JointDist) -> Result<Lemma1Outcome> {
    if eg.vars().len() != 2 {
        return Err(Error::SchemaMismatch("expected exactly two variables (E, G)".into()));
    }
    let sizes = eg.sizes();
    let mut pe = vec![zero(); sizes[0]];
    let mut pg = vec![zero(); sizes[1]];
    for (t, p) in eg.support() {
        if t[0] > t[1] {
            return Err(Error::Precondition(format!(
                "support point e = {} exceeds g = {}",
                t[0] + 1,
                t[1] + 1
            )));
        }
        pe[t[0]] += p;
        pg[t[1]] += p;
    }
    // tail[e] = Pr[G >= e]
    let mut tail = vec![zero(); sizes[0].max(sizes[1]) + 1];
    for g in (0..sizes[1]).rev() {
        tail[g] = &tail[g + 1] + &pg[g];
    }
    let mut points: Vec<(Prob, Prob)> = pe
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(e, p)| (tail[e].clone(), p.clone()))
        .collect();
    points.sort();
    let mut worst_delta = zero();
    let mut worst_excess = -one();
    let mut holds = true;
    let mut below = zero();
    let mut i = 0;
    while i < points.len() {
        let d = points[i].0.clone();
        while i < points.len() && points[i].0 == d {
            below += &points[i].1;
            i += 1;
        }
        if d.is_zero() {
            // a positive-mass e with empty tail cannot satisfy e <= G
            holds = false;
        }
        if d.is_zero() || d >= one() {
            continue;
        }
        let excess = &below - &d;
        if excess > zero() {
            holds = false;
        }
        if excess > worst_excess {
            worst_excess = excess;
            worst_delta = d;
        }
    }
    Ok(Lemma1Outcome {
        holds,
        worst_delta,
        worst_excess,
    })
}
