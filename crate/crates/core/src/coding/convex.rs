//! Convex-split sampling and exact evaluation of convex-split mixtures.
//!
//! A mixture over `L = 2^R` positions replaces one uniformly chosen position
//! of `W^{(x)L}` by a sample correlated with `X`. Its distance from the full
//! product depends on a tuple only through the tuple's histogram, so the
//! exact value is a sum over compositions of `L` weighted by multinomial
//! coefficients. All arithmetic is over integers after clearing a common
//! denominator.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use super::extended::ExtendedSource;
use crate::dist::JointDist;
use crate::error::{Error, Result};
use crate::numeric::{lcm_all, zero, Prob};

/// Largest number of histogram terms the exact evaluators will visit.
pub const CONVEX_BUDGET: u128 = 50_000_000;

static FALLBACKS: AtomicU64 = AtomicU64::new(0);

/// Number of zero-weight fallbacks taken by [`convex_split_index_weights`]
/// in this process. Any nonzero value indicates a sampling bug.
pub fn fallback_count() -> u64 {
    FALLBACKS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct IndexWeights {
    pub weights: Vec<Prob>,
    /// Set when every weight vanished and the uniform fallback was used.
    pub fallback: bool,
}

/// Conditional law of the planted index given `x` and the shared copies
/// `(m_j, e_j)` (with `e_j` 1-based).
///
/// The shared law is uniform over `M x [K]`, so the likelihood ratio of a
/// copy is proportional to `1[e_j <= w_{m_j}(x)]`.
pub fn convex_split_index_weights(x: usize, copies: &[(usize, u64)], src: &ExtendedSource) -> IndexWeights {
    let ok: Vec<bool> = copies
        .iter()
        .map(|&(m, e)| e >= 1 && e <= src.w[x][m])
        .collect();
    let hits = ok.iter().filter(|&&b| b).count();
    if hits == 0 {
        FALLBACKS.fetch_add(1, Ordering::Relaxed);
        let u = Prob::new(1.into(), (copies.len().max(1) as i64).into());
        return IndexWeights {
            weights: vec![u; copies.len()],
            fallback: true,
        };
    }
    let share = Prob::new(1.into(), (hits as i64).into());
    IndexWeights {
        weights: ok
            .into_iter()
            .map(|b| if b { share.clone() } else { zero() })
            .collect(),
        fallback: false,
    }
}

/// Calls `f` on every composition of `total` into `parts` nonnegative parts.
fn for_each_composition(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(rest: usize, i: usize, h: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if i + 1 == h.len() {
            h[i] = rest;
            f(h);
            return;
        }
        for k in 0..=rest {
            h[i] = k;
            rec(rest - k, i + 1, h, f);
        }
    }
    if parts == 0 {
        return;
    }
    let mut h = vec![0; parts];
    rec(total, 0, &mut h, f);
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_composition(total, parts, &mut |h| out.push(h.to_vec()));
    out
}

fn binom(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn factorials(n: usize) -> Vec<BigInt> {
    let mut f = vec![BigInt::one(); n + 1];
    for i in 1..=n {
        f[i] = &f[i - 1] * BigInt::from(i);
    }
    f
}

fn multinomial(h: &[usize], fact: &[BigInt]) -> BigInt {
    let total: usize = h.iter().sum();
    h.iter().fold(fact[total].clone(), |acc, &k| acc / &fact[k])
}

/// Integer numerators of `probs` over their common denominator.
fn scaled(rows: &[&[Prob]]) -> (BigInt, Vec<Vec<BigInt>>) {
    let d = lcm_all(rows.iter().flat_map(|r| r.iter()).map(|p| p.denom()));
    let scaled = rows
        .iter()
        .map(|r| r.iter().map(|p| (p * Prob::from_integer(d.clone())).to_integer()).collect())
        .collect();
    (d, scaled)
}

/// `pow[a][k] = base[a]^k` for `k <= l`.
fn power_table(base: &[BigInt], l: usize) -> Vec<Vec<BigInt>> {
    base.iter()
        .map(|b| {
            let mut row = vec![BigInt::one(); l + 1];
            for k in 1..=l {
                row[k] = &row[k - 1] * b;
            }
            row
        })
        .collect()
}

/// `prod_b pow[b][h_b]` and, for each `a` with `h_a >= 1`, the same product
/// with `h_a` lowered by one.
fn products(h: &[usize], pow: &[Vec<BigInt>]) -> (BigInt, Vec<BigInt>) {
    let n = h.len();
    let mut prefix = vec![BigInt::one(); n + 1];
    for a in 0..n {
        prefix[a + 1] = &prefix[a] * &pow[a][h[a]];
    }
    let mut suffix = vec![BigInt::one(); n + 1];
    for a in (0..n).rev() {
        suffix[a] = &suffix[a + 1] * &pow[a][h[a]];
    }
    let lowered = (0..n)
        .map(|a| {
            if h[a] == 0 {
                BigInt::zero()
            } else {
                &prefix[a] * &pow[a][h[a] - 1] * &suffix[a + 1]
            }
        })
        .collect();
    (prefix[n].clone(), lowered)
}

fn two_var_rows(d: &JointDist) -> Result<Vec<(Prob, Vec<Prob>)>> {
    if d.vars().len() != 2 {
        return Err(Error::SchemaMismatch("expected a two-variable law (X, M)".into()));
    }
    let s = d.sizes();
    let mut rows = Vec::new();
    for x in 0..s[0] {
        let row: Vec<Prob> = (0..s[1]).map(|m| d.prob(&[x, m]).clone()).collect();
        let px: Prob = row.iter().sum();
        if px.is_zero() {
            continue;
        }
        let cond = row.iter().map(|p| p / &px).collect();
        rows.push((px, cond));
    }
    Ok(rows)
}

fn single_var(d: &JointDist, size: usize, what: &str) -> Result<Vec<Prob>> {
    if d.vars().len() != 1 || d.sizes()[0] != size {
        return Err(Error::SchemaMismatch(format!(
            "{what} must be a single variable with {size} symbols"
        )));
    }
    Ok(d.probs().to_vec())
}

/// Exact half-l1 distance between the convex-split mixture over `2^r`
/// positions and `X x W^{2^r}`.
///
/// `dist_xm` has variables `(X, M)` in that order; `w` is a law on `M`'s
/// alphabet.
pub fn convex_split_tv_exact(dist_xm: &JointDist, w: &JointDist, r: u32) -> Result<Prob> {
    let rows = two_var_rows(dist_xm)?;
    let m_size = dist_xm.sizes()[1];
    let w = single_var(w, m_size, "W")?;
    let l = 1usize
        .checked_shl(r)
        .filter(|&l| l <= 1 << 20)
        .ok_or_else(|| Error::Budget(format!("2^{r} positions")))?;
    let terms = binom((l + m_size - 1) as u128, (m_size - 1) as u128) * rows.len() as u128;
    if terms > CONVEX_BUDGET {
        return Err(Error::Budget(format!("{terms} histogram terms exceed {CONVEX_BUDGET}")));
    }
    let fact = factorials(l);
    let hists = compositions(l, m_size);
    let lb = BigInt::from(l);
    let mut total = zero();
    for (px, cond) in &rows {
        let (d, sc) = scaled(&[&w, cond]);
        let pow = power_table(&sc[0], l);
        let p = &sc[1];
        let acc: BigInt = hists
            .par_iter()
            .map(|h| {
                let (prod, lowered) = products(h, &pow);
                let mix: BigInt = (0..m_size)
                    .filter(|&a| h[a] > 0)
                    .map(|a| BigInt::from(h[a]) * &p[a] * &lowered[a])
                    .sum();
                multinomial(h, &fact) * (mix - &lb * prod).abs()
            })
            .sum();
        let denom = BigInt::from(2) * &lb * num_traits::pow(d, l);
        total += px * Prob::new(acc, denom);
    }
    Ok(total)
}

/// Exact half-l1 distance between the two-index convex-split mixture over
/// `2^r1 x 2^r2` positions and `X x U^{2^r1} x V^{2^r2}`.
///
/// `dist_xmn` has variables `(X, M, N)` in that order.
pub fn bipartite_convex_split_tv_exact(
    dist_xmn: &JointDist,
    u: &JointDist,
    v: &JointDist,
    r1: u32,
    r2: u32,
) -> Result<Prob> {
    if dist_xmn.vars().len() != 3 {
        return Err(Error::SchemaMismatch("expected a three-variable law (X, M, N)".into()));
    }
    let s = dist_xmn.sizes();
    let (xs, ms, ns) = (s[0], s[1], s[2]);
    let u = single_var(u, ms, "U")?;
    let v = single_var(v, ns, "V")?;
    if r1 > 20 || r2 > 20 {
        return Err(Error::Budget("too many positions".into()));
    }
    let (l1, l2) = (1usize << r1, 1usize << r2);
    let h1 = binom((l1 + ms - 1) as u128, (ms - 1) as u128);
    let h2 = binom((l2 + ns - 1) as u128, (ns - 1) as u128);
    let terms = h1 * h2 * xs as u128;
    if terms > CONVEX_BUDGET {
        return Err(Error::Budget(format!("{terms} histogram terms exceed {CONVEX_BUDGET}")));
    }
    let fact = factorials(l1.max(l2));
    let hm = compositions(l1, ms);
    let hn = compositions(l2, ns);
    let scale = BigInt::from(l1 * l2);
    let mut total = zero();
    for x in 0..xs {
        let row: Vec<Prob> = (0..ms * ns).map(|i| dist_xmn.prob(&[x, i / ns, i % ns]).clone()).collect();
        let px: Prob = row.iter().sum();
        if px.is_zero() {
            continue;
        }
        let cond: Vec<Prob> = row.iter().map(|p| p / &px).collect();
        let (d, sc) = scaled(&[&u, &v, &cond]);
        let pu = power_table(&sc[0], l1);
        let pv = power_table(&sc[1], l2);
        let p = &sc[2];
        let n_side: Vec<(BigInt, BigInt, Vec<BigInt>)> = hn
            .iter()
            .map(|g| {
                let (prod, lowered) = products(g, &pv);
                (multinomial(g, &fact), prod, lowered)
            })
            .collect();
        let acc: BigInt = hm
            .par_iter()
            .map(|h| {
                let (prod_u, low_u) = products(h, &pu);
                let mult_h = multinomial(h, &fact);
                let mut acc = BigInt::zero();
                for (g, (mult_g, prod_v, low_v)) in hn.iter().zip(&n_side) {
                    let mut mix = BigInt::zero();
                    for a in (0..ms).filter(|&a| h[a] > 0) {
                        let inner: BigInt = (0..ns)
                            .filter(|&b| g[b] > 0)
                            .map(|b| BigInt::from(g[b]) * &p[a * ns + b] * &low_v[b])
                            .sum();
                        mix += BigInt::from(h[a]) * &low_u[a] * inner;
                    }
                    let diff = &d * mix - &scale * &prod_u * prod_v;
                    acc += &mult_h * mult_g * diff.abs();
                }
                acc
            })
            .sum();
        let denom = BigInt::from(2) * &scale * num_traits::pow(d.clone(), l1 + l2);
        total += px * Prob::new(acc, denom);
    }
    Ok(total)
}

/// Brute-force oracle over all `|M|^L` tuples, for testing.
pub fn convex_split_tv_brute(dist_xm: &JointDist, w: &JointDist, r: u32) -> Result<Prob> {
    let rows = two_var_rows(dist_xm)?;
    let m_size = dist_xm.sizes()[1];
    let w = single_var(w, m_size, "W")?;
    let l = 1usize << r;
    let sizes = vec![m_size; l];
    let mut total = zero();
    for (px, cond) in &rows {
        let mut half = zero();
        for t in crate::dist::tuples(&sizes) {
            let prod: Prob = t.iter().map(|&m| w[m].clone()).product();
            let mut mix = zero();
            for j in 0..l {
                let mut term = cond[t[j]].clone();
                for (k, &m) in t.iter().enumerate() {
                    if k != j {
                        term *= &w[m];
                    }
                }
                mix += term;
            }
            mix /= Prob::from_integer(BigInt::from(l));
            half += (mix - prod).abs();
        }
        total += px * half / Prob::from_integer(2.into());
    }
    Ok(total)
}
