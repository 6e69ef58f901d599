//! The uniformizer extension of a task instance.
//!
//! Each message symbol is paired with an integer `e` drawn uniformly from
//! `[w_m(x)]`, where `w_m(x) = K p(m|x)`; likewise `f` for Bob's side. The
//! integer `K` is chosen so every such weight is integral.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::dist::JointDist;
use crate::error::{Error, Result};
use crate::gen::task_from_kernels;
use crate::info::{canonical, check_markov, TaskTables, X, Y, Z};
use crate::numeric::{self, int, lcm_all, zero, Prob};

/// Knobs for [`ExtendedSource::build`].
#[derive(Debug, Clone)]
pub struct ExtendOptions {
    /// When set, ties among the positive values of `p(m|x)` across `x` (and
    /// of `p(n|y)` across `y`) are broken by a perturbation whose total
    /// variation from the input is at most this value.
    pub perturb: Option<Prob>,
    /// `K` is padded to a multiple of this.
    pub k_multiple: u64,
    /// Largest acceptable `K`.
    pub k_cap: u64,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            perturb: None,
            k_multiple: 1,
            k_cap: 1 << 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedSource {
    /// Canonical `X, Y, Z, M, N` instance (perturbed if requested).
    pub base: JointDist,
    pub tables: TaskTables,
    pub k: u64,
    /// `w[x][m] = K p(m|x)`; zero for `x` outside the support.
    pub w: Vec<Vec<u64>>,
    /// `v[y][n] = K p(n|y)`.
    pub v: Vec<Vec<u64>>,
    /// Exact half-l1 distance between the input and `base`.
    pub perturbation_tv: Prob,
}

/// Smallest `K` making every conditional weight integral, before padding.
pub fn minimal_k(tables: &TaskTables) -> BigInt {
    let dens: Vec<BigInt> = tables
        .m_given_x
        .iter()
        .chain(tables.n_given_y.iter())
        .flatten()
        .map(|p| p.denom().clone())
        .collect();
    lcm_all(dens.iter())
}

fn has_ties(rows: &[Vec<Prob>], live: &[bool]) -> bool {
    let cols = rows.first().map_or(0, |r| r.len());
    for c in 0..cols {
        let mut seen = HashSet::new();
        for (r, row) in rows.iter().enumerate() {
            if live[r] && !row[c].is_zero() && !seen.insert(row[c].clone()) {
                return true;
            }
        }
    }
    false
}

/// Adds `eta * t` to each positive entry, with `t` distinct per entry, and
/// renormalizes every row.
fn perturb_rows(rows: &[Vec<Prob>], live: &[bool], eta: &Prob) -> Vec<Vec<Prob>> {
    let cols = rows.first().map_or(0, |r| r.len());
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            if !live[r] {
                return row.clone();
            }
            let bumped: Vec<Prob> = row
                .iter()
                .enumerate()
                .map(|(c, p)| {
                    if p.is_zero() {
                        zero()
                    } else {
                        p + eta * int((1 + r * cols + c) as i64)
                    }
                })
                .collect();
            let s: Prob = bumped.iter().sum();
            bumped.into_iter().map(|p| p / &s).collect()
        })
        .collect()
}

impl ExtendedSource {
    pub fn build(d: &JointDist, opts: &ExtendOptions) -> Result<Self> {
        check_markov(d)?;
        let original = canonical(d)?;
        let tables = TaskTables::build(&original)?;
        let (base, tables) = match &opts.perturb {
            Some(tol) => perturb(&original, tables, tol)?,
            None => (original.clone(), tables),
        };
        let perturbation_tv = original.tv_half(&base)?;
        let minimal = minimal_k(&tables);
        let k_big = num_integer::Integer::lcm(&minimal, &BigInt::from(opts.k_multiple.max(1)));
        let k = match k_big.to_u64() {
            Some(k) if k <= opts.k_cap => k,
            _ => {
                return Err(Error::Budget(format!(
                    "uniformizer resolution K = {k_big} exceeds cap {}",
                    opts.k_cap
                )))
            }
        };
        let kq = int(k as i64);
        let to_int = |p: &Prob| (p * &kq).to_integer().to_u64().expect("fits");
        let w = tables
            .m_given_x
            .iter()
            .map(|row| row.iter().map(to_int).collect())
            .collect();
        let v = tables
            .n_given_y
            .iter()
            .map(|row| row.iter().map(to_int).collect())
            .collect();
        Ok(ExtendedSource {
            base,
            tables,
            k,
            w,
            v,
            perturbation_tv,
        })
    }

    pub fn m_card(&self) -> usize {
        self.tables.m_card
    }

    pub fn n_card(&self) -> usize {
        self.tables.n_card
    }

    /// `p(e | m, x)` for `e` in `1..=K`.
    pub fn e_given_mx(&self, e: u64, m: usize, x: usize) -> Prob {
        let w = self.w[x][m];
        if e >= 1 && e <= w {
            Prob::new(1.into(), w.into())
        } else {
            zero()
        }
    }

    /// True when no two positive weights coincide within a column.
    pub fn weights_distinct(&self) -> bool {
        let live_x: Vec<bool> = self.w.iter().map(|r| r.iter().any(|&v| v > 0)).collect();
        let live_y: Vec<bool> = self.v.iter().map(|r| r.iter().any(|&v| v > 0)).collect();
        let to_rows = |t: &Vec<Vec<u64>>| -> Vec<Vec<Prob>> {
            t.iter().map(|r| r.iter().map(|&v| int(v as i64)).collect()).collect()
        };
        !has_ties(&to_rows(&self.w), &live_x) && !has_ties(&to_rows(&self.v), &live_y)
    }
}

fn perturb(original: &JointDist, tables: TaskTables, tol: &Prob) -> Result<(JointDist, TaskTables)> {
    let px = original.marginal(&[X])?;
    let py = original.marginal(&[Y])?;
    let live_x: Vec<bool> = px.probs().iter().map(|p| !p.is_zero()).collect();
    let live_y: Vec<bool> = py.probs().iter().map(|p| !p.is_zero()).collect();
    let tied = has_ties(&tables.m_given_x, &live_x) || has_ties(&tables.n_given_y, &live_y);
    if !tied {
        return Ok((original.clone(), tables));
    }
    if *tol <= zero() {
        return Err(Error::InvalidParameter("perturbation tolerance must be positive".into()));
    }
    let entries = (tables.m_given_x.len() * tables.m_card + tables.n_given_y.len() * tables.n_card) as i64;
    // eta * sum(t) per row stays below tol / 4
    let mut eta = tol / int(4 * entries * entries);
    let xyz = original.marginal(&[X, Y, Z])?;
    for _ in 0..64 {
        let mk = perturb_rows(&tables.m_given_x, &live_x, &eta);
        let nk = perturb_rows(&tables.n_given_y, &live_y, &eta);
        if !has_ties(&mk, &live_x) && !has_ties(&nk, &live_y) {
            let d = task_from_kernels(&xyz, tables.m_card, &mk, tables.n_card, &nk)?;
            let d = canonical(&d)?;
            if &original.tv_half(&d)? <= tol {
                let t = TaskTables::build(&d)?;
                return Ok((d, t));
            }
        }
        // shrink by a non-dyadic factor so coincidences do not repeat
        eta *= numeric::rat(2, 7);
    }
    Err(Error::Budget("could not separate tied conditionals".into()))
}
