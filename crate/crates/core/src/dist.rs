//! Exact finite joint distributions.
//!
//! A [`JointDist`] is a dense row-major tensor of exact rationals over an
//! ordered list of named variables. Every derived object (marginals,
//! conditionals, restrictions, pushforwards) is again a `JointDist`, so the
//! same equality and distance routines apply everywhere.

use std::collections::{HashMap, HashSet};

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, format_rational, one, parse_rational, zero, Prob};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub size: usize,
}

impl Var {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Var {
            name: name.into(),
            size,
        }
    }
}

/// Variable name to symbol index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(Vec<(String, usize)>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(Vec::new())
    }

    pub fn with(mut self, name: impl Into<String>, value: usize) -> Self {
        self.0.push((name.into(), value));
        self
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.0
    }
}

/// An event over a subset of a distribution's variables, given by its member
/// tuples (ordered as `vars`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSet {
    vars: Vec<String>,
    members: HashSet<Vec<usize>>,
}

impl EventSet {
    pub fn new(
        d: &JointDist,
        vars: &[&str],
        members: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self> {
        let idx = d.indices_of(vars)?;
        let members: HashSet<Vec<usize>> = members.into_iter().collect();
        for m in &members {
            if m.len() != idx.len() {
                return Err(Error::InvalidParameter(format!(
                    "event tuple {m:?} has wrong arity"
                )));
            }
            for (&i, &v) in idx.iter().zip(m) {
                if v >= d.vars[i].size {
                    return Err(Error::InvalidParameter(format!(
                        "symbol {v} out of range for `{}`",
                        d.vars[i].name
                    )));
                }
            }
        }
        Ok(EventSet {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            members,
        })
    }

    /// Builds the event `{t : pred(t)}` over the listed variables.
    pub fn from_predicate(
        d: &JointDist,
        vars: &[&str],
        pred: impl Fn(&[usize]) -> bool,
    ) -> Result<Self> {
        let idx = d.indices_of(vars)?;
        let sizes: Vec<usize> = idx.iter().map(|&i| d.vars[i].size).collect();
        let members = tuples(&sizes).filter(|t| pred(t)).collect::<Vec<_>>();
        EventSet::new(d, vars, members)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.members.contains(tuple)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Iterates all tuples of the mixed-radix space `sizes` in row-major order.
pub fn tuples(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = sizes.iter().product();
    (0..total).map(move |mut flat| {
        let mut t = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            t[k] = flat % sizes[k];
            flat /= sizes[k];
        }
        t
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDist {
    vars: Vec<Var>,
    probs: Vec<Prob>,
}

impl JointDist {
    /// Validates and builds a distribution. Probabilities must be
    /// nonnegative and sum to exactly one.
    pub fn new(vars: Vec<Var>, probs: Vec<Prob>) -> Result<Self> {
        let d = Self::unchecked(vars, probs)?;
        let total: Prob = d.probs.iter().sum();
        if total != one() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {}, not 1",
                format_rational(&total)
            )));
        }
        Ok(d)
    }

    /// Builds a distribution by rescaling nonnegative weights.
    pub fn normalized(vars: Vec<Var>, weights: Vec<Prob>) -> Result<Self> {
        let d = Self::unchecked(vars, weights)?;
        let total: Prob = d.probs.iter().sum();
        if total.is_zero() {
            return Err(Error::ZeroMass);
        }
        let probs = d.probs.iter().map(|p| p / &total).collect();
        Ok(JointDist {
            vars: d.vars,
            probs,
        })
    }

    fn unchecked(vars: Vec<Var>, probs: Vec<Prob>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &vars {
            if v.size == 0 {
                return Err(Error::InvalidDistribution(format!(
                    "variable `{}` has empty alphabet",
                    v.name
                )));
            }
            if !seen.insert(v.name.clone()) {
                return Err(Error::DuplicateVariable(v.name.clone()));
            }
        }
        let len: usize = vars.iter().map(|v| v.size).product();
        if len != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "tensor has {} entries, schema needs {len}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| p.is_negative()) {
            return Err(Error::InvalidDistribution(format!(
                "negative probability {}",
                format_rational(p)
            )));
        }
        Ok(JointDist { vars, probs })
    }

    pub fn from_fn(vars: Vec<Var>, f: impl Fn(&[usize]) -> Prob) -> Result<Self> {
        let sizes: Vec<usize> = vars.iter().map(|v| v.size).collect();
        let probs = tuples(&sizes).map(|t| f(&t)).collect();
        Self::new(vars, probs)
    }

    pub fn uniform(vars: Vec<Var>) -> Result<Self> {
        let n: usize = vars.iter().map(|v| v.size).product();
        let p = numeric::rat(1, n as i64);
        Self::new(vars, vec![p; n])
    }

    pub fn point_mass(vars: Vec<Var>, at: &[usize]) -> Result<Self> {
        let sizes: Vec<usize> = vars.iter().map(|v| v.size).collect();
        let probs = tuples(&sizes)
            .map(|t| if t == at { one() } else { zero() })
            .collect();
        Self::new(vars, probs)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn probs(&self) -> &[Prob] {
        &self.probs
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.vars.iter().map(|v| v.size).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.vars.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn size_of(&self, name: &str) -> Result<usize> {
        Ok(self.vars[self.var_index(name)?].size)
    }

    pub fn indices_of(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        names
            .iter()
            .map(|n| {
                if !seen.insert(*n) {
                    return Err(Error::DuplicateVariable(n.to_string()));
                }
                self.var_index(n)
            })
            .collect()
    }

    /// Row-major flat index of a full tuple.
    pub fn flat_index(&self, tuple: &[usize]) -> usize {
        tuple
            .iter()
            .zip(&self.vars)
            .fold(0, |acc, (&t, v)| acc * v.size + t)
    }

    pub fn tuple_of(&self, mut flat: usize) -> Vec<usize> {
        let mut t = vec![0; self.vars.len()];
        for k in (0..self.vars.len()).rev() {
            t[k] = flat % self.vars[k].size;
            flat /= self.vars[k].size;
        }
        t
    }

    pub fn prob(&self, tuple: &[usize]) -> &Prob {
        &self.probs[self.flat_index(tuple)]
    }

    /// Iterates `(tuple, probability)` over the whole tensor.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, &Prob)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, p)| (self.tuple_of(i), p))
    }

    /// Iterates the support only.
    pub fn support(&self) -> impl Iterator<Item = (Vec<usize>, &Prob)> + '_ {
        self.iter().filter(|(_, p)| !p.is_zero())
    }

    /// Probability of `{t : pred(t)}` over full tuples.
    pub fn mass_where(&self, pred: impl Fn(&[usize]) -> bool) -> Prob {
        self.support()
            .filter(|(t, _)| pred(t))
            .map(|(_, p)| p.clone())
            .sum()
    }

    fn resolve(&self, a: &Assignment) -> Result<Vec<(usize, usize)>> {
        a.entries()
            .iter()
            .map(|(n, v)| {
                let i = self.var_index(n)?;
                if *v >= self.vars[i].size {
                    return Err(Error::InvalidParameter(format!(
                        "symbol {v} out of range for `{n}`"
                    )));
                }
                Ok((i, *v))
            })
            .collect()
    }

    pub fn prob_of(&self, a: &Assignment) -> Result<Prob> {
        let fixed = self.resolve(a)?;
        Ok(self.mass_where(|t| fixed.iter().all(|&(i, v)| t[i] == v)))
    }

    pub fn prob_event(&self, g: &EventSet) -> Result<Prob> {
        let names: Vec<&str> = g.vars.iter().map(|s| s.as_str()).collect();
        let idx = self.indices_of(&names)?;
        Ok(self.mass_where(|t| {
            let key: Vec<usize> = idx.iter().map(|&i| t[i]).collect();
            g.contains(&key)
        }))
    }

    /// Marginal on `keep`, in the order given.
    pub fn marginal(&self, keep: &[&str]) -> Result<JointDist> {
        if keep.is_empty() {
            return Err(Error::InvalidParameter("empty marginal".into()));
        }
        let idx = self.indices_of(keep)?;
        let vars: Vec<Var> = idx.iter().map(|&i| self.vars[i].clone()).collect();
        let n: usize = vars.iter().map(|v| v.size).product();
        let mut probs = vec![zero(); n];
        for (flat, p) in self.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let t = self.tuple_of(flat);
            let j = idx.iter().zip(&vars).fold(0, |acc, (&i, v)| acc * v.size + t[i]);
            probs[j] += p;
        }
        Ok(JointDist { vars, probs })
    }

    /// Conditional distribution of the remaining variables given `given`.
    pub fn condition(&self, given: &Assignment) -> Result<JointDist> {
        let fixed = self.resolve(given)?;
        let fixed_idx: HashSet<usize> = fixed.iter().map(|&(i, _)| i).collect();
        if fixed_idx.len() != fixed.len() {
            return Err(Error::InvalidParameter("variable fixed twice".into()));
        }
        let rest: Vec<usize> = (0..self.vars.len())
            .filter(|i| !fixed_idx.contains(i))
            .collect();
        if rest.is_empty() {
            return Err(Error::InvalidParameter(
                "conditioning on every variable leaves nothing".into(),
            ));
        }
        let total = self.mass_where(|t| fixed.iter().all(|&(i, v)| t[i] == v));
        if total.is_zero() {
            return Err(Error::ZeroMass);
        }
        let vars: Vec<Var> = rest.iter().map(|&i| self.vars[i].clone()).collect();
        let n: usize = vars.iter().map(|v| v.size).product();
        let mut probs = vec![zero(); n];
        for (t, p) in self.support() {
            if fixed.iter().all(|&(i, v)| t[i] == v) {
                let j = rest.iter().zip(&vars).fold(0, |acc, (&i, v)| acc * v.size + t[i]);
                probs[j] = p / &total;
            }
        }
        Ok(JointDist { vars, probs })
    }

    /// Restriction to the event `g`, renormalized.
    pub fn restrict(&self, g: &EventSet) -> Result<JointDist> {
        let names: Vec<&str> = g.vars.iter().map(|s| s.as_str()).collect();
        let idx = self.indices_of(&names)?;
        let inside = |t: &[usize]| {
            let key: Vec<usize> = idx.iter().map(|&i| t[i]).collect();
            g.contains(&key)
        };
        let total = self.mass_where(inside);
        if total.is_zero() {
            return Err(Error::ZeroMass);
        }
        let probs = self
            .iter()
            .map(|(t, p)| if inside(&t) { p / &total } else { zero() })
            .collect();
        Ok(JointDist {
            vars: self.vars.clone(),
            probs,
        })
    }

    pub fn check_same_schema(&self, other: &JointDist) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::SchemaMismatch(format!(
                "{:?} vs {:?}",
                self.names(),
                other.names()
            )));
        }
        Ok(())
    }

    /// Half the l1 distance.
    pub fn tv_half(&self, other: &JointDist) -> Result<Prob> {
        self.check_same_schema(other)?;
        let s: Prob = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(s / numeric::int(2))
    }

    /// KL divergence in bits; `+inf` when the support is not contained.
    pub fn kl(&self, other: &JointDist) -> Result<f64> {
        self.check_same_schema(other)?;
        let mut acc = 0.0;
        for (p, q) in self.probs.iter().zip(&other.probs) {
            if p.is_zero() {
                continue;
            }
            if q.is_zero() {
                return Ok(f64::INFINITY);
            }
            acc += numeric::to_f64(p) * numeric::log2(&(p / q));
        }
        Ok(acc.max(0.0))
    }

    /// Exact test that `left` and `right` are independent given `mid`.
    pub fn is_markov(&self, left: &[&str], mid: &[&str], right: &[&str]) -> Result<bool> {
        let mut all: Vec<&str> = left.to_vec();
        all.extend_from_slice(mid);
        all.extend_from_slice(right);
        let mut seen = HashSet::new();
        for n in &all {
            if !seen.insert(*n) {
                return Err(Error::OverlappingGroups(n.to_string()));
            }
        }
        if left.is_empty() || right.is_empty() {
            return Ok(true);
        }
        let li = self.indices_of(left)?;
        let mi = self.indices_of(mid)?;
        let ri = self.indices_of(right)?;
        // p(l,m,r) p(m) == p(l,m) p(m,r) for every (l,m,r)
        let mut p_lmr: HashMap<(Vec<usize>, Vec<usize>, Vec<usize>), Prob> = HashMap::new();
        let mut p_lm: HashMap<(Vec<usize>, Vec<usize>), Prob> = HashMap::new();
        let mut p_mr: HashMap<(Vec<usize>, Vec<usize>), Prob> = HashMap::new();
        let mut p_m: HashMap<Vec<usize>, Prob> = HashMap::new();
        let pick = |t: &[usize], ix: &[usize]| ix.iter().map(|&i| t[i]).collect::<Vec<_>>();
        for (t, p) in self.support() {
            let (l, m, r) = (pick(&t, &li), pick(&t, &mi), pick(&t, &ri));
            *p_lmr.entry((l.clone(), m.clone(), r.clone())).or_insert_with(zero) += p;
            *p_lm.entry((l, m.clone())).or_insert_with(zero) += p;
            *p_mr.entry((m.clone(), r)).or_insert_with(zero) += p;
            *p_m.entry(m).or_insert_with(zero) += p;
        }
        for ((l, m), plm) in &p_lm {
            for ((m2, r), pmr) in &p_mr {
                if m != m2 {
                    continue;
                }
                let joint = p_lmr
                    .get(&(l.clone(), m.clone(), r.clone()))
                    .cloned()
                    .unwrap_or_else(zero);
                if joint * &p_m[m] != plm * pmr {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Applies `f` to the symbols of one variable; `f[a]` is the image of
    /// symbol `a` in an alphabet of size `new_size`.
    pub fn pushforward(&self, var: &str, f: &[usize], new_size: usize) -> Result<JointDist> {
        let vi = self.var_index(var)?;
        if f.len() != self.vars[vi].size {
            return Err(Error::InvalidParameter(format!(
                "map has {} entries, alphabet of `{var}` has {}",
                f.len(),
                self.vars[vi].size
            )));
        }
        if let Some(b) = f.iter().find(|&&b| b >= new_size) {
            return Err(Error::InvalidParameter(format!("image {b} out of range")));
        }
        let mut vars = self.vars.clone();
        vars[vi].size = new_size;
        let n: usize = vars.iter().map(|v| v.size).product();
        let mut probs = vec![zero(); n];
        for (mut t, p) in self.support() {
            t[vi] = f[t[vi]];
            let j = t.iter().zip(&vars).fold(0, |acc, (&x, v)| acc * v.size + x);
            probs[j] += p;
        }
        Ok(JointDist { vars, probs })
    }

    /// Independent product `self × other`.
    pub fn product(&self, other: &JointDist) -> Result<JointDist> {
        let mut vars = self.vars.clone();
        vars.extend(other.vars.iter().cloned());
        let mut probs = Vec::with_capacity(self.len() * other.len());
        for p in &self.probs {
            for q in &other.probs {
                probs.push(p * q);
            }
        }
        Self::unchecked(vars, probs)
    }

    /// Appends a variable drawn from `kernel(tuple)`, a conditional
    /// distribution of length `size` given the existing tuple.
    pub fn extend(
        &self,
        name: &str,
        size: usize,
        kernel: impl Fn(&[usize]) -> Vec<Prob>,
    ) -> Result<JointDist> {
        let mut vars = self.vars.clone();
        vars.push(Var::new(name, size));
        let mut probs = Vec::with_capacity(self.len() * size);
        for (t, p) in self.iter() {
            if p.is_zero() {
                probs.extend(std::iter::repeat_with(zero).take(size));
                continue;
            }
            let k = kernel(&t);
            if k.len() != size {
                return Err(Error::InvalidParameter(format!(
                    "kernel row for {t:?} has {} entries, expected {size}",
                    k.len()
                )));
            }
            let s: Prob = k.iter().sum();
            if s != one() || k.iter().any(|x| x.is_negative()) {
                return Err(Error::InvalidDistribution(format!(
                    "kernel row for {t:?} is not a distribution"
                )));
            }
            probs.extend(k.into_iter().map(|x| x * p));
        }
        Self::new(vars, probs)
    }

    /// Reorders (and possibly drops nothing) the variables.
    pub fn reorder(&self, order: &[&str]) -> Result<JointDist> {
        if order.len() != self.vars.len() {
            return Err(Error::InvalidParameter("reorder must list every variable".into()));
        }
        self.marginal(order)
    }

    pub fn rename(&self, from: &str, to: &str) -> Result<JointDist> {
        let i = self.var_index(from)?;
        if from != to && self.var_index(to).is_ok() {
            return Err(Error::DuplicateVariable(to.to_string()));
        }
        let mut d = self.clone();
        d.vars[i].name = to.to_string();
        Ok(d)
    }

    /// Replaces `group` by a single variable whose symbol is the row-major
    /// index of the group's tuple. The merged variable is placed last.
    pub fn merge(&self, group: &[&str], name: &str) -> Result<JointDist> {
        let gi = self.indices_of(group)?;
        let rest: Vec<&str> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| !gi.contains(i))
            .map(|(_, v)| v.name.as_str())
            .collect();
        let mut order = rest.clone();
        order.extend_from_slice(group);
        let reordered = self.marginal(&order)?;
        let mut vars: Vec<Var> = reordered.vars[..rest.len()].to_vec();
        let size: usize = gi.iter().map(|&i| self.vars[i].size).product();
        vars.push(Var::new(name, size));
        Self::unchecked(vars, reordered.probs)
    }

    /// Conditional probability table `p(target | given)` evaluated at full
    /// tuples of this distribution; returns `None` when the conditioning
    /// event has zero mass.
    pub fn conditional_table(&self, target: &[&str], given: &[&str]) -> Result<CondTable> {
        CondTable::build(self, target, given)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(numeric::to_f64).collect()
    }

    pub fn to_file(&self) -> DistFile {
        DistFile {
            vars: self.vars.clone(),
            probs: self.probs.iter().map(format_rational).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("serializable")
    }

    /// Parses the JSON distribution format. With `normalize`, weights that do
    /// not sum to one are rescaled instead of rejected.
    pub fn from_json(s: &str, normalize: bool) -> Result<JointDist> {
        let f: DistFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        f.into_dist(normalize)
    }
}

/// On-disk distribution format: probabilities are rational strings in
/// row-major order of `vars`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistFile {
    pub vars: Vec<Var>,
    pub probs: Vec<String>,
}

impl DistFile {
    pub fn into_dist(self, normalize: bool) -> Result<JointDist> {
        let probs = self
            .probs
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        if normalize {
            JointDist::normalized(self.vars, probs)
        } else {
            JointDist::new(self.vars, probs)
        }
    }
}

/// Lookup table for `p(target | given)` keyed by the (given, target) symbols.
#[derive(Debug, Clone)]
pub struct CondTable {
    target_idx: Vec<usize>,
    given_idx: Vec<usize>,
    joint: HashMap<(Vec<usize>, Vec<usize>), Prob>,
    given: HashMap<Vec<usize>, Prob>,
}

impl CondTable {
    fn build(d: &JointDist, target: &[&str], given: &[&str]) -> Result<Self> {
        let target_idx = d.indices_of(target)?;
        let given_idx = d.indices_of(given)?;
        if target_idx.iter().any(|i| given_idx.contains(i)) {
            return Err(Error::OverlappingGroups(format!("{target:?} / {given:?}")));
        }
        let mut joint: HashMap<(Vec<usize>, Vec<usize>), Prob> = HashMap::new();
        let mut gm: HashMap<Vec<usize>, Prob> = HashMap::new();
        for (t, p) in d.support() {
            let g: Vec<usize> = given_idx.iter().map(|&i| t[i]).collect();
            let a: Vec<usize> = target_idx.iter().map(|&i| t[i]).collect();
            *joint.entry((g.clone(), a)).or_insert_with(zero) += p;
            *gm.entry(g).or_insert_with(zero) += p;
        }
        Ok(CondTable {
            target_idx,
            given_idx,
            joint,
            given: gm,
        })
    }

    /// `p(target = t[target] | given = t[given])` read off a full tuple.
    pub fn at(&self, t: &[usize]) -> Option<BigRational> {
        let g: Vec<usize> = self.given_idx.iter().map(|&i| t[i]).collect();
        let a: Vec<usize> = self.target_idx.iter().map(|&i| t[i]).collect();
        self.get(&g, &a)
    }

    pub fn get(&self, given: &[usize], target: &[usize]) -> Option<BigRational> {
        let denom = self.given.get(given)?;
        Some(
            self.joint
                .get(&(given.to_vec(), target.to_vec()))
                .map(|p| p / denom)
                .unwrap_or_else(zero),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;

    fn xy(p: [(i64, i64); 4]) -> JointDist {
        JointDist::new(
            vec![Var::new("X", 2), Var::new("Y", 2)],
            p.iter().map(|&(n, d)| rat(n, d)).collect(),
        )
        .unwrap()
    }

    fn skewed() -> JointDist {
        xy([(1, 2), (1, 4), (0, 1), (1, 4)])
    }

    #[test]
    fn rejects_bad_tensors() {
        let v = vec![Var::new("X", 2)];
        assert!(JointDist::new(v.clone(), vec![rat(1, 2)]).is_err());
        assert!(JointDist::new(v.clone(), vec![rat(1, 2), rat(1, 3)]).is_err());
        assert!(JointDist::new(v.clone(), vec![rat(3, 2), rat(-1, 2)]).is_err());
        let dup = vec![Var::new("X", 1), Var::new("X", 1)];
        assert_eq!(
            JointDist::new(dup, vec![rat(1, 1)]),
            Err(Error::DuplicateVariable("X".into()))
        );
    }

    #[test]
    fn marginal_examples() {
        let u = JointDist::uniform(vec![Var::new("X", 2), Var::new("Y", 2)]).unwrap();
        assert_eq!(u.marginal(&["X"]).unwrap().probs(), &[rat(1, 2), rat(1, 2)]);
        assert_eq!(
            skewed().marginal(&["X"]).unwrap().probs(),
            &[rat(3, 4), rat(1, 4)]
        );
        assert_eq!(
            u.marginal(&["Q"]),
            Err(Error::UnknownVariable("Q".into()))
        );
        let px = JointDist::new(vec![Var::new("X", 2)], vec![rat(1, 3), rat(2, 3)]).unwrap();
        let py = JointDist::new(vec![Var::new("Y", 3)], vec![rat(1, 6), rat(1, 2), rat(1, 3)]).unwrap();
        assert_eq!(px.product(&py).unwrap().marginal(&["X"]).unwrap(), px);
    }

    #[test]
    fn condition_examples() {
        let c = skewed().condition(&Assignment::new().with("X", 0)).unwrap();
        assert_eq!(c.probs(), &[rat(2, 3), rat(1, 3)]);
        let copy = xy([(1, 2), (0, 1), (0, 1), (1, 2)]);
        let c = copy.condition(&Assignment::new().with("X", 1)).unwrap();
        assert_eq!(c.probs(), &[rat(0, 1), rat(1, 1)]);
        let pt = xy([(1, 1), (0, 1), (0, 1), (0, 1)]);
        assert_eq!(
            pt.condition(&Assignment::new().with("X", 1)),
            Err(Error::ZeroMass)
        );
    }

    #[test]
    fn restrict_examples() {
        let u4 = JointDist::uniform(vec![Var::new("X", 4)]).unwrap();
        let g = EventSet::new(&u4, &["X"], vec![vec![0], vec![1]]).unwrap();
        let r = u4.restrict(&g).unwrap();
        assert_eq!(r.probs(), &[rat(1, 2), rat(1, 2), rat(0, 1), rat(0, 1)]);
        assert_eq!(u4.tv_half(&r).unwrap(), rat(1, 2));
        let full = EventSet::from_predicate(&u4, &["X"], |_| true).unwrap();
        assert_eq!(u4.restrict(&full).unwrap(), u4);
        let none = EventSet::new(&u4, &["X"], vec![]).unwrap();
        assert_eq!(u4.restrict(&none), Err(Error::ZeroMass));
    }

    #[test]
    fn tv_examples() {
        let a = JointDist::new(vec![Var::new("X", 2)], vec![rat(1, 2), rat(1, 2)]).unwrap();
        let b = JointDist::new(vec![Var::new("X", 2)], vec![rat(3, 4), rat(1, 4)]).unwrap();
        assert_eq!(a.tv_half(&b).unwrap(), rat(1, 4));
        assert_eq!(a.tv_half(&a).unwrap(), rat(0, 1));
        let p0 = JointDist::point_mass(vec![Var::new("X", 2)], &[0]).unwrap();
        let p1 = JointDist::point_mass(vec![Var::new("X", 2)], &[1]).unwrap();
        assert_eq!(p0.tv_half(&p1).unwrap(), rat(1, 1));
        let y = JointDist::uniform(vec![Var::new("Y", 2)]).unwrap();
        assert!(matches!(a.tv_half(&y), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn kl_examples() {
        let v = vec![Var::new("X", 8)];
        let pt = JointDist::point_mass(v.clone(), &[3]).unwrap();
        let u = JointDist::uniform(v.clone()).unwrap();
        assert!((pt.kl(&u).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(u.kl(&pt).unwrap(), f64::INFINITY);
        assert_eq!(u.kl(&u).unwrap(), 0.0);
    }

    #[test]
    fn markov_examples() {
        let x = JointDist::new(vec![Var::new("X", 2)], vec![rat(1, 3), rat(2, 3)]).unwrap();
        let y = JointDist::new(vec![Var::new("Y", 2)], vec![rat(1, 5), rat(4, 5)]).unwrap();
        let z = JointDist::uniform(vec![Var::new("Z", 3)]).unwrap();
        let xyz = x.product(&y).unwrap().product(&z).unwrap();
        assert!(xyz.is_markov(&["X"], &["Y"], &["Z"]).unwrap());
        assert!(xyz.is_markov(&["X"], &[], &["Y", "Z"]).unwrap());
        // M = f(X), chain M - X - Z with Z noisy copy of X
        let d = x
            .extend("Z", 2, |t| if t[0] == 0 { vec![rat(3, 4), rat(1, 4)] } else { vec![rat(1, 4), rat(3, 4)] })
            .unwrap()
            .extend("M", 2, |t| if t[0] == 0 { vec![rat(1, 1), rat(0, 1)] } else { vec![rat(0, 1), rat(1, 1)] })
            .unwrap();
        assert!(d.is_markov(&["M"], &["X"], &["Z"]).unwrap());
        // copies M = Z = X, test M - {} - Z
        let copies = x
            .extend("M", 2, |t| if t[0] == 0 { vec![rat(1, 1), rat(0, 1)] } else { vec![rat(0, 1), rat(1, 1)] })
            .unwrap()
            .extend("Z", 2, |t| if t[0] == 0 { vec![rat(1, 1), rat(0, 1)] } else { vec![rat(0, 1), rat(1, 1)] })
            .unwrap();
        assert!(!copies.is_markov(&["M"], &[], &["Z"]).unwrap());
        assert!(matches!(
            copies.is_markov(&["M"], &["M"], &["Z"]),
            Err(Error::OverlappingGroups(_))
        ));
    }

    #[test]
    fn pushforward_examples() {
        let u4 = JointDist::uniform(vec![Var::new("X", 4)]).unwrap();
        assert_eq!(u4.pushforward("X", &[0, 1, 2, 3], 4).unwrap(), u4);
        let c = u4.pushforward("X", &[0, 0, 0, 0], 1).unwrap();
        assert_eq!(c.probs(), &[rat(1, 1)]);
        let parity = u4.pushforward("X", &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(parity.probs(), &[rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn merge_and_json_roundtrip() {
        let d = skewed();
        let m = d.merge(&["X", "Y"], "XY").unwrap();
        assert_eq!(m.vars(), &[Var::new("XY", 4)]);
        assert_eq!(m.probs(), d.probs());
        let back = JointDist::from_json(&d.to_json(), false).unwrap();
        assert_eq!(back, d);
        let raw = r#"{"vars":[{"name":"X","size":2}],"probs":["1","3"]}"#;
        assert!(JointDist::from_json(raw, false).is_err());
        let n = JointDist::from_json(raw, true).unwrap();
        assert_eq!(n.probs(), &[rat(1, 4), rat(3, 4)]);
    }

    #[test]
    fn conditional_reconstructs_joint() {
        let d = skewed();
        let px = d.marginal(&["X"]).unwrap();
        for (t, p) in d.iter() {
            let pxv = px.prob(&[t[0]]).clone();
            if pxv.is_zero() {
                continue;
            }
            let c = d.condition(&Assignment::new().with("X", t[0])).unwrap();
            assert_eq!(&(c.prob(&[t[1]]) * &pxv), p);
        }
        let table = d.conditional_table(&["Y"], &["X"]).unwrap();
        assert_eq!(table.get(&[0], &[1]), Some(rat(1, 3)));
    }
}
