//! The receiver's acceptance set over `(m, n, z, e, f)`.
//!
//! For every slice `(m, n, z)` the inputs are restricted to the good event,
//! the restricted `(W, V)` law is split by the cells of a
//! [`SquarePartition`], and within each cell the points whose
//! two-dimensional tail exceeds `delta` are kept (minus the cell itself).
//! The union over cells is then clipped by the two rate thresholds on `e`
//! and `f`.

use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::extended::ExtendedSource;
use super::partition::{required_multiple, Cell, SquarePartition};
use crate::dist::JointDist;
use crate::error::{Error, Result};
use crate::info::{dev, Bound, RateEvent, DEFAULT_JOINT_POWER};
use crate::numeric::{
    floor_scaled_pow2, format_rational, int, le_scaled_pow2, one, parse_rational, serde_rational, to_f64,
    zero, Prob,
};

/// Largest `|M| |N| |Z| K^2` the exact verifier will enumerate.
pub const VERIFY_BUDGET: u64 = 400_000_000;

#[derive(Debug, Clone)]
pub struct TestSetParams {
    pub r1: f64,
    pub r2: f64,
    pub delta: Prob,
    /// Power of `delta` in the joint rate condition.
    pub power: u32,
}

impl TestSetParams {
    pub fn new(r1: f64, r2: f64, delta: Prob) -> Self {
        TestSetParams {
            r1,
            r2,
            delta,
            power: DEFAULT_JOINT_POWER,
        }
    }
}

/// Acceptance set of one `(m, n, z)` slice.
#[derive(Debug, Clone)]
pub struct SliceSet {
    pub m: usize,
    pub n: usize,
    pub z: usize,
    /// Largest `e` admitted by the first rate threshold.
    pub alpha: u64,
    /// Largest `f` admitted by the second rate threshold.
    pub beta: u64,
    k: u64,
    /// Union of the per-cell sets before clipping, row-major in `(e-1, f-1)`.
    bits: Vec<u64>,
    /// Size of that union.
    pub count: u64,
}

impl SliceSet {
    fn empty(m: usize, n: usize, z: usize, k: u64) -> Self {
        SliceSet {
            m,
            n,
            z,
            alpha: 0,
            beta: 0,
            k,
            bits: vec![0; ((k * k) as usize).div_ceil(64)],
            count: 0,
        }
    }

    fn slot(&self, e: u64, f: u64) -> usize {
        ((e - 1) * self.k + (f - 1)) as usize
    }

    fn set(&mut self, e: u64, f: u64) {
        let i = self.slot(e, f);
        if self.bits[i / 64] & (1 << (i % 64)) == 0 {
            self.bits[i / 64] |= 1 << (i % 64);
            self.count += 1;
        }
    }

    /// Membership in the unclipped union.
    pub fn in_union(&self, e: u64, f: u64) -> bool {
        if e == 0 || f == 0 || e > self.k || f > self.k {
            return false;
        }
        let i = self.slot(e, f);
        self.bits[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn contains(&self, e: u64, f: u64) -> bool {
        e <= self.alpha && f <= self.beta && self.in_union(e, f)
    }

    /// `counts[e][f]` = number of accepted points in `[1, e] x [1, f]`.
    fn prefix_counts(&self) -> Vec<u64> {
        let k = self.k as usize;
        let mut c = vec![0u64; (k + 1) * (k + 1)];
        for e in 1..=k {
            let mut row = 0u64;
            for f in 1..=k {
                if self.contains(e as u64, f as u64) {
                    row += 1;
                }
                c[e * (k + 1) + f] = c[(e - 1) * (k + 1) + f] + row;
            }
        }
        c
    }
}

/// Exact masses of one cell of one slice, under the restricted law given
/// that `(W, V)` falls in the cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub m: usize,
    pub n: usize,
    pub z: usize,
    pub cell: Cell,
    /// Probability of the cell under the restricted `(W, V)` law.
    #[serde(with = "serde_rational")]
    pub weight: Prob,
    #[serde(with = "serde_rational")]
    pub in_cell_mass: Prob,
    #[serde(with = "serde_rational")]
    pub bad_mass: Prob,
    #[serde(with = "serde_rational")]
    pub accepted_mass: Prob,
    pub accepted_size: u64,
    /// `accepted_size <= delta^(power-1) K^2 2^(R1+R2) p(m,n|z) / dev`.
    pub size_bound_holds: bool,
}

#[derive(Debug, Clone)]
pub struct TestSetA {
    pub k: u64,
    pub params: TestSetParams,
    pub partition: SquarePartition,
    pub m_card: usize,
    pub n_card: usize,
    pub z_card: usize,
    slices: Vec<Option<SliceSet>>,
    pub cells: Vec<CellDiagnostics>,
    /// Mass of the rate event alone.
    pub rate_event_mass: Prob,
    /// Mass of the rate event intersected with the floor conditions.
    pub good_mass: Prob,
}

struct SliceInput {
    m: usize,
    n: usize,
    z: usize,
    /// Restricted weights of `(w, v)`, unnormalized.
    wv: BTreeMap<(u64, u64), Prob>,
}

impl TestSetA {
    fn slot(&self, m: usize, n: usize, z: usize) -> usize {
        (m * self.n_card + n) * self.z_card + z
    }

    pub fn slice(&self, m: usize, n: usize, z: usize) -> Option<&SliceSet> {
        self.slices[self.slot(m, n, z)].as_ref()
    }

    pub fn slices(&self) -> impl Iterator<Item = &SliceSet> {
        self.slices.iter().flatten()
    }

    pub fn contains(&self, m: usize, n: usize, z: usize, e: u64, f: u64) -> bool {
        self.slice(m, n, z).is_some_and(|s| s.contains(e, f))
    }

    /// `|A1| <= delta K^2 2^(R1+R2) p(m,n|z)` for every slice.
    pub fn union_size_bound_holds(&self, src: &ExtendedSource) -> bool {
        let kk = int((self.k * self.k) as i64);
        self.slices().all(|s| {
            let p = mn_given_z(src, s.m, s.n, s.z);
            le_scaled_pow2(&int(s.count as i64), &(&self.params.delta * &kk * p), self.params.r1 + self.params.r2)
        })
    }

    pub fn build(src: &ExtendedSource, params: &TestSetParams) -> Result<Self> {
        let delta = &params.delta;
        let t = &src.tables;
        let max_card = t.max_card();
        let need = required_multiple(delta, max_card)?;
        if !src.k.is_multiple_of(need) {
            return Err(Error::Precondition(format!(
                "K = {} is not a multiple of {need}; extend with a padded resolution",
                src.k
            )));
        }
        let partition = SquarePartition::new(src.k, delta, max_card)?;
        let ev = RateEvent::achievability(params.r1, params.r2, delta, max_card, params.power);
        let m_floor = delta / int(t.m_card as i64);
        let n_floor = delta / int(t.n_card as i64);
        let z_card = t.sizes[2];

        let mut rate_mass = zero();
        let mut good_mass = zero();
        let mut inputs: BTreeMap<(usize, usize, usize), SliceInput> = BTreeMap::new();
        for (tu, p) in src.base.support() {
            let (x, y, z, m, n) = (tu[0], tu[1], tu[2], tu[3], tu[4]);
            let entry = inputs.entry((m, n, z)).or_insert_with(|| SliceInput {
                m,
                n,
                z,
                wv: BTreeMap::new(),
            });
            if !ev.holds(&t.ratios_at(x, y, z, m, n)) {
                continue;
            }
            rate_mass += p;
            if t.m_given_x[x][m] <= m_floor || t.n_given_y[y][n] <= n_floor {
                continue;
            }
            good_mass += p;
            *entry.wv.entry((src.w[x][m], src.v[y][n])).or_insert_with(zero) += p;
        }

        let dv = dev(max_card, delta);
        let built: Vec<(SliceSet, Vec<CellDiagnostics>)> = inputs
            .into_values()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|inp| build_slice(src, params, &partition, dv, inp))
            .collect::<Result<_>>()?;

        let mut slices = vec![None; t.m_card * t.n_card * z_card];
        let mut cells = Vec::new();
        for (s, diags) in built {
            let i = (s.m * t.n_card + s.n) * z_card + s.z;
            slices[i] = Some(s);
            cells.extend(diags);
        }
        Ok(TestSetA {
            k: src.k,
            params: params.clone(),
            partition,
            m_card: t.m_card,
            n_card: t.n_card,
            z_card,
            slices,
            cells,
            rate_event_mass: rate_mass,
            good_mass,
        })
    }
}

fn mn_given_z(src: &ExtendedSource, m: usize, n: usize, z: usize) -> Prob {
    src.tables.mn_given_z[z]
        .as_ref()
        .map(|r| r[m * src.tables.n_card + n].clone())
        .unwrap_or_else(zero)
}

fn build_slice(
    src: &ExtendedSource,
    params: &TestSetParams,
    partition: &SquarePartition,
    dv: f64,
    inp: SliceInput,
) -> Result<(SliceSet, Vec<CellDiagnostics>)> {
    let k = src.k;
    let delta = &params.delta;
    let t = &src.tables;
    let (m, n, z) = (inp.m, inp.n, inp.z);
    let mut slice = SliceSet::empty(m, n, z, k);
    let kq = int(k as i64);
    let m_nz = t.m_given_nz.get(&(n, z)).map(|r| r[m].clone()).unwrap_or_else(zero);
    let n_mz = t.n_given_mz.get(&(m, z)).map(|r| r[n].clone()).unwrap_or_else(zero);
    slice.alpha = floor_scaled_pow2(&(delta * &kq * m_nz), params.r1, k);
    slice.beta = floor_scaled_pow2(&(delta * &kq * n_mz), params.r2, k);

    let total: Prob = inp.wv.values().sum();
    if total.is_zero() {
        return Ok((slice, Vec::new()));
    }
    let mut by_cell: BTreeMap<usize, Vec<(u64, u64, Prob)>> = BTreeMap::new();
    for ((w, v), p) in inp.wv {
        let c = partition.locate(w, v).ok_or_else(|| {
            Error::Precondition(format!("restricted support point ({w},{v}) lies in the inner square"))
        })?;
        by_cell.entry(c).or_default().push((w, v, p / &total));
    }

    let size_coef = num_traits::pow(delta.clone(), params.power.saturating_sub(1) as usize)
        * int((k * k) as i64)
        * mn_given_z(src, m, n, z);
    let size_bound = Bound::divided(size_coef, params.r1 + params.r2, dv);

    let mut diags = Vec::new();
    for (ci, points) in by_cell {
        let cell = partition.cells[ci];
        let weight: Prob = points.iter().map(|(_, _, p)| p.clone()).sum();
        let mut ws: Vec<u64> = points.iter().map(|p| p.0).collect();
        let mut vs: Vec<u64> = points.iter().map(|p| p.1).collect();
        ws.sort_unstable();
        ws.dedup();
        vs.sort_unstable();
        vs.dedup();
        let (a, b) = (ws.len(), vs.len());
        // suffix sums of the conditional law and of law / (w v)
        let mut tail = vec![vec![zero(); b + 1]; a + 1];
        let mut dens = vec![vec![zero(); b + 1]; a + 1];
        for (w, v, p) in &points {
            let i = ws.binary_search(w).expect("present");
            let j = vs.binary_search(v).expect("present");
            let q = p / &weight;
            dens[i][j] += &q / int((w * v) as i64);
            tail[i][j] += q;
        }
        for i in (0..a).rev() {
            for j in (0..b).rev() {
                let tv = &tail[i + 1][j] + &tail[i][j + 1] - &tail[i + 1][j + 1];
                tail[i][j] += tv;
                let dvv = &dens[i + 1][j] + &dens[i][j + 1] - &dens[i + 1][j + 1];
                dens[i][j] += dvv;
            }
        }
        let mut in_cell = zero();
        let mut bad = zero();
        let mut accepted = zero();
        let mut size = 0u64;
        for i in 0..a {
            let e0 = if i == 0 { 0 } else { ws[i - 1] };
            let e1 = ws[i];
            for j in 0..b {
                let f0 = if j == 0 { 0 } else { vs[j - 1] };
                let f1 = vs[j];
                let area = (e1 - e0) * (f1 - f0);
                let inside = cell.overlap(e0, e1, f0, f1);
                let outside = area - inside;
                let point = &dens[i][j];
                in_cell += point * int(inside as i64);
                if &tail[i][j] > delta {
                    accepted += point * int(outside as i64);
                    size += outside;
                    for e in e0 + 1..=e1 {
                        for f in f0 + 1..=f1 {
                            if !cell.contains(e, f) {
                                slice.set(e, f);
                            }
                        }
                    }
                } else {
                    bad += point * int(outside as i64);
                }
            }
        }
        diags.push(CellDiagnostics {
            m,
            n,
            z,
            cell,
            weight,
            in_cell_mass: in_cell,
            bad_mass: bad,
            accepted_mass: accepted,
            accepted_size: size,
            size_bound_holds: size_bound.admits(&int(size as i64), &one()),
        });
    }
    Ok((slice, diags))
}

/// One exact probability compared against its bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    #[serde(with = "serde_rational")]
    pub value: Prob,
    pub value_f64: f64,
    /// `log2` of the bound for upper bounds; the bound itself for lower bounds.
    pub bound_f64: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn at_least(value: Prob, bound: Prob) -> Self {
        BoundCheck {
            value_f64: to_f64(&value),
            bound_f64: to_f64(&bound),
            holds: value >= bound,
            value,
        }
    }

    fn at_most(value: Prob, coef: Prob, exp: f64) -> Self {
        BoundCheck {
            value_f64: to_f64(&value),
            bound_f64: crate::numeric::log2(&coef) + exp,
            holds: le_scaled_pow2(&value, &coef, exp),
            value,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSetReport {
    /// `1 -` mass of the rate event.
    #[serde(with = "serde_rational")]
    pub epsilon: Prob,
    /// Mass of the set under the true joint law; at least `1 - eps - 5 delta`.
    pub true_mass: BoundCheck,
    /// Alice's part true, Bob's part independent; at most `delta 2^R2 / |N|`.
    pub cross_first: BoundCheck,
    /// Bob's part true, Alice's part independent; at most `delta 2^R1 / |M|`.
    pub cross_second: BoundCheck,
    /// Both parts independent; at most `delta 2^(R1+R2) / (|M||N|)`.
    pub product: BoundCheck,
    /// Good event mass; at least `1 - eps - 2 delta`.
    pub good: BoundCheck,
    pub union_size_bound_holds: bool,
    pub cells: usize,
    pub max_in_cell_mass: f64,
    pub in_cell_bound_holds: bool,
    pub max_bad_mass: f64,
    pub bad_bound_holds: bool,
    pub min_accepted_mass: f64,
    pub accepted_bound_holds: bool,
    pub cell_size_bound_holds: bool,
}

impl TestSetReport {
    pub fn all_hold(&self) -> bool {
        self.true_mass.holds
            && self.cross_first.holds
            && self.cross_second.holds
            && self.product.holds
            && self.good.holds
            && self.union_size_bound_holds
            && self.in_cell_bound_holds
            && self.bad_bound_holds
            && self.accepted_bound_holds
            && self.cell_size_bound_holds
    }
}

/// Computes the four probabilities of the set exactly, plus the per-cell
/// diagnostics, and compares each with its bound.
pub fn verify_test_set(a: &TestSetA, src: &ExtendedSource) -> Result<TestSetReport> {
    let k = a.k;
    let states = (a.m_card * a.n_card * a.z_card) as u64 * k * k;
    if states > VERIFY_BUDGET {
        return Err(Error::Budget(format!("{states} states exceed the verifier budget {VERIFY_BUDGET}")));
    }
    let delta = &a.params.delta;
    let (r1, r2) = (a.params.r1, a.params.r2);
    let (mc, nc, zc) = (a.m_card, a.n_card, a.z_card);
    let kk = (k + 1) as usize;
    let prefix: Vec<Option<Vec<u64>>> = a
        .slices
        .par_iter()
        .map(|s| s.as_ref().map(SliceSet::prefix_counts))
        .collect();
    let count = |m: usize, n: usize, z: usize, e: u64, f: u64| -> u64 {
        prefix[(m * nc + n) * zc + z]
            .as_ref()
            .map_or(0, |c| c[e as usize * kk + f as usize])
    };
    let mut true_mass = zero();
    let mut first = zero();
    let mut second = zero();
    for (t, p) in src.base.support() {
        let (x, y, z, m, n) = (t[0], t[1], t[2], t[3], t[4]);
        let w = src.w[x][m];
        let v = src.v[y][n];
        let c = count(m, n, z, w, v);
        if c > 0 {
            true_mass += p * Prob::new(c.into(), (w * v).into());
        }
        let row: u64 = (0..nc).map(|n2| count(m, n2, z, w, k)).sum();
        if row > 0 {
            first += p * Prob::new(row.into(), (w * k * nc as u64).into());
        }
        let col: u64 = (0..mc).map(|m2| count(m2, n, z, k, v)).sum();
        if col > 0 {
            second += p * Prob::new(col.into(), (v * k * mc as u64).into());
        }
    }
    let pz = src.base.marginal(&[crate::info::Z])?;
    let mut product = zero();
    for z in 0..zc {
        let total: u64 = (0..mc)
            .flat_map(|m| (0..nc).map(move |n| (m, n)))
            .map(|(m, n)| count(m, n, z, k, k))
            .sum();
        if total > 0 {
            product += &pz.probs()[z] * Prob::new(total.into(), (mc as u64 * nc as u64 * k * k).into());
        }
    }

    let epsilon = one() - &a.rate_event_mass;
    let five = int(5) * delta;
    let two = int(2) * delta;
    let three = int(3) * delta;
    let max_in = a.cells.iter().map(|c| c.in_cell_mass.clone()).max().unwrap_or_else(zero);
    let max_bad = a.cells.iter().map(|c| c.bad_mass.clone()).max().unwrap_or_else(zero);
    let min_acc = a.cells.iter().map(|c| c.accepted_mass.clone()).min().unwrap_or_else(one);
    Ok(TestSetReport {
        true_mass: BoundCheck::at_least(true_mass, &a.rate_event_mass - &five),
        cross_first: BoundCheck::at_most(first, delta / int(nc as i64), r2),
        cross_second: BoundCheck::at_most(second, delta / int(mc as i64), r1),
        product: BoundCheck::at_most(product, delta / int((mc * nc) as i64), r1 + r2),
        good: BoundCheck::at_least(a.good_mass.clone(), &a.rate_event_mass - &two),
        union_size_bound_holds: a.union_size_bound_holds(src),
        cells: a.cells.len(),
        in_cell_bound_holds: &max_in <= delta,
        max_in_cell_mass: to_f64(&max_in),
        bad_bound_holds: max_bad <= two,
        max_bad_mass: to_f64(&max_bad),
        accepted_bound_holds: min_acc >= one() - three,
        min_accepted_mass: to_f64(&min_acc),
        cell_size_bound_holds: a.cells.iter().all(|c| c.size_bound_holds),
        epsilon,
    })
}

/// Content key of a test set: sha256 over the instance and parameters.
pub fn content_key(d: &JointDist, params: &TestSetParams) -> String {
    let mut h = Sha256::new();
    h.update(d.to_json().as_bytes());
    h.update(format!("|{:?}|{:?}|{}|{}", params.r1, params.r2, format_rational(&params.delta), params.power));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceRecord {
    pub m: usize,
    pub n: usize,
    pub z: usize,
    pub alpha: u64,
    pub beta: u64,
    pub count: u64,
    /// Little-endian words of the union bitset, hex encoded.
    pub bits: String,
}

/// Serialized form of a [`TestSetA`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSetFile {
    pub key: String,
    pub k: u64,
    pub r1: f64,
    pub r2: f64,
    pub delta: String,
    pub power: u32,
    pub m_card: usize,
    pub n_card: usize,
    pub z_card: usize,
    pub max_card: usize,
    pub rate_event_mass: String,
    pub good_mass: String,
    pub slices: Vec<SliceRecord>,
}

impl TestSetA {
    pub fn to_file(&self, key: String) -> TestSetFile {
        let slices = self
            .slices()
            .map(|s| SliceRecord {
                m: s.m,
                n: s.n,
                z: s.z,
                alpha: s.alpha,
                beta: s.beta,
                count: s.count,
                bits: hex::encode(s.bits.iter().flat_map(|w| w.to_le_bytes()).collect::<Vec<u8>>()),
            })
            .collect();
        TestSetFile {
            key,
            k: self.k,
            r1: self.params.r1,
            r2: self.params.r2,
            delta: format_rational(&self.params.delta),
            power: self.params.power,
            m_card: self.m_card,
            n_card: self.n_card,
            z_card: self.z_card,
            max_card: self.m_card.max(self.n_card),
            rate_event_mass: format_rational(&self.rate_event_mass),
            good_mass: format_rational(&self.good_mass),
            slices,
        }
    }

    /// Rebuilds a set from its file; per-cell diagnostics are not stored.
    pub fn from_file(f: &TestSetFile) -> Result<Self> {
        let delta = parse_rational(&f.delta)?;
        let partition = SquarePartition::new(f.k, &delta, f.max_card)?;
        let mut slices = vec![None; f.m_card * f.n_card * f.z_card];
        for r in &f.slices {
            let bytes = hex::decode(&r.bits).map_err(|e| Error::Parse(e.to_string()))?;
            let mut s = SliceSet::empty(r.m, r.n, r.z, f.k);
            if bytes.len() != s.bits.len() * 8 {
                return Err(Error::Parse("bitset length does not match K".into()));
            }
            for (w, chunk) in s.bits.iter_mut().zip(bytes.chunks_exact(8)) {
                *w = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            s.count = s.bits.iter().map(|w| w.count_ones() as u64).sum();
            if s.count != r.count {
                return Err(Error::Parse("bitset population does not match its count".into()));
            }
            s.alpha = r.alpha;
            s.beta = r.beta;
            let i = (r.m * f.n_card + r.n) * f.z_card + r.z;
            slices[i] = Some(s);
        }
        Ok(TestSetA {
            k: f.k,
            params: TestSetParams {
                r1: f.r1,
                r2: f.r2,
                delta,
                power: f.power,
            },
            partition,
            m_card: f.m_card,
            n_card: f.n_card,
            z_card: f.z_card,
            slices,
            cells: Vec::new(),
            rate_event_mass: parse_rational(&f.rate_event_mass)?,
            good_mass: parse_rational(&f.good_mass)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::extended::ExtendOptions;
    use crate::dist::Var;
    use crate::gen::task_from_kernels;
    use crate::info::{X, Y, Z};
    use crate::numeric::rat;

    fn source(d: &JointDist, delta: &Prob) -> ExtendedSource {
        let t = crate::info::TaskTables::build(d).unwrap();
        let opts = ExtendOptions {
            k_multiple: required_multiple(delta, t.max_card()).unwrap(),
            ..Default::default()
        };
        ExtendedSource::build(d, &opts).unwrap()
    }

    fn noisy_pair() -> JointDist {
        let xyz = JointDist::from_fn(vec![Var::new(X, 2), Var::new(Y, 2), Var::new(Z, 1)], |t| {
            if t[0] == t[1] {
                rat(3, 8)
            } else {
                rat(1, 8)
            }
        })
        .unwrap();
        let k = vec![vec![rat(3, 4), rat(1, 4)], vec![rat(1, 4), rat(3, 4)]];
        task_from_kernels(&xyz, 2, &k, 2, &k).unwrap()
    }

    #[test]
    fn constants_accept_almost_everything() {
        let xyz = JointDist::uniform(vec![Var::new(X, 2), Var::new(Y, 2), Var::new(Z, 1)]).unwrap();
        let one_row = vec![vec![one()], vec![one()]];
        let d = task_from_kernels(&xyz, 1, &one_row, 1, &one_row).unwrap();
        let delta = rat(1, 4);
        let src = source(&d, &delta);
        let a = TestSetA::build(&src, &TestSetParams::new(6.0, 6.0, delta)).unwrap();
        let r = verify_test_set(&a, &src).unwrap();
        assert!(r.all_hold(), "{r:?}");
        assert_eq!(r.epsilon, zero());
        // W = V = K: the single cell is the top-right square, everything
        // outside it has tail 1
        let s = a.slice(0, 0, 0).unwrap();
        let side = a.k / 4;
        assert_eq!(s.count, a.k * a.k - side * side);
    }

    #[test]
    fn noisy_pair_meets_all_bounds() {
        let d = noisy_pair();
        let delta = rat(1, 4);
        let src = source(&d, &delta);
        assert_eq!(src.k, 32);
        for r in [3.0, 6.0, 9.0] {
            let a = TestSetA::build(&src, &TestSetParams::new(r, r, delta.clone())).unwrap();
            let rep = verify_test_set(&a, &src).unwrap();
            assert!(rep.all_hold(), "R={r}: {rep:?}");
        }
    }

    #[test]
    fn brute_force_true_mass() {
        let d = noisy_pair();
        let delta = rat(1, 4);
        let src = source(&d, &delta);
        let a = TestSetA::build(&src, &TestSetParams::new(6.0, 6.0, delta)).unwrap();
        let rep = verify_test_set(&a, &src).unwrap();
        // direct sum over (x, y, z, m, n, e, f)
        let mut mass = zero();
        for (t, p) in src.base.support() {
            let w = src.w[t[0]][t[3]];
            let v = src.v[t[1]][t[4]];
            let pt = p / int((w * v) as i64);
            for e in 1..=w {
                for f in 1..=v {
                    if a.contains(t[3], t[4], t[2], e, f) {
                        mass += &pt;
                    }
                }
            }
        }
        assert_eq!(mass, rep.true_mass.value);
        // product term by direct count
        let mut prod = zero();
        for s in a.slices() {
            let mut c = 0u64;
            for e in 1..=a.k {
                for f in 1..=a.k {
                    if s.contains(e, f) {
                        c += 1;
                    }
                }
            }
            prod += Prob::new(c.into(), (4 * a.k * a.k).into());
        }
        assert_eq!(prod, rep.product.value);
    }

    #[test]
    fn empty_good_event_gives_empty_set() {
        let d = noisy_pair();
        let delta = rat(1, 4);
        let src = source(&d, &delta);
        let a = TestSetA::build(&src, &TestSetParams::new(0.0, 0.0, delta)).unwrap();
        assert_eq!(a.good_mass, zero());
        let rep = verify_test_set(&a, &src).unwrap();
        assert_eq!(rep.true_mass.value, zero());
        assert_eq!(rep.cross_first.value, zero());
        assert_eq!(rep.product.value, zero());
    }

    #[test]
    fn sidecar_round_trip() {
        let d = noisy_pair();
        let delta = rat(1, 4);
        let src = source(&d, &delta);
        let params = TestSetParams::new(6.0, 6.0, delta);
        let a = TestSetA::build(&src, &params).unwrap();
        let key = content_key(&src.base, &params);
        let file = a.to_file(key.clone());
        let json = serde_json::to_string(&file).unwrap();
        let back = TestSetA::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        for m in 0..2 {
            for n in 0..2 {
                for e in 1..=a.k {
                    for f in 1..=a.k {
                        assert_eq!(a.contains(m, n, 0, e, f), back.contains(m, n, 0, e, f));
                    }
                }
            }
        }
        let other = content_key(&src.base, &TestSetParams::new(6.0, 5.0, rat(1, 4)));
        assert_ne!(key, other);
    }

    #[test]
    fn unaligned_k_is_rejected() {
        let d = noisy_pair();
        let src = ExtendedSource::build(&d, &ExtendOptions::default()).unwrap();
        assert_eq!(src.k, 4);
        assert!(matches!(
            TestSetA::build(&src, &TestSetParams::new(6.0, 6.0, rat(1, 4))),
            Err(Error::Precondition(_))
        ));
    }
}
