//! Self-similar partition of `[K] x [K]` into rectangles.
//!
//! With `delta = 1/s^2` and `delta1 = 1/s`, level `i` is the L-shaped band
//! where `max(w, v)` lies in `(K/s^(i+1), K/s^i]`. Its upper-right block
//! `(K/s^(i+1), K/s^i]^2` is cut into squares of side `K/s^(i+2)`; the two
//! arms of the L (one coordinate at most `K/s^(i+1)`) are cut into strips of
//! full arm width and thickness `K/s^(i+3)`. Levels run `0..c`; the inner
//! square `[K/s^c]^2` is left whole.
//!
//! For every `(w, v)` in a cell, the cell covers at most a `delta` fraction
//! of `[w] x [v]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{exact_sqrt, min_power_below, rat, Prob};
use num_traits::{One, ToPrimitive};

/// Which part of a level a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Square,
    LeftStrip,
    BottomStrip,
}

/// Half-open rectangle `(a0, a1] x (b0, b1]` of 1-based coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub level: u32,
    pub kind: CellKind,
    pub a0: u64,
    pub a1: u64,
    pub b0: u64,
    pub b1: u64,
}

impl Cell {
    pub fn contains(&self, e: u64, f: u64) -> bool {
        e > self.a0 && e <= self.a1 && f > self.b0 && f <= self.b1
    }

    pub fn area(&self) -> u64 {
        (self.a1 - self.a0) * (self.b1 - self.b0)
    }

    /// Number of points of the cell inside `[1, e] x [1, f]`.
    pub fn overlap_prefix(&self, e: u64, f: u64) -> u64 {
        let w = e.min(self.a1).saturating_sub(self.a0);
        let h = f.min(self.b1).saturating_sub(self.b0);
        w * h
    }

    /// Number of points of the cell inside `(e0, e1] x (f0, f1]`.
    pub fn overlap(&self, e0: u64, e1: u64, f0: u64, f1: u64) -> u64 {
        let w = e1.min(self.a1).saturating_sub(e0.max(self.a0));
        let h = f1.min(self.b1).saturating_sub(f0.max(self.b0));
        w * h
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquarePartition {
    pub k: u64,
    /// `1/delta1`.
    pub s: u64,
    /// Number of levels; the inner square is `[K/s^c]^2`.
    pub c: u32,
    pub cells: Vec<Cell>,
}

/// `s` with `delta = 1/s^2`, when it exists and exceeds 1.
pub fn root_scale(delta: &Prob) -> Result<u64> {
    let root = exact_sqrt(delta)
        .filter(|r| r.numer().is_one())
        .and_then(|r| r.denom().to_u64())
        .filter(|&s| s >= 2);
    root.ok_or_else(|| {
        Error::InvalidParameter(format!("delta must be 1/s^2 with integer s >= 2, got {delta}"))
    })
}

/// Number of levels for the given alphabet sizes: the least `c` with
/// `delta1^c <= delta / max_card`.
pub fn levels(delta: &Prob, max_card: usize) -> Result<u32> {
    let s = root_scale(delta)?;
    Ok(min_power_below(&rat(1, s as i64), &(delta / rat(max_card as i64, 1))))
}

/// `K` must be a multiple of this for the partition to be integral.
pub fn required_multiple(delta: &Prob, max_card: usize) -> Result<u64> {
    let s = root_scale(delta)?;
    let c = levels(delta, max_card)?;
    s.checked_pow(c + 2)
        .ok_or_else(|| Error::Budget("partition resolution overflows".into()))
}

impl SquarePartition {
    pub fn new(k: u64, delta: &Prob, max_card: usize) -> Result<Self> {
        let s = root_scale(delta)?;
        let c = levels(delta, max_card)?;
        let need = required_multiple(delta, max_card)?;
        if k == 0 || !k.is_multiple_of(need) {
            return Err(Error::Precondition(format!(
                "K = {k} must be a positive multiple of {need}"
            )));
        }
        let mut cells = Vec::new();
        for i in 0..c {
            let outer = k / s.pow(i);
            let inner = k / s.pow(i + 1);
            let side = k / s.pow(i + 2);
            let thin = k / s.pow(i + 3);
            let q = (outer - inner) / side;
            for col in 0..q {
                for row in 0..q {
                    cells.push(Cell {
                        level: i,
                        kind: CellKind::Square,
                        a0: inner + col * side,
                        a1: inner + (col + 1) * side,
                        b0: inner + row * side,
                        b1: inner + (row + 1) * side,
                    });
                }
            }
            let pieces = (outer - inner) / thin;
            for p in 0..pieces {
                cells.push(Cell {
                    level: i,
                    kind: CellKind::LeftStrip,
                    a0: 0,
                    a1: inner,
                    b0: inner + p * thin,
                    b1: inner + (p + 1) * thin,
                });
            }
            for p in 0..pieces {
                cells.push(Cell {
                    level: i,
                    kind: CellKind::BottomStrip,
                    a0: inner + p * thin,
                    a1: inner + (p + 1) * thin,
                    b0: 0,
                    b1: inner,
                });
            }
        }
        Ok(SquarePartition { k, s, c, cells })
    }

    /// Side of the inner square left uncovered.
    pub fn inner_side(&self) -> u64 {
        self.k / self.s.pow(self.c)
    }

    fn per_level(&self) -> u64 {
        let q = self.s * (self.s - 1);
        q * q + 2 * (self.s - 1) * self.s * self.s
    }

    /// Index of the cell containing `(w, v)`, or `None` inside the inner square.
    pub fn locate(&self, w: u64, v: u64) -> Option<usize> {
        if w == 0 || v == 0 || w > self.k || v > self.k {
            return None;
        }
        let top = w.max(v);
        let mut i = 0u32;
        while i < self.c && top <= self.k / self.s.pow(i + 1) {
            i += 1;
        }
        if i == self.c {
            return None;
        }
        let inner = self.k / self.s.pow(i + 1);
        let side = self.k / self.s.pow(i + 2);
        let thin = self.k / self.s.pow(i + 3);
        let q = self.s * (self.s - 1);
        let pieces = (self.s - 1) * self.s * self.s;
        let base = i as u64 * self.per_level();
        let local = if w > inner && v > inner {
            ((w - inner - 1) / side) * q + (v - inner - 1) / side
        } else if w <= inner {
            q * q + (v - inner - 1) / thin
        } else {
            q * q + pieces + (w - inner - 1) / thin
        };
        Some((base + local) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_and_levels() {
        assert_eq!(root_scale(&rat(1, 4)).unwrap(), 2);
        assert_eq!(root_scale(&rat(1, 9)).unwrap(), 3);
        assert!(root_scale(&rat(1, 2)).is_err());
        assert!(root_scale(&rat(4, 9)).is_err());
        assert_eq!(levels(&rat(1, 4), 2).unwrap(), 3);
        assert_eq!(levels(&rat(1, 4), 3).unwrap(), 4);
        assert_eq!(required_multiple(&rat(1, 4), 2).unwrap(), 32);
        assert_eq!(required_multiple(&rat(1, 4), 3).unwrap(), 64);
    }

    #[test]
    fn rejects_unaligned_k() {
        assert!(SquarePartition::new(48, &rat(1, 4), 2).is_err());
        assert!(SquarePartition::new(96, &rat(1, 4), 2).is_ok());
    }

    fn check_cover(k: u64, delta: Prob, max_card: usize) {
        let p = SquarePartition::new(k, &delta, max_card).unwrap();
        let inner = p.inner_side();
        let mut hits = vec![0u32; p.cells.len()];
        for w in 1..=k {
            for v in 1..=k {
                let owners: Vec<usize> = (0..p.cells.len()).filter(|&c| p.cells[c].contains(w, v)).collect();
                match p.locate(w, v) {
                    None => {
                        assert!(owners.is_empty());
                        assert!(w <= inner && v <= inner);
                    }
                    Some(c) => {
                        assert_eq!(owners, vec![c], "point ({w},{v})");
                        hits[c] += 1;
                    }
                }
            }
        }
        for (c, cell) in p.cells.iter().enumerate() {
            assert_eq!(hits[c] as u64, cell.area());
        }
        let covered: u64 = p.cells.iter().map(Cell::area).sum();
        assert_eq!(covered + inner * inner, k * k);
    }

    #[test]
    fn cells_tile_everything_but_the_inner_square() {
        check_cover(32, rat(1, 4), 2);
        check_cover(64, rat(1, 4), 3);
        check_cover(96, rat(1, 4), 2);
        check_cover(243, rat(1, 9), 2);
    }

    #[test]
    fn squares_per_level_and_sides() {
        let delta = rat(1, 4);
        let p = SquarePartition::new(64, &delta, 3).unwrap();
        for i in 0..p.c {
            let squares: Vec<&Cell> = p
                .cells
                .iter()
                .filter(|c| c.level == i && c.kind == CellKind::Square)
                .collect();
            // ((1 - delta1) / delta)^2 squares of side delta1^i delta K
            assert_eq!(squares.len(), 4);
            for sq in squares {
                assert_eq!(sq.a1 - sq.a0, 64 / 2u64.pow(i + 2));
                assert!(sq.a0 >= 64 / 2u64.pow(i + 1));
                assert!(sq.b0 >= 64 / 2u64.pow(i + 1));
            }
        }
    }

    #[test]
    fn cells_are_thin_relative_to_their_corner() {
        let p = SquarePartition::new(64, &rat(1, 4), 3).unwrap();
        for cell in &p.cells {
            for w in cell.a0 + 1..=cell.a1 {
                for v in cell.b0 + 1..=cell.b1 {
                    let inside = cell.overlap_prefix(w, v);
                    assert!(4 * inside <= w * v, "{cell:?} at ({w},{v})");
                }
            }
        }
    }
}
