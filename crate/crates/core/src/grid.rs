//! Finite-resolution sets: unions of occupied depth-`K` dyadic cells.
//!
//! Cells are stored as merged half-open runs of bit-interleaved codes. Every
//! dyadic cube maps to a contiguous code range, so the canonical cube tree
//! (empty / full / mixed nodes) is read off by range counting, and two sets
//! with equal cells have identical runs.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cube::{morton_decode, morton_encode, CubeIndex, MAX_DIM};
use crate::{Error, Result};

/// Maximum depth per dimension (index `n - 1`); keeps leaf counts near `2^24`.
pub const DEPTH_CAP: [u32; 3] = [24, 14, 9];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeState {
    Empty,
    Full,
    Mixed,
}

/// How a set was produced; carried into the exchange format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub params: Value,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct GridSet {
    dim: usize,
    depth: u32,
    runs: Vec<(u64, u64)>,
    /// `prefix[i]` = number of cells in `runs[..i]`.
    prefix: Vec<u64>,
    pub provenance: Provenance,
}

/// Regions (neighborhoods, layers, cavities) share the set representation.
pub type GridRegion = GridSet;

impl PartialEq for GridSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.depth == other.depth && self.runs == other.runs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Intersect,
    Difference,
}

pub fn check_resolution(n: usize, depth: u32) -> Result<()> {
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::Domain(format!("dimension {n} unsupported (1..=3)")));
    }
    if depth > DEPTH_CAP[n - 1] {
        return Err(Error::Resource(format!(
            "depth {depth} exceeds the cap {} for n = {n}",
            DEPTH_CAP[n - 1]
        )));
    }
    Ok(())
}

impl GridSet {
    /// Builds a set from arbitrary (possibly overlapping, unsorted) code runs.
    pub fn from_runs(dim: usize, depth: u32, mut runs: Vec<(u64, u64)>) -> Self {
        runs.retain(|r| r.0 < r.1);
        runs.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(runs.len());
        for (a, b) in runs {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut prefix = Vec::with_capacity(merged.len() + 1);
        let mut acc = 0;
        prefix.push(0);
        for &(a, b) in &merged {
            acc += b - a;
            prefix.push(acc);
        }
        GridSet { dim, depth, runs: merged, prefix, provenance: Provenance::default() }
    }

    pub fn from_codes(dim: usize, depth: u32, codes: impl IntoIterator<Item = u64>) -> Self {
        Self::from_runs(dim, depth, codes.into_iter().map(|c| (c, c + 1)).collect())
    }

    pub fn from_cells(dim: usize, depth: u32, cells: &[Vec<u64>]) -> Result<Self> {
        check_resolution(dim, depth)?;
        let mut codes = Vec::with_capacity(cells.len());
        for c in cells {
            if c.len() != dim || c.iter().any(|&m| m >> depth != 0) {
                return Err(Error::Domain(format!("cell {c:?} invalid for n={dim}, K={depth}")));
            }
            codes.push(morton_encode(c, depth));
        }
        Ok(Self::from_codes(dim, depth, codes))
    }

    pub fn empty(dim: usize, depth: u32) -> Self {
        Self::from_runs(dim, depth, Vec::new())
    }

    pub fn full(dim: usize, depth: u32) -> Self {
        Self::from_runs(dim, depth, vec![(0, 1u64 << (dim as u32 * depth))])
    }

    /// All depth-`K` cells inside the given dyadic cubes.
    pub fn from_cubes(dim: usize, depth: u32, cubes: &[CubeIndex]) -> Self {
        Self::from_runs(dim, depth, cubes.iter().map(|c| c.code_range(depth)).collect())
    }

    pub fn with_provenance(mut self, name: &str, params: Value, seed: Option<u64>) -> Self {
        self.provenance = Provenance { name: name.to_string(), params, seed };
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn runs(&self) -> &[(u64, u64)] {
        &self.runs
    }

    /// Cells per axis, `2^K`.
    pub fn side_cells(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn cell_side(&self) -> f64 {
        crate::side_pow(self.depth, 1.0)
    }

    pub fn total_cells(&self) -> u64 {
        1u64 << (self.dim as u32 * self.depth)
    }

    pub fn cell_count(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Occupied cells with code `< x`.
    fn count_below(&self, x: u64) -> u64 {
        let i = self.runs.partition_point(|r| r.0 < x);
        if i == 0 {
            return 0;
        }
        let (a, b) = self.runs[i - 1];
        self.prefix[i - 1] + b.min(x) - a
    }

    /// Occupied cells with code in `[lo, hi)`.
    pub fn count_range(&self, lo: u64, hi: u64) -> u64 {
        self.count_below(hi) - self.count_below(lo)
    }

    pub fn contains_code(&self, code: u64) -> bool {
        let i = self.runs.partition_point(|r| r.0 <= code);
        i > 0 && code < self.runs[i - 1].1
    }

    pub fn contains_cell(&self, corner: &[u64]) -> bool {
        self.contains_code(morton_encode(corner, self.depth))
    }

    /// State of the node at depth `k` with code `code`.
    pub fn node_state_code(&self, k: u32, code: u64) -> NodeState {
        let shift = self.dim as u32 * (self.depth - k);
        let (lo, hi) = (code << shift, (code + 1) << shift);
        let c = self.count_range(lo, hi);
        if c == 0 {
            NodeState::Empty
        } else if c == hi - lo {
            NodeState::Full
        } else {
            NodeState::Mixed
        }
    }

    pub fn node_state(&self, q: &CubeIndex) -> NodeState {
        self.node_state_code(q.depth, q.code())
    }

    pub fn occupied_in(&self, q: &CubeIndex) -> u64 {
        let (lo, hi) = q.code_range(self.depth);
        self.count_range(lo, hi)
    }

    /// Occupied codes in increasing order.
    pub fn codes(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|&(a, b)| a..b)
    }

    pub fn decode(&self, code: u64) -> [u64; MAX_DIM] {
        morton_decode(code, self.depth, self.dim)
    }

    /// Occupied cells as corner vectors in lexicographic order.
    pub fn cells(&self) -> Vec<Vec<u64>> {
        let mut out: Vec<Vec<u64>> =
            self.codes().map(|c| self.decode(c)[..self.dim].to_vec()).collect();
        if self.dim > 1 {
            out.sort_unstable();
        }
        out
    }

    /// The canonical cube tree in depth-first Morton order: every node whose
    /// parent is mixed, with its state.
    pub fn tree(&self) -> Vec<(CubeIndex, NodeState)> {
        let mut out = Vec::new();
        let mut stack = vec![(0u32, 0u64)];
        while let Some((k, code)) = stack.pop() {
            let st = self.node_state_code(k, code);
            out.push((CubeIndex::from_code(code, k, self.dim), st));
            if st == NodeState::Mixed {
                let nc = 1u64 << self.dim;
                for c in (0..nc).rev() {
                    stack.push((k + 1, (code << self.dim) | c));
                }
            }
        }
        out
    }

    /// Maximal full dyadic cubes (the full leaves of the canonical tree).
    pub fn full_cubes(&self) -> Vec<CubeIndex> {
        self.tree()
            .into_iter()
            .filter(|(_, s)| *s == NodeState::Full)
            .map(|(q, _)| q)
            .collect()
    }

    /// Same cells expressed at a finer depth.
    pub fn refine_to(&self, depth: u32) -> GridSet {
        assert!(depth >= self.depth);
        let shift = self.dim as u32 * (depth - self.depth);
        let mut g = Self::from_runs(
            self.dim,
            depth,
            self.runs.iter().map(|&(a, b)| (a << shift, b << shift)).collect(),
        );
        g.provenance = self.provenance.clone();
        g
    }

    /// Cells inside the dyadic cube `q`.
    pub fn restrict_to(&self, q: &CubeIndex) -> GridSet {
        let (lo, hi) = q.code_range(self.depth);
        GridSet::from_runs(
            self.dim,
            self.depth,
            self.runs.iter().map(|&(a, b)| (a.max(lo), b.min(hi))).collect(),
        )
    }

    /// Cells inside the box `[lo_i, hi_i)` given in cell units.
    pub fn restrict_box(&self, lo: &[u64], hi: &[u64]) -> GridSet {
        let codes = self.codes().filter(|&c| {
            let m = self.decode(c);
            (0..self.dim).all(|i| lo[i] <= m[i] && m[i] < hi[i])
        });
        GridSet::from_codes(self.dim, self.depth, codes)
    }

    /// Complement inside the unit cube.
    pub fn complement(&self) -> GridSet {
        set_algebra(&GridSet::full(self.dim, self.depth), self, SetOp::Difference).unwrap()
    }

    /// Smallest closed cube containing a cell centre, as a point.
    pub fn cell_center(&self, code: u64) -> Vec<f64> {
        let h = self.cell_side();
        self.decode(code)[..self.dim].iter().map(|&m| (m as f64 + 0.5) * h).collect()
    }

    /// Depth-`K` cell containing `x` (points on the upper face of the unit
    /// cube belong to the last cell).
    pub fn locate(&self, x: &[f64]) -> Result<u64> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("point has dimension {}", x.len())));
        }
        let n = self.side_cells();
        let mut m = [0u64; MAX_DIM];
        for i in 0..self.dim {
            if !(0.0..=1.0).contains(&x[i]) {
                return Err(Error::Domain(format!("point {x:?} outside the unit cube")));
            }
            m[i] = ((x[i] * n as f64).floor() as u64).min(n - 1);
        }
        Ok(morton_encode(&m[..self.dim], self.depth))
    }
}

/// Lebesgue measure: occupied cells times cell volume (exact).
pub fn lebesgue_measure(r: &GridRegion) -> f64 {
    r.cell_count() as f64 * crate::side_pow(r.depth, r.dim as f64)
}

/// Cell-wise boolean algebra; the coarser operand is refined first.
pub fn set_algebra(a: &GridRegion, b: &GridRegion, op: SetOp) -> Result<GridRegion> {
    if a.dim != b.dim {
        return Err(Error::Domain(format!("dimension mismatch {} vs {}", a.dim, b.dim)));
    }
    let depth = a.depth.max(b.depth);
    let (a, b) = (a.refine_to(depth), b.refine_to(depth));
    let mut bounds: Vec<u64> = a
        .runs
        .iter()
        .chain(&b.runs)
        .flat_map(|&(x, y)| [x, y])
        .collect();
    bounds.sort_unstable();
    bounds.dedup();
    let mut out = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let ina = a.count_range(lo, hi) > 0;
        let inb = b.count_range(lo, hi) > 0;
        let keep = match op {
            SetOp::Union => ina || inb,
            SetOp::Intersect => ina && inb,
            SetOp::Difference => ina && !inb,
        };
        if keep {
            out.push((lo, hi));
        }
    }
    Ok(GridSet::from_runs(a.dim, depth, out))
}

/// Marks the depth-`K` cells met by a closed interval `[a, b]` in `[0, 1]`:
/// cells whose interior meets it, or the cell holding a degenerate interval.
fn mark_interval(codes: &mut Vec<(u64, u64)>, depth: u32, a: f64, b: f64) {
    let n = 1u64 << depth;
    let scale = n as f64;
    if b > a {
        let lo = ((a * scale).floor() as u64).min(n - 1);
        let hi = ((b * scale).ceil() as u64).clamp(lo + 1, n);
        codes.push((lo, hi));
    } else {
        let c = ((a * scale).floor() as u64).min(n - 1);
        codes.push((c, c + 1));
    }
}

/// `t`-th iterate of `{x/4, 3/4 + x/4}` at depth `2t`; aligned exactly to the grid.
pub fn generate_cantor_base4(t: u32) -> Result<GridSet> {
    if t < 1 {
        return Err(Error::Parameter("iterations must be >= 1".into()));
    }
    let depth = 2 * t;
    check_resolution(1, depth)?;
    // cell indices of interval left ends: base-4 digits in {0, 3}
    let mut lefts = vec![0u64];
    for _ in 0..t {
        lefts = lefts.iter().flat_map(|&l| [4 * l, 4 * l + 3]).collect();
    }
    Ok(GridSet::from_codes(1, depth, lefts)
        .with_provenance("cantor4", json!({ "iters": t }), None))
}

/// Depth used to rasterize the middle-third construction up to block `j_max`:
/// `ceil(log2(6 * 18^j_max))`, so the first ternary gap of the smallest piece
/// (length `18^-j_max / 3`) contains a whole cell.
pub fn example_61_depth(j_max: u32) -> u32 {
    (6.0f64.log2() + j_max as f64 * 18.0f64.log2()).ceil() as u32
}

/// Blocks `[1 - 2^{1-j}, 1 - 2^{-j}]`, `j = 1..=j_max`, each holding `2^j`
/// rescaled copies of a middle-third Cantor set of diameter `9^-j`, spaced
/// `2^-j` apart before rescaling by `2^-j`. Outer rasterization.
pub fn generate_example_61(j_max: u32) -> Result<GridSet> {
    if j_max < 1 {
        return Err(Error::Parameter("j_max must be >= 1".into()));
    }
    let depth = example_61_depth(j_max);
    check_resolution(1, depth)?;
    let h = crate::side_pow(depth, 1.0);
    let mut runs = Vec::new();
    for j in 1..=j_max {
        let block = 1.0 - 2.0 * crate::side_pow(j, 1.0);
        let scale = crate::side_pow(j, 1.0);
        let piece = 9f64.powi(-(j as i32)) * scale;
        for i in 0..(1u64 << j) {
            let start = block + scale * (i as f64) * scale;
            cantor_raster(&mut runs, depth, h, start, start + piece);
        }
    }
    Ok(GridSet::from_runs(1, depth, runs).with_provenance(
        "example61",
        json!({ "j_max": j_max, "raster_depth": depth,
                "raster_depth_formula": "ceil(log2(6 * 18^j_max))" }),
        None,
    ))
}

fn cantor_raster(runs: &mut Vec<(u64, u64)>, depth: u32, h: f64, a: f64, b: f64) {
    if b - a <= h {
        mark_interval(runs, depth, a, b);
        return;
    }
    let third = (b - a) / 3.0;
    cantor_raster(runs, depth, h, a, a + third);
    cantor_raster(runs, depth, h, b - third, b);
}

/// Blocks `[1 - 2^{1-j}, 1 - 2^{-j}]`, `j = 1..=j_max`, each holding `2^j`
/// teeth `[i 2^-j, i 2^-j + 2^-j / 10]` rescaled by `2^-j`. Outer rasterization.
pub fn generate_example_62(j_max: u32, depth: u32) -> Result<GridSet> {
    if j_max < 1 {
        return Err(Error::Parameter("j_max must be >= 1".into()));
    }
    if depth < 2 * j_max + 6 {
        return Err(Error::Parameter(format!("depth {depth} < 2 j_max + 6")));
    }
    check_resolution(1, depth)?;
    let mut runs = Vec::new();
    for j in 1..=j_max {
        let block = 1.0 - 2.0 * crate::side_pow(j, 1.0);
        let s = crate::side_pow(j, 1.0);
        for i in 0..(1u64 << j) {
            let a = block + s * (i as f64 * s);
            mark_interval(&mut runs, depth, a, a + s * s / 10.0);
        }
    }
    Ok(GridSet::from_runs(1, depth, runs)
        .with_provenance("example62", json!({ "j_max": j_max, "depth": depth }), None))
}

/// Fractal percolation: every child of a surviving cube survives independently
/// with probability `p`, down to depth `K`. Children are visited depth-first in
/// Morton order from a ChaCha8 stream seeded with `seed`.
pub fn generate_percolation(n: usize, p: f64, depth: u32, seed: u64) -> Result<GridSet> {
    check_resolution(n, depth)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("p = {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::new();
    let mut stack = vec![(0u32, 0u64)];
    let nc = 1u64 << n;
    while let Some((k, code)) = stack.pop() {
        if k == depth {
            runs.push((code, code + 1));
            continue;
        }
        let mut alive = Vec::with_capacity(nc as usize);
        for c in 0..nc {
            if rng.gen::<f64>() < p {
                alive.push((k + 1, (code << n) | c));
            }
        }
        stack.extend(alive.into_iter().rev());
    }
    Ok(GridSet::from_runs(n, depth, runs)
        .with_provenance("percolation", json!({ "n": n, "p": p, "depth": depth }), Some(seed)))
}

impl GridSet {
    /// Exchange format: `{dim, depth, generator, cells}`.
    pub fn to_json(&self) -> Value {
        json!({
            "dim": self.dim,
            "depth": self.depth,
            "generator": {
                "name": self.provenance.name,
                "params": self.provenance.params,
                "seed": self.provenance.seed,
            },
            "cells": self.cells(),
        })
    }

    /// Run-length variant for `n = 1`: `runs` holds `[start, end)` cell ranges.
    pub fn to_json_runs(&self) -> Value {
        let mut v = self.to_json();
        let obj = v.as_object_mut().unwrap();
        obj.remove("cells");
        obj.insert("runs".into(), json!(self.runs.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>()));
        v
    }

    pub fn from_json(v: &Value) -> Result<GridSet> {
        let dim = v["dim"]
            .as_u64()
            .ok_or_else(|| Error::Domain("missing integer field `dim`".into()))?
            as usize;
        let depth = v["depth"]
            .as_u64()
            .ok_or_else(|| Error::Domain("missing integer field `depth`".into()))?
            as u32;
        check_resolution(dim, depth)?;
        let mut g = if let Some(runs) = v.get("runs") {
            if dim != 1 {
                return Err(Error::Domain("`runs` is only defined for n = 1".into()));
            }
            let runs: Vec<[u64; 2]> = serde_json::from_value(runs.clone())?;
            if runs.iter().any(|r| r[1] > 1u64 << depth || r[0] > r[1]) {
                return Err(Error::Domain("run outside the grid".into()));
            }
            GridSet::from_runs(1, depth, runs.into_iter().map(|r| (r[0], r[1])).collect())
        } else {
            let cells: Vec<Vec<u64>> = serde_json::from_value(v["cells"].clone())?;
            GridSet::from_cells(dim, depth, &cells)?
        };
        if let Some(gen) = v.get("generator") {
            g.provenance = Provenance {
                name: gen["name"].as_str().unwrap_or_default().to_string(),
                params: gen.get("params").cloned().unwrap_or(Value::Null),
                seed: gen.get("seed").and_then(Value::as_u64),
            };
        }
        Ok(g)
    }
}

/// Lexicographic order of corners (exchange-format order).
pub fn lex_cmp(a: &[u64], b: &[u64]) -> Ordering {
    a.cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_examples() {
        let c1 = generate_cantor_base4(1).unwrap();
        assert_eq!(c1.cells(), vec![vec![0], vec![3]]);
        let c2 = generate_cantor_base4(2).unwrap();
        let lefts: Vec<f64> = c2.cells().iter().map(|c| c[0] as f64 / 16.0).collect();
        assert_eq!(lefts, vec![0.0, 3.0 / 16.0, 0.75, 15.0 / 16.0]);
        for t in 1..=6 {
            let c = generate_cantor_base4(t).unwrap();
            assert_eq!(lebesgue_measure(&c), 0.5f64.powi(t as i32));
        }
        assert!(matches!(generate_cantor_base4(13), Err(Error::Resource(_))));
    }

    #[test]
    fn canonical_tree_and_algebra() {
        let left = GridSet::from_cells(1, 1, &[vec![0]]).unwrap();
        let right = GridSet::from_cells(1, 1, &[vec![1]]).unwrap();
        let u = set_algebra(&left, &right, SetOp::Union).unwrap();
        assert_eq!(u.tree(), vec![(CubeIndex::root(1), NodeState::Full)]);
        assert!(set_algebra(&u, &u, SetOp::Difference).unwrap().is_empty());
        let other = GridSet::empty(2, 1);
        assert!(set_algebra(&u, &other, SetOp::Union).is_err());
        // coarser operand refined
        let fine = GridSet::from_cells(1, 3, &[vec![5]]).unwrap();
        let i = set_algebra(&right, &fine, SetOp::Intersect).unwrap();
        assert_eq!(i.cells(), vec![vec![5]]);
    }

    #[test]
    fn percolation_determinism_and_extremes() {
        let a = generate_percolation(2, 0.6, 5, 9).unwrap();
        let b = generate_percolation(2, 0.6, 5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_percolation(1, 1.0, 6, 3).unwrap(), GridSet::full(1, 6));
        assert!(generate_percolation(1, 0.0, 6, 3).unwrap().is_empty());
    }

    #[test]
    fn example_generators_shape() {
        let s = generate_example_61(1).unwrap();
        let cells = s.cells();
        let n = s.side_cells() as f64;
        assert!(cells.iter().all(|c| (c[0] as f64 + 1.0) / n <= 0.5));
        for jm in 1..=4 {
            let s = generate_example_61(jm).unwrap();
            for j in 1..=jm {
                let q = CubeIndex::new(j, vec![(1 << j) - 2]).unwrap();
                assert!(s.occupied_in(&q) > 0);
            }
            assert!(!s.contains_cell(&[s.side_cells() - 1]));
        }
        let s = generate_example_62(3, 12).unwrap();
        for j in 1..=3u32 {
            let q = CubeIndex::new(j, vec![(1 << j) - 2]).unwrap();
            let teeth = s.restrict_to(&q);
            assert_eq!(teeth.runs().len(), 1 << j);
        }
        assert!(generate_example_62(3, 11).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = generate_percolation(2, 0.7, 4, 11).unwrap();
        let back = GridSet::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.provenance, g.provenance);
        let c = generate_cantor_base4(3).unwrap();
        assert_eq!(GridSet::from_json(&c.to_json_runs()).unwrap(), c);
    }
}
