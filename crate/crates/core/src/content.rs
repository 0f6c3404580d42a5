//! Exact dyadic d-Hausdorff content of grid sets.
//!
//! The content of a node is `min(side^d, sum of children)` for nonempty nodes
//! and `0` for empty ones; leaves at depth `K` are always usable as covers, so
//! the recurrence is exact for the represented union of closed cells.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::cube::{family_content_sum, restrict, CubeFamily, CubeIndex, GeomCube, MAX_DIM};
use crate::grid::{GridSet, NodeState};
use crate::{ge_tol, le_tol, Error, Result, REL_TOL};

pub fn check_d(d: f64, n: usize) -> Result<()> {
    if !(0.0..=n as f64).contains(&d) {
        return Err(Error::Domain(format!("d = {d} outside [0, {n}]")));
    }
    Ok(())
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Choice {
    TakeSelf,
    TakeChildren,
}

/// Memoized covering costs of every mixed node of a grid set.
pub struct ContentTable<'a> {
    set: &'a GridSet,
    d: f64,
    /// A node at depth `k` has side `2^{offset - k}`.
    offset: i32,
    /// heap key -> (cost, sum of children costs)
    mixed: FxHashMap<u64, (f64, f64)>,
}

#[inline]
fn heap_key(n: usize, k: u32, code: u64) -> u64 {
    (1u64 << (n as u32 * k)) | code
}

impl<'a> ContentTable<'a> {
    pub fn new(set: &'a GridSet, d: f64) -> Result<Self> {
        Self::with_offset(set, d, 0)
    }

    /// Table for a set living in a frame whose root has side `2^offset`.
    pub fn with_offset(set: &'a GridSet, d: f64, offset: i32) -> Result<Self> {
        check_d(d, set.dim())?;
        let mut t = ContentTable { set, d, offset, mixed: FxHashMap::default() };
        if !set.is_empty() {
            t.build(0, 0);
        }
        Ok(t)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn set(&self) -> &GridSet {
        self.set
    }

    /// `side^d` of a depth-`k` node.
    #[inline]
    pub fn self_cost(&self, k: u32) -> f64 {
        (-(k as i64 - self.offset as i64) as f64 * self.d).exp2()
    }

    fn build(&mut self, k: u32, code: u64) -> f64 {
        match self.set.node_state_code(k, code) {
            NodeState::Empty => 0.0,
            NodeState::Full => self.self_cost(k),
            NodeState::Mixed => {
                let n = self.set.dim();
                let mut sum = 0.0;
                for c in 0..1u64 << n {
                    sum += self.build(k + 1, (code << n) | c);
                }
                let cost = self.self_cost(k).min(sum);
                self.mixed.insert(heap_key(n, k, code), (cost, sum));
                cost
            }
        }
    }

    /// Content of the occupied cells inside the node.
    #[inline]
    pub fn cost_code(&self, k: u32, code: u64) -> f64 {
        match self.set.node_state_code(k, code) {
            NodeState::Empty => 0.0,
            NodeState::Full => self.self_cost(k),
            NodeState::Mixed => self.mixed[&heap_key(self.set.dim(), k, code)].0,
        }
    }

    pub fn cost(&self, q: &CubeIndex) -> f64 {
        self.cost_code(q.depth, q.code())
    }

    /// Recorded choice; ties within the relative tolerance go to `TakeSelf`.
    pub fn choice_code(&self, k: u32, code: u64) -> Option<Choice> {
        match self.set.node_state_code(k, code) {
            NodeState::Empty => None,
            NodeState::Full => Some(Choice::TakeSelf),
            NodeState::Mixed => {
                let (_, sum) = self.mixed[&heap_key(self.set.dim(), k, code)];
                Some(if self.self_cost(k) <= sum * (1.0 + REL_TOL) {
                    Choice::TakeSelf
                } else {
                    Choice::TakeChildren
                })
            }
        }
    }

    pub fn is_thick_code(&self, k: u32, code: u64, lambda: f64) -> bool {
        let c = self.cost_code(k, code);
        c > 0.0 && ge_tol(c, lambda * self.self_cost(k))
    }

    /// Dyadic `(d, lambda)`-thickness of a dyadic cube.
    pub fn is_thick(&self, q: &CubeIndex, lambda: f64) -> bool {
        self.is_thick_code(q.depth, q.code(), lambda)
    }

    /// Content of the occupied cells inside the cell box `[lo_i, hi_i)`.
    pub fn box_content(&self, lo: &[u64], hi: &[u64]) -> f64 {
        if self.set.is_empty() || (0..self.set.dim()).any(|i| lo[i] >= hi[i]) {
            return 0.0;
        }
        self.box_rec(0, 0, &[0; MAX_DIM], lo, hi)
    }

    fn box_rec(&self, k: u32, code: u64, corner: &[u64; MAX_DIM], lo: &[u64], hi: &[u64]) -> f64 {
        let n = self.set.dim();
        let w = 1u64 << (self.set.depth() - k);
        let mut inside = true;
        for i in 0..n {
            let (a, b) = (corner[i] * w, corner[i] * w + w);
            if b <= lo[i] || a >= hi[i] {
                return 0.0;
            }
            inside &= lo[i] <= a && b <= hi[i];
        }
        if inside {
            return self.cost_code(k, code);
        }
        match self.set.node_state_code(k, code) {
            NodeState::Empty => return 0.0,
            // a partially covered full node: the box part is itself a full box
            NodeState::Full | NodeState::Mixed => {}
        }
        let mut sum = 0.0;
        for c in 0..1u64 << n {
            let mut child = [0u64; MAX_DIM];
            for i in 0..n {
                child[i] = 2 * corner[i] + ((c >> (n - 1 - i)) & 1);
            }
            sum += self.box_rec(k + 1, (code << n) | c, &child, lo, hi);
        }
        if sum == 0.0 {
            0.0
        } else {
            self.self_cost(k).min(sum)
        }
    }
}

/// `DH^d(q ∩ S)`.
pub fn dyadic_content(s: &GridSet, q: &CubeIndex, d: f64) -> Result<f64> {
    check_d(d, s.dim())?;
    if q.depth > s.depth() || q.dim() != s.dim() {
        return Err(Error::Domain(format!("cube {q:?} not in the grid")));
    }
    Ok(ContentTable::new(s, d)?.cost(q))
}

/// Maximal `eps`-optimal covering of the cells in `q`, extracted top-down:
/// a node is taken when `side^d <= (1 + eps) cost(node)`.
pub fn optimal_covering_with(t: &ContentTable, q: &CubeIndex, eps: f64) -> Result<CubeFamily> {
    if eps < 0.0 {
        return Err(Error::Parameter(format!("eps = {eps} < 0")));
    }
    if t.cost(q) == 0.0 {
        return Err(Error::Domain(format!("cube {q:?} has no occupied cells")));
    }
    let n = t.set().dim();
    let mut out = Vec::new();
    let mut stack = vec![(q.depth, q.code())];
    while let Some((k, code)) = stack.pop() {
        let cost = t.cost_code(k, code);
        if cost == 0.0 {
            continue;
        }
        let take = if eps == 0.0 {
            t.choice_code(k, code) == Some(Choice::TakeSelf)
        } else {
            t.self_cost(k) <= (1.0 + eps) * cost * (1.0 + REL_TOL)
        };
        if take || k == t.set().depth() {
            out.push(CubeIndex::from_code(code, k, n));
        } else {
            for c in (0..1u64 << n).rev() {
                stack.push((k + 1, (code << n) | c));
            }
        }
    }
    Ok(CubeFamily::new(out))
}

pub fn optimal_covering(s: &GridSet, q: &CubeIndex, d: f64, eps: f64) -> Result<CubeFamily> {
    let t = ContentTable::new(s, d)?;
    optimal_covering_with(&t, q, eps)
}

/// Carleson packing: `H^d(C|_Q) <= l(Q)^d` for every dyadic `Q ⊆ q`.
/// Only ancestors of members can violate it, so only those are scanned.
pub fn carleson_ok(c: &CubeFamily, q: &CubeIndex, d: f64) -> bool {
    let mut sums: FxHashMap<(u32, Vec<u64>), f64> = FxHashMap::default();
    for m in c.members() {
        let w = crate::side_pow(m.depth, d);
        for k in q.depth..=m.depth {
            *sums.entry((k, m.ancestor(k).corner)).or_default() += w;
        }
    }
    sums.iter().all(|((k, _), &s)| le_tol(s, crate::side_pow(*k, d)))
}

/// Carleson check restricted to the sub-cubes listed, reporting the worst ratio.
pub fn carleson_worst_ratio(c: &CubeFamily, q: &CubeIndex, d: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut seen = std::collections::HashSet::new();
    for m in c.members() {
        for k in q.depth..=m.depth {
            let a = m.ancestor(k);
            if seen.insert(a.clone()) {
                let r = family_content_sum(&restrict(c, &a), d) / crate::side_pow(k, d);
                worst = worst.max(r);
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThicknessQuery {
    pub d: f64,
    pub lambda: f64,
}

impl ThicknessQuery {
    pub fn new(d: f64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ThicknessQuery { d, lambda })
    }
}

/// A cube argument for thickness tests.
#[derive(Clone, Debug)]
pub enum CubeArg {
    Dyadic(CubeIndex),
    Geom(GeomCube),
}

/// Grid box `[lo, hi)` (cell units) covering a geometric cube, snapped outward
/// and clipped to the unit cube.
pub fn snap_outward(s: &GridSet, g: &GeomCube) -> (Vec<u64>, Vec<u64>) {
    let n = s.side_cells();
    let scale = n as f64;
    let mut lo = Vec::with_capacity(s.dim());
    let mut hi = Vec::with_capacity(s.dim());
    for i in 0..s.dim() {
        let a = (g.lower(i) * scale).floor().clamp(0.0, scale) as u64;
        let b = (g.upper(i) * scale).ceil().clamp(0.0, scale) as u64;
        // a point cube still selects the cell holding it
        let b = if b == a && a < n { a + 1 } else { b };
        lo.push(a.min(n));
        hi.push(b.min(n));
    }
    (lo, hi)
}

/// Thickness test. Dyadic cubes use the exact dyadic content; geometric cubes
/// are snapped outward and compared through the lower end of
/// [`hausdorff_content_bounds`] when `dyadic` is false (a cube reported thick
/// is thick for every content in the sandwich).
pub fn is_thick(s: &GridSet, q: &CubeArg, tq: ThicknessQuery, dyadic: bool) -> Result<bool> {
    check_d(tq.d, s.dim())?;
    check_lambda(tq.lambda)?;
    match q {
        CubeArg::Dyadic(c) => {
            if dyadic {
                let t = ContentTable::new(s, tq.d)?;
                Ok(t.is_thick(c, tq.lambda))
            } else {
                let (lo, _) = hausdorff_content_bounds(s, c, tq.d)?;
                Ok(lo > 0.0 && ge_tol(lo, tq.lambda * c.side().powf(tq.d)))
            }
        }
        CubeArg::Geom(g) => {
            let (lo, hi) = snap_outward(s, g);
            let l = g.side();
            if l == 0.0 {
                // a point cube is thick iff it lies in S
                return Ok(s.restrict_box(&lo, &hi).cell_count() > 0);
            }
            let bound = tq.lambda * l.powf(tq.d);
            if dyadic {
                let t = ContentTable::new(s, tq.d)?;
                let c = t.box_content(&lo, &hi);
                Ok(c > 0.0 && ge_tol(c, bound))
            } else {
                let sub = s.restrict_box(&lo, &hi);
                let (lower, _) = hausdorff_content_bounds(&sub, &CubeIndex::root(s.dim()), tq.d)?;
                Ok(lower > 0.0 && ge_tol(lower, bound))
            }
        }
    }
}

/// `(lower, upper)` with `lower <= H^d(q ∩ S) <= upper`: the upper value is the
/// dyadic content; the lower value is the largest content over `2^n` grids
/// translated by `0` or `round(2^K / 3)` cells per axis, divided by `2^n`.
pub fn hausdorff_content_bounds(s: &GridSet, q: &CubeIndex, d: f64) -> Result<(f64, f64)> {
    check_d(d, s.dim())?;
    let sub = s.restrict_to(q);
    let upper = ContentTable::new(&sub, d)?.cost(q);
    if upper == 0.0 {
        return Ok((0.0, 0.0));
    }
    let n = s.dim();
    let k = s.depth();
    let shift = ((1u64 << k) + 1) / 3;
    let frame_depth = k + 1;
    let cells: Vec<[u64; MAX_DIM]> = sub.codes().map(|c| sub.decode(c)).collect();
    let mut lower: f64 = 0.0;
    for mask in 0..1u32 << n {
        let codes = cells.iter().map(|m| {
            let mut t = [0u64; MAX_DIM];
            for i in 0..n {
                t[i] = m[i] + if mask >> i & 1 == 1 { shift } else { 0 };
            }
            crate::cube::morton_encode(&t[..n], frame_depth)
        });
        let framed = GridSet::from_codes(n, frame_depth, codes);
        let c = ContentTable::with_offset(&framed, d, 1)?.cost_code(0, 0);
        lower = lower.max(c / (1u64 << n) as f64);
    }
    Ok((lower.min(upper), upper))
}

/// Empirical lower-content-regularity constant: the minimum over centres `x`
/// of occupied depth-`max_depth` cells and scales `l = 2^-k`,
/// `k ∈ [min_depth, max_depth]`, of `DH^d(Q_l(x) ∩ S) / l^d` with `Q_l(x)`
/// snapped outward.
pub fn lcr_lambda(s: &GridSet, d: f64, min_depth: u32, max_depth: u32) -> Result<f64> {
    let t = ContentTable::new(s, d)?;
    lcr_lambda_with(&t, min_depth, max_depth)
}

pub fn lcr_lambda_with(t: &ContentTable, min_depth: u32, max_depth: u32) -> Result<f64> {
    let s = t.set();
    if s.is_empty() {
        return Err(Error::Domain("lcr of an empty set".into()));
    }
    if min_depth > max_depth {
        return Err(Error::Parameter("min_depth > max_depth".into()));
    }
    let m = max_depth.min(s.depth());
    let shift = s.dim() as u32 * (s.depth() - m);
    let mut centres: Vec<u64> = s.codes().map(|c| c >> shift).collect();
    centres.dedup();
    let mut best = f64::INFINITY;
    for c in centres {
        let cube = CubeIndex::from_code(c, m, s.dim());
        let centre = cube.to_geom().center;
        for k in min_depth..=max_depth {
            let l = crate::side_pow(k, 1.0);
            let g = GeomCube { center: centre.clone(), half_side: l };
            let (lo, hi) = snap_outward(s, &g);
            let ratio = t.box_content(&lo, &hi) / crate::side_pow(k, t.d());
            if ratio == 0.0 {
                return Ok(0.0);
            }
            best = best.min(ratio);
        }
    }
    Ok(best)
}
