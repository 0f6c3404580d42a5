//! Thick distance, the thick pseudometric, thick neighborhoods and volume
//! estimates for neighborhoods of cube families.
//!
//! The searched cube class is every grid-anchored cube inside the unit cube:
//! corner on the depth-`K` lattice, side `j` cells. A cube is thick when the
//! dyadic content of its occupied cells is at least `lambda * side^d`.
//! Distances are kept in integer cell units internally so that symmetric
//! quantities are bit-identical; `u64::MAX` encodes `+∞`.

use std::cell::{OnceCell, RefCell};
use std::rc::Rc;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::content::{check_lambda, ContentTable};
use crate::cube::{morton_decode, morton_encode, CubeFamily, CubeIndex, GeomCube, MAX_DIM};
use crate::grid::{GridRegion, GridSet};
use crate::{ge_tol, Error, Result};

pub const INF: u64 = u64::MAX;

/// Thickness oracle over grid-anchored cubes.
pub struct ThickSearch<'a> {
    t: &'a ContentTable<'a>,
    lambda: f64,
    n: usize,
    cells: u64,
    h: f64,
}

/// Prefix counts of thick corners for one side length over a corner box.
struct Corners {
    lo: [u64; 3],
    m: [usize; 3],
    pre: Vec<u32>,
}

impl Corners {
    fn idx(&self, i: [usize; 3]) -> usize {
        (i[0] * (self.m[1] + 1) + i[1]) * (self.m[2] + 1) + i[2]
    }

    fn total(&self) -> u32 {
        self.pre[self.idx(self.m)]
    }

    /// Whether some thick corner lies in the inclusive box `[a, b]`.
    fn any(&self, a: [u64; 3], b: [u64; 3]) -> bool {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..3 {
            let top = self.lo[i] + self.m[i] as u64 - 1;
            let (x, y) = (a[i].max(self.lo[i]), b[i].min(top));
            if x > y {
                return false;
            }
            lo[i] = (x - self.lo[i]) as usize;
            hi[i] = (y - self.lo[i]) as usize + 1;
        }
        let mut s: i64 = 0;
        for mask in 0..8u32 {
            let mut p = [0usize; 3];
            for i in 0..3 {
                p[i] = if mask >> i & 1 == 1 { lo[i] } else { hi[i] };
            }
            let v = self.pre[self.idx(p)] as i64;
            s += if mask.count_ones() % 2 == 0 { v } else { -v };
        }
        s > 0
    }
}

impl<'a> ThickSearch<'a> {
    pub fn new(t: &'a ContentTable<'a>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let s = t.set();
        Ok(ThickSearch { t, lambda, n: s.dim(), cells: s.side_cells(), h: s.cell_side() })
    }

    pub fn table(&self) -> &ContentTable<'a> {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn side_cells(&self) -> u64 {
        self.cells
    }

    pub fn cell_side(&self) -> f64 {
        self.h
    }

    /// Thickness of the cube with lattice corner `corner` and side `side` cells.
    pub fn is_thick_box(&self, corner: &[u64], side: u64) -> bool {
        let mut hi = [0u64; MAX_DIM];
        for i in 0..self.n {
            hi[i] = corner[i] + side;
        }
        let c = self.t.box_content(&corner[..self.n], &hi[..self.n]);
        c > 0.0 && ge_tol(c, self.lambda * (side as f64 * self.h).powf(self.t.d()))
    }

    /// Thick corners of side `side` with corners in the inclusive box `[lo, hi]`.
    fn corners(&self, side: u64, lo: [u64; 3], hi: [u64; 3]) -> Corners {
        let mut m = [1usize; 3];
        for i in 0..self.n {
            m[i] = (hi[i] + 1).saturating_sub(lo[i]) as usize;
        }
        let mut c = Corners { lo, m, pre: vec![0; (m[0] + 1) * (m[1] + 1) * (m[2] + 1)] };
        if m.contains(&0) {
            c.m = [1, 1, 1];
            c.pre = vec![0; 8];
            c.lo = [u64::MAX / 2; 3];
            return c;
        }
        for i0 in 0..m[0] {
            for i1 in 0..m[1] {
                for i2 in 0..m[2] {
                    let corner = [lo[0] + i0 as u64, lo[1] + i1 as u64, lo[2] + i2 as u64];
                    let v = self.is_thick_box(&corner, side) as u32;
                    let at = |a: usize, b: usize, e: usize| (a * (m[1] + 1) + b) * (m[2] + 1) + e;
                    let s = v + c.pre[at(i0, i1 + 1, i2 + 1)] + c.pre[at(i0 + 1, i1, i2 + 1)]
                        + c.pre[at(i0 + 1, i1 + 1, i2)]
                        + c.pre[at(i0, i1, i2)]
                        - c.pre[at(i0, i1, i2 + 1)]
                        - c.pre[at(i0, i1 + 1, i2)]
                        - c.pre[at(i0 + 1, i1, i2)];
                    c.pre[at(i0 + 1, i1 + 1, i2 + 1)] = s;
                }
            }
        }
        c
    }

    fn full_corners(&self, side: u64) -> Corners {
        let mut hi = [0u64; 3];
        for x in hi.iter_mut().take(self.n) {
            *x = self.cells - side;
        }
        self.corners(side, [0; 3], hi)
    }

    /// `λ_S`: the dyadic content of the whole set.
    pub fn lambda_s(&self) -> f64 {
        self.t.cost(&CubeIndex::root(self.n))
    }
}

fn cell_of(code: u64, depth: u32, n: usize) -> [u64; 3] {
    let m = morton_decode(code, depth, n);
    [m[0], m[1], m[2]]
}

/// Thick distance at every depth-`K` cell centre.
#[derive(Clone, Debug, PartialEq)]
pub struct ThickDistanceField {
    pub d: f64,
    pub lambda: f64,
    dim: usize,
    depth: u32,
    /// Indexed by cell code; side in cells, `0` on `S`, [`INF`] when unreached.
    units: Vec<u64>,
}

impl ThickDistanceField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn units(&self, code: u64) -> u64 {
        self.units[code as usize]
    }

    pub fn value(&self, code: u64) -> f64 {
        match self.units[code as usize] {
            INF => f64::INFINITY,
            u => u as f64 * crate::side_pow(self.depth, 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Cells with `lo <= D < hi`.
    pub fn threshold(&self, lo: f64, hi: f64) -> GridRegion {
        let codes = (0..self.units.len() as u64).filter(|&c| {
            let v = self.value(c);
            lo <= v && v < hi
        });
        GridSet::from_codes(self.dim, self.depth, codes)
    }
}

/// Smallest thick side over cubes containing each cell, by increasing side.
pub fn thick_distance_field(search: &ThickSearch) -> ThickDistanceField {
    let s = search.t.set();
    let (n, k) = (s.dim(), s.depth());
    let total = s.total_cells() as usize;
    let mut units = vec![INF; total];
    for c in s.codes() {
        units[c as usize] = 0;
    }
    let mut open: Vec<u64> = (0..total as u64).filter(|&c| units[c as usize] == INF).collect();
    let mut j = 1;
    while !open.is_empty() && j <= search.cells {
        let corners = search.full_corners(j);
        if corners.total() > 0 {
            open.retain(|&c| {
                let m = cell_of(c, k, n);
                let mut a = [0u64; 3];
                for i in 0..n {
                    a[i] = m[i].saturating_sub(j - 1);
                }
                if corners.any(a, m) {
                    units[c as usize] = j;
                    false
                } else {
                    true
                }
            });
        }
        j += 1;
    }
    ThickDistanceField { d: search.t.d(), lambda: search.lambda, dim: n, depth: k, units }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThickDistance {
    #[serde(with = "crate::json::inf_f64")]
    pub value: f64,
    /// Smallest thick dyadic cube containing the cell: an upper bracket.
    #[serde(with = "crate::json::inf_f64")]
    pub dyadic_upper: f64,
    /// The witness cube (lattice corner, side in cells), if any.
    pub witness: Option<(Vec<u64>, u64)>,
    /// `lambda <= λ_S`, the condition under which the value is the thick distance.
    pub hypothesis_met: bool,
}

/// Advances `c` through the inclusive box `[lo, hi]`, last axis fastest.
pub(crate) fn next_lex(c: &mut [u64], lo: &[u64], hi: &[u64]) -> bool {
    for i in (0..c.len()).rev() {
        if c[i] < hi[i] {
            c[i] += 1;
            return true;
        }
        c[i] = lo[i];
    }
    false
}

/// Thick distance at the centre of the cell holding `x`.
pub fn thick_distance(search: &ThickSearch, x: &[f64]) -> Result<ThickDistance> {
    let s = search.t.set();
    let (n, k) = (s.dim(), s.depth());
    let code = s.locate(x)?;
    let hypothesis_met = search.lambda <= search.lambda_s();
    let leaf = CubeIndex::from_code(code, k, n);
    let dyadic_upper = (0..=k)
        .rev()
        .map(|j| leaf.ancestor(j))
        .find(|q| search.t.is_thick(q, search.lambda))
        .map_or(f64::INFINITY, |q| if s.contains_code(code) { 0.0 } else { q.side() });
    if s.contains_code(code) {
        return Ok(ThickDistance { value: 0.0, dyadic_upper: 0.0, witness: None, hypothesis_met });
    }
    let m = cell_of(code, k, n);
    for j in 1..=search.cells {
        let mut lo = [0u64; 3];
        let mut hi = [0u64; 3];
        for i in 0..n {
            lo[i] = m[i].saturating_sub(j - 1);
            hi[i] = m[i].min(search.cells - j);
        }
        let mut corner = lo;
        loop {
            if search.is_thick_box(&corner[..n], j) {
                return Ok(ThickDistance {
                    value: j as f64 * search.h,
                    dyadic_upper,
                    witness: Some((corner[..n].to_vec(), j)),
                    hypothesis_met,
                });
            }
            if !next_lex(&mut corner[..n], &lo[..n], &hi[..n]) {
                break;
            }
        }
    }
    Ok(ThickDistance { value: f64::INFINITY, dyadic_upper, witness: None, hypothesis_met })
}

/// Union of thick cubes with side `< delta`, plus `S`, inside the cell window
/// `[lo, hi)`.
pub fn thick_neighborhood_window(
    search: &ThickSearch,
    delta: f64,
    lo: &[u64],
    hi: &[u64],
) -> Result<GridRegion> {
    if !(delta >= 0.0) {
        return Err(Error::Parameter(format!("delta = {delta} < 0")));
    }
    let s = search.t.set();
    let (n, k) = (s.dim(), s.depth());
    let mut wlo = [0u64; 3];
    let mut whi = [1u64; 3];
    for i in 0..n {
        wlo[i] = lo[i];
        whi[i] = hi[i].min(search.cells);
        if wlo[i] >= whi[i] {
            return Ok(GridSet::empty(n, k));
        }
    }
    let mut open: Vec<[u64; 3]> = Vec::new();
    let mut hit: Vec<u64> = Vec::new();
    for a in wlo[0]..whi[0] {
        for b in wlo[1]..whi[1] {
            for c in wlo[2]..whi[2] {
                let m = [a, b, c];
                let code = morton_encode(&m[..n], k);
                if s.contains_code(code) {
                    hit.push(code);
                } else {
                    open.push(m);
                }
            }
        }
    }
    let mut j = 1u64;
    while j <= search.cells && (j as f64) * search.h < delta && !open.is_empty() {
        let mut clo = [0u64; 3];
        let mut chi = [0u64; 3];
        for i in 0..n {
            clo[i] = wlo[i].saturating_sub(j - 1);
            chi[i] = (whi[i] - 1).min(search.cells - j);
        }
        let corners = search.corners(j, clo, chi);
        if corners.total() > 0 {
            open.retain(|m| {
                let mut a = [0u64; 3];
                for i in 0..n {
                    a[i] = m[i].saturating_sub(j - 1);
                }
                if corners.any(a, *m) {
                    hit.push(morton_encode(&m[..n], k));
                    false
                } else {
                    true
                }
            });
        }
        j += 1;
    }
    Ok(GridSet::from_codes(n, k, hit))
}

pub fn thick_neighborhood(search: &ThickSearch, delta: f64) -> Result<GridRegion> {
    let n = search.n;
    thick_neighborhood_window(search, delta, &vec![0; n], &vec![search.cells; n])
}

/// One link of a realizing chain: the next point and the cube holding both ends.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainStep {
    pub point: Vec<f64>,
    pub cube_corner: Vec<u64>,
    pub cube_side_cells: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Identical,
    Chain { steps: Vec<ChainStep> },
    Norm,
    Sup { xi: Vec<f64> },
    Unreachable { xi: Option<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudometricEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(with = "crate::json::inf_f64")]
    pub value: f64,
    pub witness: Witness,
}

type Row = Rc<(Vec<u64>, Vec<usize>)>;

/// The thick pseudometric on cell centres, with per-source shortest paths cached.
pub struct Pseudometric<'a> {
    search: ThickSearch<'a>,
    corners: Vec<Corners>,
    chain_cap: usize,
    cache: RefCell<FxHashMap<usize, Row>>,
    /// Edge weights `ρ̃` in cell units, filled on first use for small grids.
    weights: OnceCell<Option<Vec<u32>>>,
}

/// Largest cell count for which the full weight matrix is kept.
const WEIGHT_MATRIX_MAX: usize = 2048;

/// Largest number of cells accepted by [`Pseudometric`].
pub const PSEUDOMETRIC_MAX_CELLS: u64 = 4096;

impl<'a> Pseudometric<'a> {
    pub fn new(search: ThickSearch<'a>, chain_cap: usize) -> Result<Self> {
        if chain_cap < 1 {
            return Err(Error::Parameter("chain_cap must be >= 1".into()));
        }
        let total = search.t.set().total_cells();
        if total > PSEUDOMETRIC_MAX_CELLS {
            return Err(Error::Resource(format!(
                "{total} cells exceed the pseudometric limit {PSEUDOMETRIC_MAX_CELLS}"
            )));
        }
        let corners = (1..=search.cells).map(|j| search.full_corners(j)).collect();
        Ok(Pseudometric {
            search,
            corners,
            chain_cap,
            cache: RefCell::new(FxHashMap::default()),
            weights: OnceCell::new(),
        })
    }

    fn n(&self) -> usize {
        self.search.n
    }

    fn v(&self) -> usize {
        (self.search.cells as usize).pow(self.n() as u32)
    }

    fn cell(&self, idx: usize) -> [u64; 3] {
        let nc = self.search.cells as usize;
        let mut m = [0u64; 3];
        let mut r = idx;
        for i in (0..self.n()).rev() {
            m[i] = (r % nc) as u64;
            r /= nc;
        }
        m
    }

    fn index_of(&self, m: &[u64]) -> usize {
        let nc = self.search.cells as usize;
        m.iter().take(self.n()).fold(0, |acc, &x| acc * nc + x as usize)
    }

    fn in_s(&self, idx: usize) -> bool {
        let m = self.cell(idx);
        self.search.t.set().contains_cell(&m[..self.n()])
    }

    fn center(&self, idx: usize) -> Vec<f64> {
        let m = self.cell(idx);
        m[..self.n()].iter().map(|&x| (x as f64 + 0.5) * self.search.h).collect()
    }

    /// Smallest thick cube holding both cells, as (side, smallest corner).
    fn tilde(&self, a: usize, b: usize) -> (u64, Option<[u64; 3]>) {
        if a == b {
            return (0, None);
        }
        let (p, q) = (self.cell(a), self.cell(b));
        let n = self.n();
        let span = (0..n).map(|i| p[i].abs_diff(q[i])).max().unwrap_or(0);
        for j in span + 1..=self.search.cells {
            let mut lo = [0u64; 3];
            let mut hi = [0u64; 3];
            for i in 0..n {
                lo[i] = p[i].max(q[i]).saturating_sub(j - 1);
                hi[i] = p[i].min(q[i]);
            }
            let c = &self.corners[j as usize - 1];
            if c.any(lo, hi) {
                return (j, Some(self.first_corner(c, lo, hi)));
            }
        }
        (INF, None)
    }

    fn weight(&self, a: usize, b: usize) -> u64 {
        let m = self.weights.get_or_init(|| {
            let v = self.v();
            (v <= WEIGHT_MATRIX_MAX).then(|| {
                let mut m = vec![0u32; v * v];
                for a in 0..v {
                    for b in a + 1..v {
                        let e = self.tilde(a, b).0;
                        let e = if e == INF { u32::MAX } else { e as u32 };
                        m[a * v + b] = e;
                        m[b * v + a] = e;
                    }
                }
                m
            })
        });
        match m {
            Some(m) => match m[a * self.v() + b] {
                u32::MAX => INF,
                e => e as u64,
            },
            None => self.tilde(a, b).0,
        }
    }

    fn first_corner(&self, c: &Corners, lo: [u64; 3], hi: [u64; 3]) -> [u64; 3] {
        // narrow axis by axis to the lexicographically smallest thick corner
        let mut lo = lo;
        let mut hi = hi;
        for i in 0..self.n() {
            let (mut a, mut b) = (lo[i], hi[i]);
            while a < b {
                let mid = a + (b - a) / 2;
                let mut h2 = hi;
                h2[i] = mid;
                let mut l2 = lo;
                l2[i] = a;
                if c.any(l2, h2) {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            lo[i] = a;
            hi[i] = a;
        }
        lo
    }

    /// Chain distances (cell units) and predecessors from `src`.
    fn row(&self, src: usize) -> Row {
        if let Some(r) = self.cache.borrow().get(&src) {
            return r.clone();
        }
        let v = self.v();
        let row = if self.chain_cap.saturating_add(1) >= v {
            // Dijkstra; ties go to the smallest index
            let mut dist = vec![INF; v];
            let mut pred = vec![usize::MAX; v];
            let mut done = vec![false; v];
            dist[src] = 0;
            for _ in 0..v {
                let mut u = usize::MAX;
                for i in 0..v {
                    if !done[i] && dist[i] != INF && (u == usize::MAX || dist[i] < dist[u]) {
                        u = i;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for w in 0..v {
                    if done[w] {
                        continue;
                    }
                    let e = self.weight(u, w);
                    if e != INF && dist[u] + e < dist[w] {
                        dist[w] = dist[u] + e;
                        pred[w] = u;
                    }
                }
            }
            (dist, pred)
        } else {
            // hop-limited relaxation
            let mut dist = vec![INF; v];
            let mut pred = vec![usize::MAX; v];
            dist[src] = 0;
            for _ in 0..self.chain_cap {
                let prev = dist.clone();
                for w in 0..v {
                    for u in 0..v {
                        if prev[u] == INF || u == w {
                            continue;
                        }
                        let e = self.weight(u, w);
                        if e != INF && prev[u] + e < dist[w] {
                            dist[w] = prev[u] + e;
                            pred[w] = u;
                        }
                    }
                }
            }
            (dist, pred)
        };
        let r = Rc::new(row);
        self.cache.borrow_mut().insert(src, r.clone());
        r
    }

    fn chain_value(&self, a: usize, b: usize) -> u64 {
        // both orientations agree for symmetric weights; fix the smaller source
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        self.row(s).0[t]
    }

    /// `ρ` between two cells in cell units.
    pub fn units(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return 0;
        }
        if self.in_s(a) || self.in_s(b) {
            return self.chain_value(a, b);
        }
        let (p, q) = (self.cell(a), self.cell(b));
        let norm = (0..self.n()).map(|i| p[i].abs_diff(q[i])).max().unwrap_or(0);
        let (ra, rb) = (self.row(a), self.row(b));
        let mut sup = 0u64;
        for xi in self.search.t.set().codes() {
            let m = self.search.t.set().decode(xi);
            let j = self.index_of(&m[..self.n()]);
            let (u, w) = (ra.0[j], rb.0[j]);
            if u == INF || w == INF {
                return INF;
            }
            sup = sup.max(u.abs_diff(w));
        }
        norm.max(sup)
    }

    fn to_real(&self, u: u64) -> f64 {
        if u == INF {
            f64::INFINITY
        } else {
            u as f64 * self.search.h
        }
    }

    pub fn distance_cells(&self, a: &[u64], b: &[u64]) -> f64 {
        self.to_real(self.units(self.index_of(a), self.index_of(b)))
    }

    /// `ρ(x, y)` with both points snapped to their cell centres.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<PseudometricEval> {
        let s = self.search.t.set();
        let (n, k) = (s.dim(), s.depth());
        let a = self.index_of(&cell_of(s.locate(x)?, k, n)[..n]);
        let b = self.index_of(&cell_of(s.locate(y)?, k, n)[..n]);
        let (x, y) = (self.center(a), self.center(b));
        if a == b {
            return Ok(PseudometricEval { x, y, value: 0.0, witness: Witness::Identical });
        }
        let value = self.to_real(self.units(a, b));
        let witness = if self.in_s(a) || self.in_s(b) {
            if value.is_infinite() {
                Witness::Unreachable { xi: None }
            } else {
                Witness::Chain { steps: self.chain(a, b) }
            }
        } else {
            let (ra, rb) = (self.row(a), self.row(b));
            let mut best: Option<(u64, usize)> = None;
            let mut unreachable = None;
            for xi in s.codes() {
                let m = s.decode(xi);
                let j = self.index_of(&m[..n]);
                let (u, w) = (ra.0[j], rb.0[j]);
                if u == INF || w == INF {
                    unreachable = Some(j);
                    break;
                }
                let dlt = u.abs_diff(w);
                if best.is_none_or(|(v, _)| dlt > v) {
                    best = Some((dlt, j));
                }
            }
            match (unreachable, best) {
                (Some(j), _) => Witness::Unreachable { xi: Some(self.center(j)) },
                (None, Some((dlt, j))) if self.to_real(dlt) == value && dlt > 0 => {
                    Witness::Sup { xi: self.center(j) }
                }
                _ => Witness::Norm,
            }
        };
        Ok(PseudometricEval { x, y, value, witness })
    }

    fn chain(&self, a: usize, b: usize) -> Vec<ChainStep> {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let row = self.row(s);
        let mut path = vec![t];
        let mut cur = t;
        while cur != s && row.1[cur] != usize::MAX {
            cur = row.1[cur];
            path.push(cur);
        }
        if s == a {
            path.reverse();
        }
        path.windows(2)
            .map(|w| {
                let (side, corner) = self.tilde(w[0], w[1]);
                ChainStep {
                    point: self.center(w[1]),
                    cube_corner: corner.map(|c| c[..self.n()].to_vec()).unwrap_or_default(),
                    cube_side_cells: side,
                }
            })
            .collect()
    }
}

/// Exact Lebesgue measure of a union of closed boxes `(lower, upper)`.
pub fn union_measure(boxes: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let Some(first) = boxes.first() else { return 0.0 };
    let n = first.0.len();
    let refs: Vec<&(Vec<f64>, Vec<f64>)> =
        boxes.iter().filter(|b| (0..n).all(|i| b.0[i] < b.1[i])).collect();
    measure_rec(&refs, 0, n)
}

fn measure_rec(boxes: &[&(Vec<f64>, Vec<f64>)], axis: usize, n: usize) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    if axis + 1 == n {
        let mut iv: Vec<(f64, f64)> = boxes.iter().map(|b| (b.0[axis], b.1[axis])).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut total = 0.0;
        let (mut a, mut b) = iv[0];
        for &(x, y) in &iv[1..] {
            if x > b {
                total += b - a;
                a = x;
                b = y;
            } else {
                b = b.max(y);
            }
        }
        return total + (b - a);
    }
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.0[axis], b.1[axis]]).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let mut total = 0.0;
    for w in xs.windows(2) {
        let active: Vec<&(Vec<f64>, Vec<f64>)> =
            boxes.iter().copied().filter(|b| b.0[axis] <= w[0] && w[1] <= b.1[axis]).collect();
        if !active.is_empty() {
            total += (w[1] - w[0]) * measure_rec(&active, axis + 1, n);
        }
    }
    total
}

/// Input to [`neighborhood_volume`].
pub enum NeighborhoodInput<'a> {
    Family(&'a CubeFamily),
    Cubes(&'a [GeomCube]),
    Region(&'a GridRegion),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeReport {
    pub volume: f64,
    /// Absolute error bound of `volume`; the union-of-boxes evaluation is exact.
    pub error_bound: f64,
}

fn boxes_of(input: &NeighborhoodInput) -> Vec<(Vec<f64>, Vec<f64>)> {
    let of_index = |q: &CubeIndex| {
        ((0..q.dim()).map(|i| q.lower(i)).collect(), (0..q.dim()).map(|i| q.upper(i)).collect())
    };
    match input {
        NeighborhoodInput::Family(f) => f.members().iter().map(of_index).collect(),
        NeighborhoodInput::Cubes(c) => c
            .iter()
            .map(|g| ((0..g.dim()).map(|i| g.lower(i)).collect(), (0..g.dim()).map(|i| g.upper(i)).collect()))
            .collect(),
        NeighborhoodInput::Region(r) => r.full_cubes().iter().map(of_index).collect(),
    }
}

/// Measure of the open `eps`-neighborhood `{y : ‖y − x‖∞ < eps, x ∈ F}`,
/// clipped to the unit cube when `clip` is set.
pub fn neighborhood_volume(input: NeighborhoodInput, eps: f64, clip: bool) -> Result<VolumeReport> {
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!("eps = {eps} < 0")));
    }
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = boxes_of(&input)
        .into_iter()
        .map(|(lo, hi)| {
            let lo: Vec<f64> = lo.iter().map(|&a| if clip { (a - eps).max(0.0) } else { a - eps }).collect();
            let hi: Vec<f64> = hi.iter().map(|&b| if clip { (b + eps).min(1.0) } else { b + eps }).collect();
            (lo, hi)
        })
        .collect();
    Ok(VolumeReport { volume: union_measure(&boxes), error_bound: 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StripReport {
    pub volume: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Measure of the union of members meeting the boundary of `q`, against
/// `2^{2n} l(q)^{n-1} μ̄` where `μ̄` is the largest member side.
pub fn boundary_strip_volume(q: &GeomCube, f: &[GeomCube]) -> Result<StripReport> {
    let n = q.dim();
    let l = q.side();
    let mu = f.iter().map(|g| g.side()).fold(0.0, f64::max);
    if f.is_empty() {
        return Ok(StripReport { volume: 0.0, bound: 0.0, ok: true });
    }
    if !(mu < l / 2.0) {
        return Err(Error::Domain(format!("largest member side {mu} is not below l/2 = {}", l / 2.0)));
    }
    let meets: Vec<(Vec<f64>, Vec<f64>)> = f
        .iter()
        .filter(|g| {
            let touches = (0..n).all(|i| g.lower(i) <= q.upper(i) && q.lower(i) <= g.upper(i));
            let interior = (0..n).all(|i| q.lower(i) < g.lower(i) && g.upper(i) < q.upper(i));
            touches && !interior
        })
        .map(|g| ((0..n).map(|i| g.lower(i)).collect(), (0..n).map(|i| g.upper(i)).collect()))
        .collect();
    let volume = union_measure(&meets);
    let bound = (2.0 * n as f64).exp2() * l.powi(n as i32 - 1) * mu;
    Ok(StripReport { volume, bound, ok: volume <= bound * (1.0 + crate::REL_TOL) })
}

/// Constants of the neighborhood-volume estimate for given `(n, d, c̄, r)`:
/// `θ^n = (1 + c̄)/2`, the least `k*` with `θ^n + ([2r]+1)^n / 2^{k*(n-d)} < c̄`,
/// and `δ̄ = (θ − 1)/(2[r] + 1) · 2^{-k*}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeighborhoodConstants {
    pub theta: f64,
    pub k_star: u32,
    pub delta_bar: f64,
}

pub fn neighborhood_constants(n: usize, d: f64, cbar: f64, r: f64) -> Result<NeighborhoodConstants> {
    if !(d > 0.0 && d < n as f64) {
        return Err(Error::Domain(format!("d = {d} outside (0, {n})")));
    }
    if !(cbar > 1.0 && r > 1.0) {
        return Err(Error::Parameter("need cbar > 1 and r > 1".into()));
    }
    let nf = n as f64;
    let theta = ((1.0 + cbar) / 2.0).powf(1.0 / nf);
    let big = ((2.0 * r).floor() + 1.0).powf(nf);
    let slack = cbar - theta.powf(nf);
    let mut k_star = 1;
    while big / (k_star as f64 * (nf - d)).exp2() >= slack {
        k_star += 1;
    }
    let delta_bar = (theta - 1.0) / (2.0 * r.floor() + 1.0) * (-(k_star as f64)).exp2();
    Ok(NeighborhoodConstants { theta, k_star, delta_bar })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeighborhoodAudit {
    pub volume: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks `L^n(U_{rδτ}(∪F)) <= c̄ τ^{n-d} H^d(F)` for a family meeting
/// `δτ <= μ̲ <= μ̄ <= τ` with `δ <= δ̄`.
pub fn neighborhood_volume_audit(
    f: &[GeomCube],
    d: f64,
    cbar: f64,
    r: f64,
    delta: f64,
    tau: f64,
) -> Result<NeighborhoodAudit> {
    let Some(first) = f.first() else {
        return Ok(NeighborhoodAudit { volume: 0.0, bound: 0.0, ok: true });
    };
    let n = first.dim();
    let k = neighborhood_constants(n, d, cbar, r)?;
    if !(delta > 0.0 && delta <= k.delta_bar) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, {}]", k.delta_bar)));
    }
    let lo = f.iter().map(|g| g.side()).fold(f64::INFINITY, f64::min);
    let hi = f.iter().map(|g| g.side()).fold(0.0, f64::max);
    if !(delta * tau <= lo && hi <= tau) {
        return Err(Error::Domain(format!("sides [{lo}, {hi}] not within [δτ, τ]")));
    }
    let v = neighborhood_volume(NeighborhoodInput::Cubes(f), r * delta * tau, false)?.volume;
    let hd: f64 = f.iter().map(|g| g.side().powf(d)).sum();
    let bound = cbar * tau.powf(n as f64 - d) * hd;
    Ok(NeighborhoodAudit { volume: v, bound, ok: v <= bound * (1.0 + crate::REL_TOL) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::generate_cantor_base4;

    #[test]
    fn distance_examples() {
        let c = generate_cantor_base4(3).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let s = ThickSearch::new(&t, 0.5).unwrap();
        let x0 = c.cell_center(c.codes().next().unwrap());
        assert_eq!(thick_distance(&s, &x0).unwrap().value, 0.0);
        let mid = thick_distance(&s, &[0.5]).unwrap();
        assert!(mid.value > 0.0 && mid.value <= mid.dyadic_upper);
        let s2 = ThickSearch::new(&t, 0.25).unwrap();
        assert!(thick_distance(&s2, &[0.5]).unwrap().value <= mid.value);
        assert!(ThickSearch::new(&t, 0.0).is_err());
    }

    #[test]
    fn field_matches_pointwise() {
        let p = crate::grid::generate_percolation(2, 0.6, 4, 9).unwrap();
        let t = ContentTable::new(&p, 1.2).unwrap();
        let s = ThickSearch::new(&t, 0.4).unwrap();
        let f = thick_distance_field(&s);
        for code in 0..p.total_cells() {
            let x = p.cell_center(code);
            assert_eq!(f.value(code), thick_distance(&s, &x).unwrap().value, "{x:?}");
        }
    }

    #[test]
    fn neighborhood_examples() {
        let c = generate_cantor_base4(3).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let s = ThickSearch::new(&t, 0.5).unwrap();
        assert_eq!(thick_neighborhood(&s, 0.0).unwrap(), c);
        let big = thick_neighborhood(&s, 2.0).unwrap();
        assert_eq!(big, GridSet::full(1, 6));
        let a = thick_neighborhood(&s, 0.05).unwrap();
        let b = thick_neighborhood(&s, 0.2).unwrap();
        assert_eq!(crate::grid::set_algebra(&a, &b, crate::grid::SetOp::Difference).unwrap().cell_count(), 0);
    }

    #[test]
    fn volume_examples() {
        let cell = GridSet::from_cells(2, 4, &[vec![5, 7]]).unwrap();
        let h = 1.0 / 16.0;
        let v = neighborhood_volume(NeighborhoodInput::Region(&cell), h, true).unwrap();
        assert!((v.volume - (3.0 * h) * (3.0 * h)).abs() < 1e-15);
        let corner = GridSet::from_cells(2, 4, &[vec![0, 0]]).unwrap();
        let v = neighborhood_volume(NeighborhoodInput::Region(&corner), h, true).unwrap();
        assert!((v.volume - 4.0 * h * h).abs() < 1e-15);
        let v = neighborhood_volume(NeighborhoodInput::Region(&cell), 0.0, true).unwrap();
        assert_eq!(v.volume, h * h);
    }

    #[test]
    fn strip_examples() {
        let q = GeomCube { center: vec![0.5], half_side: 0.5 };
        let inner = GeomCube { center: vec![0.5], half_side: 0.1 };
        assert_eq!(boundary_strip_volume(&q, &[inner]).unwrap().volume, 0.0);
        let edge = GeomCube { center: vec![0.0], half_side: 1.0 / 16.0 };
        let r = boundary_strip_volume(&q, &[edge]).unwrap();
        assert!(r.ok && r.volume == 0.125 && r.bound == 4.0 * 0.125);
        let huge = GeomCube { center: vec![0.0], half_side: 0.3 };
        assert!(boundary_strip_volume(&q, &[huge]).is_err());
    }

    #[test]
    fn pseudometric_basics() {
        let c = generate_cantor_base4(2).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let pm = Pseudometric::new(ThickSearch::new(&t, 0.5).unwrap(), usize::MAX).unwrap();
        let x = [0.3];
        assert_eq!(pm.eval(&x, &x).unwrap().value, 0.0);
        let a = pm.eval(&[0.1], &[0.6]).unwrap();
        let b = pm.eval(&[0.6], &[0.1]).unwrap();
        assert_eq!(a.value, b.value);
        assert!(a.value >= 0.5 - 1.0 / 16.0);
        let t0 = ContentTable::new(&c, 0.0).unwrap();
        let pm0 = Pseudometric::new(ThickSearch::new(&t0, 0.5).unwrap(), usize::MAX).unwrap();
        let v = pm0.eval(&[0.03], &[0.97]).unwrap().value;
        assert!((v - (0.96875 - 0.03125)).abs() <= 1.0 / 16.0 + 1e-12);
        assert!(Pseudometric::new(ThickSearch::new(&t, 0.5).unwrap(), 0).is_err());
    }
}
