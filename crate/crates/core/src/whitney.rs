//! Cavity decomposition of `Q_{0,0} ∖ S` into pieces whose size is comparable
//! to the thick distance, with a verifier for coverage, comparability, volume
//! floors and bounded overlap.
//!
//! Everything lives at cell resolution: `x` ranges over cell centres and a
//! piece is a set of cells. Hosts are dyadic cubes at depth `k_x + 4`, clamped
//! to the grid depth so that each host is a union of cells.

use serde::Serialize;
use serde_json::{json, Value};

use crate::content::ContentTable;
use crate::cube::{morton_decode, morton_encode, CubeIndex, MAX_DIM};
use crate::grid::{GridRegion, GridSet};
use crate::json::num;
use crate::porosity::{cavity_w, thin_cubes};
use crate::thick::{next_lex, thick_distance_field, ThickDistanceField, ThickSearch, INF};
use crate::{Error, Result};

/// Admissible ranges for `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LambdaRange {
    pub lambda_s: f64,
    /// `λ_S / (c^d 6^n)`, strict upper end.
    pub statement: f64,
    /// `λ_S / (3^n c^d)`, inclusive upper end used by the construction.
    pub proof: f64,
    pub within_statement: bool,
    pub within_proof: bool,
}

pub fn lambda_range(t: &ContentTable, lambda: f64, c: f64) -> LambdaRange {
    let n = t.set().dim() as i32;
    let lambda_s = t.cost(&CubeIndex::root(t.set().dim()));
    let cd = c.powf(t.d());
    let statement = lambda_s / (cd * 6f64.powi(n));
    let proof = lambda_s / (3f64.powi(n) * cd);
    LambdaRange {
        lambda_s,
        statement,
        proof,
        within_statement: lambda > 0.0 && lambda < statement,
        within_proof: lambda > 0.0 && lambda <= proof,
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("c = {c} must exceed 1")));
    }
    Ok(())
}

/// `c / 2^k`, exact.
fn scale(c: f64, k: u32) -> f64 {
    c * (-(k as f64)).exp2()
}

/// The unique `k >= 0` with `c/2^{k+1} <= v < c/2^k`, for `0 < v < c`.
fn layer_index(c: f64, v: f64) -> u32 {
    let mut k = 0;
    while scale(c, k + 1) > v {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub c: f64,
    pub lambda: f64,
    pub i: u32,
    /// `(k, L_{k,i})` for every `k` with a nonempty layer, ascending.
    pub layers: Vec<(u32, GridRegion)>,
    pub warning: Option<String>,
}

impl LayerStack {
    /// Largest number of layers sharing one cell.
    pub fn multiplicity(&self) -> u32 {
        let Some((_, first)) = self.layers.first() else { return 0 };
        let mut count = vec![0u32; first.total_cells() as usize];
        for (_, l) in &self.layers {
            for code in l.codes() {
                count[code as usize] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    pub fn union(&self, dim: usize, depth: u32) -> GridRegion {
        let codes = self.layers.iter().flat_map(|(_, l)| l.codes().collect::<Vec<_>>());
        GridSet::from_codes(dim, depth, codes)
    }
}

fn field_checked(field: &ThickDistanceField) -> Result<()> {
    if let Some(code) = (0..field.len() as u64).find(|&c| field.units(c) == INF) {
        let x = morton_decode(code, field.depth(), field.dim());
        return Err(Error::Domain(format!(
            "cell {:?} has no thick cube; λ exceeds the content of S",
            &x[..field.dim()]
        )));
    }
    Ok(())
}

/// `L_{k,i} = {x ∉ S : c/2^{k+i+1} <= D(x) < c/2^k}` by thresholding the field.
pub fn build_layers(field: &ThickDistanceField, range: &LambdaRange, c: f64, i: u32) -> Result<LayerStack> {
    check_c(c)?;
    field_checked(field)?;
    let max_v = (0..field.len() as u64).map(|x| field.value(x)).fold(0.0, f64::max);
    let min_v = (0..field.len() as u64)
        .map(|x| field.value(x))
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut layers = Vec::new();
    if min_v.is_finite() {
        let k_hi = layer_index(c, min_v);
        let k_lo = layer_index(c, max_v).saturating_sub(i);
        for k in k_lo..=k_hi {
            let l = field.threshold(scale(c, k + i + 1), scale(c, k));
            if !l.is_empty() {
                layers.push((k, l));
            }
        }
    }
    Ok(LayerStack { c, lambda: field.lambda, i, layers, warning: admissibility_warning(range, field.lambda) })
}

fn admissibility_warning(range: &LambdaRange, lambda: f64) -> Option<String> {
    (!range.within_proof).then(|| {
        format!("λ = {lambda} exceeds the admissible bound {} (statement bound {})", range.proof, range.statement)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub host: CubeIndex,
    pub k: u32,
    pub region: GridRegion,
}

impl Piece {
    pub fn measure(&self) -> f64 {
        crate::grid::lebesgue_measure(&self.region)
    }

    /// ∞-norm diameter: the largest axis extent of the cells.
    pub fn diam(&self) -> f64 {
        let n = self.region.dim();
        let mut lo = [u64::MAX; MAX_DIM];
        let mut hi = [0u64; MAX_DIM];
        for code in self.region.codes() {
            let m = self.region.decode(code);
            for i in 0..n {
                lo[i] = lo[i].min(m[i]);
                hi[i] = hi[i].max(m[i] + 1);
            }
        }
        let extent = (0..n).map(|i| hi[i].saturating_sub(lo[i])).max().unwrap_or(0);
        extent as f64 * self.region.cell_side()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CavityDecomposition {
    pub d: f64,
    pub lambda: f64,
    pub c: f64,
    pub delta_bar: f64,
    pub j_star: u32,
    pub range: LambdaRange,
    pub pieces: Vec<Piece>,
    /// Cells whose host had to be clamped to the grid depth.
    pub clamped_hosts: usize,
    pub warning: Option<String>,
}

impl CavityDecomposition {
    pub fn multiplicity_bound(&self, n: usize) -> u64 {
        4u64.pow(n as u32) * (self.j_star as u64 + 1)
    }

    pub fn to_json(&self, report: Option<&WhitneyReport>) -> Value {
        let pieces: Vec<Value> = self
            .pieces
            .iter()
            .map(|p| {
                json!({
                    "host": p.host,
                    "k": p.k,
                    "cells": p.region.cells(),
                    "measure": num(p.measure()),
                    "diam": num(p.diam()),
                })
            })
            .collect();
        let mut v = json!({
            "d": num(self.d),
            "lambda": num(self.lambda),
            "c": num(self.c),
            "delta_bar": num(self.delta_bar),
            "j_star": self.j_star,
            "lambda_range": self.range,
            "clamped_hosts": self.clamped_hosts,
            "warning": self.warning,
            "pieces": pieces,
        });
        if let Some(r) = report {
            v["verification"] = serde_json::to_value(r).unwrap_or(Value::Null);
        }
        v
    }
}

/// `j* = −⌊log₂(δ̄/c)⌋ + 5`.
pub fn j_star(delta_bar: f64, c: f64) -> Result<u32> {
    if !(delta_bar > 0.0 && delta_bar < 1.0) {
        return Err(Error::Parameter(format!("delta_bar = {delta_bar} outside (0, 1)")));
    }
    let v = 5.0 - (delta_bar / c).log2().floor();
    Ok(v as u32)
}

/// Largest `δ = 2^{-i}` for which every dyadic cube of depth `<= max_depth`
/// with content `< λ̄ l^d` keeps a nonempty cavity. Without thin cubes the
/// constraint is vacuous and `1/2` is returned; when no tested `δ` works the
/// finest one, `2^{-K}`, is returned.
pub fn empirical_delta_bar(search: &ThickSearch, lambda_bar: f64, max_depth: u32) -> Result<f64> {
    let t = search.table();
    let k = t.set().depth();
    let thin = thin_cubes(t, lambda_bar, max_depth);
    if thin.is_empty() {
        return Ok(0.5);
    }
    for i in 1..=k.max(1) {
        let delta = (-(i as f64)).exp2();
        let mut ok = true;
        for q in &thin {
            if cavity_w(search, q, delta)?.gamma <= 0.0 {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(delta);
        }
    }
    Ok((-(k.max(1) as f64)).exp2())
}

/// Lexicographically first thick grid-anchored cube of side `side` holding cell `m`.
fn witness(search: &ThickSearch, m: &[u64], side: u64) -> Option<Vec<u64>> {
    let n = m.len();
    let cells = search.side_cells();
    let lo: Vec<u64> = m.iter().map(|&x| x.saturating_sub(side - 1)).collect();
    let hi: Vec<u64> = m.iter().map(|&x| x.min(cells - side)).collect();
    let mut corner = lo.clone();
    loop {
        if search.is_thick_box(&corner, side) {
            return Some(corner);
        }
        if !next_lex(&mut corner[..n], &lo, &hi) {
            return None;
        }
    }
}

/// Smallest-corner dyadic cube at depth `kh` inside the cell box
/// `[a, a + side)` whose triple holds the centre of cell `m`.
fn host(a: &[u64], side: u64, m: &[u64], kh: u32, depth: u32) -> Option<CubeIndex> {
    let w = 1u64 << (depth - kh);
    let mut corner = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        // in units of half cells: x = 2m+1, triple = [2w(q-1), 2w(q+2)]
        let x = 2 * m[i] + 1;
        let first = a[i].div_ceil(w);
        let last = (a[i] + side) / w;
        let q = (first..last).find(|&q| 2 * w * (q + 2) >= x && x + 2 * w >= 2 * w * q)?;
        corner.push(q);
    }
    CubeIndex::new(kh, corner).ok()
}

/// Cells of `3Q` clipped to the unit cube.
fn triple_cells(q: &CubeIndex, depth: u32) -> (Vec<u64>, Vec<u64>) {
    let w = 1u64 << (depth - q.depth);
    let cells = 1u64 << depth;
    let lo = q.corner.iter().map(|&c| (c * w).saturating_sub(w)).collect();
    let hi = q.corner.iter().map(|&c| ((c + 2) * w).min(cells)).collect();
    (lo, hi)
}

pub struct WhitneyInput<'a> {
    pub search: &'a ThickSearch<'a>,
    pub c: f64,
    pub delta_bar: f64,
}

/// Builds the piece family. `x` ranges over cell centres outside `S`.
pub fn build_cavity_decomposition(input: &WhitneyInput) -> Result<CavityDecomposition> {
    let search = input.search;
    let c = input.c;
    check_c(c)?;
    let t = search.table();
    let s = t.set();
    let (n, depth) = (s.dim(), s.depth());
    let range = lambda_range(t, search.lambda(), c);
    let js = j_star(input.delta_bar, c)?;
    let field = thick_distance_field(search);
    field_checked(&field)?;
    let mut hosts: Vec<(CubeIndex, u32)> = Vec::new();
    let mut clamped = 0;
    for code in 0..s.total_cells() {
        let units = field.units(code);
        if units == 0 {
            continue;
        }
        let k = layer_index(c, field.value(code));
        let m = morton_decode(code, depth, n);
        let a = witness(search, &m[..n], units).ok_or_else(|| {
            Error::Internal(format!("cell {:?}: no thick cube of side {units} cells", &m[..n]))
        })?;
        let kh = if k + 4 > depth {
            clamped += 1;
            depth
        } else {
            k + 4
        };
        let h = host(&a, units, &m[..n], kh, depth)
            .ok_or_else(|| Error::Internal(format!("cell {:?}: no host at depth {kh}", &m[..n])))?;
        hosts.push((h, k));
    }
    hosts.sort();
    hosts.dedup();
    let lo_d = |k: u32| scale(c, k + js + 2);
    let mut pieces = Vec::with_capacity(hosts.len());
    for (h, k) in hosts {
        let (lo, hi) = triple_cells(&h, depth);
        let mut codes = Vec::new();
        let mut cell = lo.clone();
        let top: Vec<u64> = hi.iter().map(|&x| x - 1).collect();
        loop {
            let code = morton_encode(&cell, depth);
            let v = field.value(code);
            if v > 0.0 && lo_d(k) <= v && v < scale(c, k) {
                codes.push(code);
            }
            if !next_lex(&mut cell, &lo, &top) {
                break;
            }
        }
        pieces.push(Piece { host: h, k, region: GridSet::from_codes(n, depth, codes) });
    }
    Ok(CavityDecomposition {
        d: t.d(),
        lambda: search.lambda(),
        c,
        delta_bar: input.delta_bar,
        j_star: js,
        range,
        pieces,
        clamped_hosts: clamped,
        warning: admissibility_warning(&range, search.lambda()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitneyReport {
    pub coverage: bool,
    /// First cell centre outside `S` not covered by any piece.
    pub uncovered: Option<Vec<f64>>,
    pub comparability: bool,
    #[serde(with = "crate::json::inf_f64")]
    pub c1: f64,
    pub comparability_witness: Option<Vec<f64>>,
    pub volume: bool,
    pub c2: f64,
    pub multiplicity: bool,
    pub c3: u64,
    pub c3_bound: u64,
    /// Pieces that stick out of `Q_{0,0} ∖ S` or the triple of their host.
    pub containment: bool,
}

impl WhitneyReport {
    pub fn passed(&self) -> bool {
        self.coverage && self.comparability && self.volume && self.multiplicity && self.containment
    }
}

/// Checks coverage, the pointwise two-sided comparison `D(y) ~ diam Ω`, the
/// volume floor and the overlap bound `4^n (j* + 1)`.
pub fn verify_decomposition(dec: &CavityDecomposition, field: &ThickDistanceField, s: &GridSet) -> WhitneyReport {
    let (n, depth) = (s.dim(), s.depth());
    let total = s.total_cells() as usize;
    let mut count = vec![0u64; total];
    let mut containment = true;
    let mut c1: f64 = 1.0;
    let mut c1_witness = None;
    let mut c2 = f64::INFINITY;
    for p in &dec.pieces {
        let diam = p.diam();
        let (lo, hi) = triple_cells(&p.host, depth);
        if !p.region.is_empty() {
            c2 = c2.min(p.measure() / diam.powi(n as i32));
        }
        for code in p.region.codes() {
            count[code as usize] += 1;
            let m = p.region.decode(code);
            if s.contains_code(code) || (0..n).any(|i| m[i] < lo[i] || m[i] >= hi[i]) {
                containment = false;
            }
            let v = field.value(code);
            let r = if v > 0.0 { (v / diam).max(diam / v) } else { f64::INFINITY };
            if r > c1 {
                c1 = r;
                c1_witness = Some(s.cell_center(code));
            }
        }
    }
    let uncovered = (0..total as u64)
        .find(|&code| !s.contains_code(code) && count[code as usize] == 0)
        .map(|code| s.cell_center(code));
    let c3 = count.iter().copied().max().unwrap_or(0);
    let c3_bound = dec.multiplicity_bound(n);
    if dec.pieces.is_empty() {
        c2 = 0.0;
    }
    WhitneyReport {
        coverage: uncovered.is_none(),
        uncovered,
        comparability: c1.is_finite(),
        c1,
        comparability_witness: if c1.is_finite() { None } else { c1_witness },
        volume: dec.pieces.is_empty() || c2 > 0.0,
        c2,
        multiplicity: c3 <= c3_bound,
        c3,
        c3_bound,
        containment,
    }
}

/// Index of the first piece that is the only cover of one of its cells.
/// Deleting it must break coverage.
pub fn essential_piece(dec: &CavityDecomposition) -> Option<usize> {
    let first = dec.pieces.first()?;
    let mut count = vec![0u32; first.region.total_cells() as usize];
    for p in &dec.pieces {
        for code in p.region.codes() {
            count[code as usize] += 1;
        }
    }
    dec.pieces.iter().position(|p| p.region.codes().any(|c| count[c as usize] == 1))
}
