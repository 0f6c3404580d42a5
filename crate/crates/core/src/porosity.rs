//! Porosity certificates, cavities and empirical constant floors.
//!
//! Holes and cavities are cell-exact: a hole is a grid-anchored cube none of
//! whose cells is occupied, and every reported region is a set of cells.

use std::time::Instant;

use serde::Serialize;

use crate::content::{check_d, check_lambda, ContentTable};
use crate::cube::{morton_encode, CubeIndex, GeomCube, MAX_DIM};
use crate::grid::{GridRegion, GridSet};
use crate::thick::{thick_neighborhood_window, ThickSearch};
use crate::{side_pow, Error, Result};

/// Largest number of cells of a query cube scanned densely.
pub const DENSE_CELL_CAP: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PorosityCertificate {
    pub query: CubeIndex,
    pub hole: Option<GeomCube>,
    /// Lattice corner and side (cells) of the hole.
    pub hole_cells: Option<(Vec<u64>, u64)>,
    pub tau: f64,
    /// One cell relative to the query side: the resolution of `tau`.
    pub resolution: f64,
    pub fully_occupied: bool,
}

fn cell_box(q: &CubeIndex, depth: u32) -> ([u64; MAX_DIM], u64) {
    let w = 1u64 << (depth - q.depth);
    let mut lo = [0u64; MAX_DIM];
    for (i, &m) in q.corner.iter().enumerate() {
        lo[i] = m * w;
    }
    (lo, w)
}

fn check_cube(s: &GridSet, q: &CubeIndex) -> Result<()> {
    if q.dim() != s.dim() || q.depth > s.depth() {
        return Err(Error::Domain(format!("cube {q:?} not in the grid")));
    }
    Ok(())
}

/// Largest empty grid-anchored cube inside `q`; ties go to the smallest
/// lexicographic corner.
pub fn porosity_certificate(s: &GridSet, q: &CubeIndex) -> Result<PorosityCertificate> {
    check_cube(s, q)?;
    let n = s.dim();
    let (lo, w) = cell_box(q, s.depth());
    let h = s.cell_side();
    let best: Option<(Vec<u64>, u64)> = if n == 1 {
        // gaps between runs, Morton order equals cell order
        let (a, b) = (lo[0], lo[0] + w);
        let mut best: Option<(u64, u64)> = None;
        let mut cursor = a;
        let mut consider = |start: u64, end: u64| {
            if end > start && best.is_none_or(|(_, len)| end - start > len) {
                best = Some((start, end - start));
            }
        };
        for &(r0, r1) in s.runs() {
            if r1 <= a || r0 >= b {
                continue;
            }
            consider(cursor, r0.max(a));
            cursor = r1.min(b);
        }
        consider(cursor, b);
        best.map(|(c, l)| (vec![c], l))
    } else {
        let total = w.pow(n as u32);
        if total > DENSE_CELL_CAP {
            return Err(Error::Resource(format!("{total} cells exceed the dense scan limit")));
        }
        let wu = w as usize;
        let stride: Vec<usize> = (0..n).map(|i| wu.pow((n - 1 - i) as u32)).collect();
        let mut size = vec![0u32; total as usize];
        let mut best: Option<(usize, u32)> = None;
        // reverse lexicographic sweep: forward neighbours are already final
        for idx in (0..total as usize).rev() {
            let mut m = [0u64; MAX_DIM];
            let mut r = idx;
            for i in 0..n {
                m[i] = (r / stride[i]) as u64;
                r %= stride[i];
            }
            let mut g = [0u64; MAX_DIM];
            for i in 0..n {
                g[i] = lo[i] + m[i];
            }
            if s.contains_cell(&g[..n]) {
                continue;
            }
            let mut mn = u32::MAX;
            for mask in 1..(1usize << n) {
                let mut j = idx;
                let mut inside = true;
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        if m[i] + 1 >= w {
                            inside = false;
                            break;
                        }
                        j += stride[i];
                    }
                }
                mn = mn.min(if inside { size[j] } else { 0 });
            }
            size[idx] = 1 + mn;
            if best.is_none_or(|(_, b)| size[idx] >= b) {
                best = Some((idx, size[idx]));
            }
        }
        best.map(|(idx, side)| {
            let mut r = idx;
            let corner = (0..n)
                .map(|i| {
                    let v = (r / stride[i]) as u64;
                    r %= stride[i];
                    lo[i] + v
                })
                .collect();
            (corner, side as u64)
        })
    };
    let resolution = 1.0 / w as f64;
    Ok(match best {
        None => PorosityCertificate {
            query: q.clone(),
            hole: None,
            hole_cells: None,
            tau: 0.0,
            resolution,
            fully_occupied: true,
        },
        Some((corner, side)) => {
            let half = side as f64 * h / 2.0;
            let center = corner.iter().map(|&c| c as f64 * h + half).collect();
            PorosityCertificate {
                query: q.clone(),
                hole: Some(GeomCube { center, half_side: half }),
                tau: side as f64 / w as f64,
                hole_cells: Some((corner, side)),
                resolution,
                fully_occupied: false,
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CavityReport {
    pub query: CubeIndex,
    #[serde(skip)]
    pub region: GridRegion,
    pub cells: u64,
    pub gamma: f64,
    pub delta: f64,
    pub d: f64,
    pub lambda: f64,
    pub r: Option<f64>,
    pub kappa_cap: Option<f64>,
    /// Whether `gamma` is a lower bound rather than the exact ratio.
    pub inner_approximation: bool,
}

fn window(s: &GridSet, q: &CubeIndex) -> (Vec<u64>, Vec<u64>) {
    let (lo, w) = cell_box(q, s.depth());
    let n = s.dim();
    (lo[..n].to_vec(), lo[..n].iter().map(|&a| a + w).collect())
}

/// `W = qbar ∖ S_{δ l}`: the cells of `qbar` with thick distance `>= δ l(qbar)`.
pub fn cavity_w(search: &ThickSearch, qbar: &CubeIndex, delta: f64) -> Result<CavityReport> {
    let s = search.table().set();
    check_cube(s, qbar)?;
    if !(delta >= 0.0) {
        return Err(Error::Parameter(format!("delta = {delta} < 0")));
    }
    let (lo, hi) = window(s, qbar);
    let nb = thick_neighborhood_window(search, delta * qbar.side(), &lo, &hi)?;
    let inside = GridSet::from_runs(s.dim(), s.depth(), vec![qbar.code_range(s.depth())]);
    let region = crate::grid::set_algebra(&inside, &nb, crate::grid::SetOp::Difference)?;
    let cells = region.cell_count();
    Ok(CavityReport {
        query: qbar.clone(),
        gamma: cells as f64 / inside.cell_count() as f64,
        cells,
        region,
        delta,
        d: search.table().d(),
        lambda: search.lambda(),
        r: None,
        kappa_cap: None,
        inner_approximation: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThinSubcube {
    pub cube: Option<CubeIndex>,
    pub kappa: f64,
    /// No qualifying cube exists down to the grid depth.
    pub truncated: bool,
}

fn check_thin(t: &ContentTable, q: &CubeIndex, lambda_bar: f64) -> Result<()> {
    let c = t.cost(q);
    if !(c < lambda_bar * t.self_cost(q.depth)) {
        return Err(Error::Domain(format!(
            "cube {q:?} has content {c}, not below {lambda_bar} l^d"
        )));
    }
    Ok(())
}

/// Largest dyadic `Q ⊆ qbar` with `DH(Q ∩ S) < (λ̄/c) l(Q)^d`, scanning depth by
/// depth and taking the smallest lexicographic corner within a depth.
pub fn thin_subcube(t: &ContentTable, lambda_bar: f64, c: f64, qbar: &CubeIndex) -> Result<ThinSubcube> {
    check_lambda(lambda_bar)?;
    if !(c > 1.0) {
        return Err(Error::Parameter(format!("c = {c} must exceed 1")));
    }
    check_cube(t.set(), qbar)?;
    check_thin(t, qbar, lambda_bar)?;
    let n = t.set().dim();
    let target = lambda_bar / c;
    for k in qbar.depth..=t.set().depth() {
        let (lo, hi) = qbar.code_range(k);
        let found = (lo..hi)
            .filter(|&code| t.cost_code(k, code) < target * t.self_cost(k))
            .map(|code| CubeIndex::from_code(code, k, n))
            .min_by(|a, b| a.corner.cmp(&b.corner));
        if let Some(q) = found {
            let kappa = q.side() / qbar.side();
            return Ok(ThinSubcube { cube: Some(q), kappa, truncated: false });
        }
    }
    Ok(ThinSubcube { cube: None, kappa: 0.0, truncated: true })
}

/// `qbar` minus the `r`-dilates of thick dyadic cubes with side `<= κ l(qbar)`
/// that meet `qbar`. Cells whose interior meets a dilate are removed, so the
/// region is an inner approximation and `gamma` a lower bound.
pub fn thin_complement(
    t: &ContentTable,
    lambda: f64,
    r: f64,
    qbar: &CubeIndex,
    kappa_cap: f64,
) -> Result<CavityReport> {
    check_lambda(lambda)?;
    if !(r >= 1.0) {
        return Err(Error::Parameter(format!("r = {r} < 1")));
    }
    let s = t.set();
    check_cube(s, qbar)?;
    if !(t.cost(qbar) < t.self_cost(qbar.depth)) {
        return Err(Error::Domain(format!("cube {qbar:?} is in DF(1)")));
    }
    let n = s.dim();
    let (qlo, w) = cell_box(qbar, s.depth());
    let total = w.pow(n as u32);
    if total > DENSE_CELL_CAP {
        return Err(Error::Resource(format!("{total} cells exceed the dense scan limit")));
    }
    let wu = w as usize;
    let mut removed = vec![false; total as usize];
    let h = s.cell_side();
    let max_side = kappa_cap * qbar.side();
    let (ql, qh): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (qbar.lower(i), qbar.upper(i))).unzip();
    let mut stack = vec![CubeIndex::root(n)];
    while let Some(x) = stack.pop() {
        if t.cost(&x) == 0.0 {
            continue;
        }
        let reach = r * x.side() / 2.0;
        let far = (0..n).any(|i| {
            let (a, b) = (x.lower(i), x.upper(i));
            let c = (a + b) / 2.0;
            c + reach < ql[i] || c - reach > qh[i]
        });
        // descendants' dilates stay inside this node's dilate
        if far {
            continue;
        }
        if x.side() <= max_side && t.is_thick(&x, lambda) {
            let g = crate::cube::dilate(&x, r)?;
            let mut lo = [0u64; MAX_DIM];
            let mut hi = [0u64; MAX_DIM];
            let mut empty = false;
            for i in 0..n {
                let a = ((g.lower(i) / h).floor().max(qlo[i] as f64)) as u64;
                let b = ((g.upper(i) / h).ceil().min((qlo[i] + w) as f64)) as u64;
                if a >= b {
                    empty = true;
                }
                lo[i] = a - qlo[i].min(a);
                hi[i] = b.saturating_sub(qlo[i]);
            }
            if !empty {
                mark(&mut removed, wu, n, &lo, &hi);
            }
        }
        if x.depth < s.depth() {
            stack.extend(x.children());
        }
    }
    let codes: Vec<u64> = removed
        .iter()
        .enumerate()
        .filter(|(_, &rm)| !rm)
        .map(|(idx, _)| {
            let mut m = [0u64; MAX_DIM];
            let mut rest = idx;
            for i in (0..n).rev() {
                m[i] = qlo[i] + (rest % wu) as u64;
                rest /= wu;
            }
            morton_encode(&m[..n], s.depth())
        })
        .collect();
    let region = GridSet::from_codes(n, s.depth(), codes);
    // occupied cells are always removed: each lies in a thick leaf
    let region = crate::grid::set_algebra(&region, s, crate::grid::SetOp::Difference)?;
    let cells = region.cell_count();
    Ok(CavityReport {
        query: qbar.clone(),
        gamma: cells as f64 / total as f64,
        cells,
        region,
        delta: 0.0,
        d: t.d(),
        lambda,
        r: Some(r),
        kappa_cap: Some(kappa_cap),
        inner_approximation: true,
    })
}

fn mark(removed: &mut [bool], w: usize, n: usize, lo: &[u64], hi: &[u64]) {
    let mut m: Vec<u64> = lo[..n].to_vec();
    loop {
        let idx = m.iter().fold(0usize, |acc, &x| acc * w + x as usize);
        removed[idx] = true;
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            m[i] += 1;
            if m[i] < hi[i] {
                break;
            }
            m[i] = lo[i];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HollowCheck {
    pub gamma_measured: f64,
    pub gamma_bound: f64,
    pub ok: bool,
}

/// Compares the empty volume fraction of a thin cube with `1 − λ̄^{n/d}`.
pub fn hollow_bound_check(t: &ContentTable, lambda_bar: f64, qbar: &CubeIndex) -> Result<HollowCheck> {
    check_lambda(lambda_bar)?;
    check_cube(t.set(), qbar)?;
    check_thin(t, qbar, lambda_bar)?;
    let s = t.set();
    let n = s.dim() as f64;
    let occupied = s.occupied_in(qbar) as f64;
    let cells = (1u64 << (s.dim() as u32 * (s.depth() - qbar.depth))) as f64;
    let gamma_measured = 1.0 - occupied / cells;
    let gamma_bound = 1.0 - lambda_bar.powf(n / t.d());
    Ok(HollowCheck { gamma_measured, gamma_bound, ok: gamma_measured >= gamma_bound - 1e-9 })
}

/// Dyadic cubes up to `max_depth` with `DH(Q ∩ S) < λ̄ l(Q)^d`, in canonical order.
pub fn thin_cubes(t: &ContentTable, lambda_bar: f64, max_depth: u32) -> Vec<CubeIndex> {
    let n = t.set().dim();
    let top = max_depth.min(t.set().depth());
    let mut out = Vec::new();
    for k in 0..=top {
        for code in 0..1u64 << (n as u32 * k) {
            if t.cost_code(k, code) < lambda_bar * t.self_cost(k) {
                out.push(CubeIndex::from_code(code, k, n));
            }
        }
    }
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub set_id: String,
    pub d: f64,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub delta_or_kappa: f64,
    pub r: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub runtime_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Floors {
    pub set_id: String,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub thin_cubes: usize,
    /// Largest `δ = 2^{-i}` for which every thin cube keeps `gamma > 0`.
    pub delta_bar: f64,
    /// Worst gamma at `delta_bar / 2`.
    pub gamma_floor: Option<f64>,
    pub tau_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsTable {
    pub rows: Vec<ConstantsRow>,
    pub floors: Vec<Floors>,
    /// Measured gamma floors do not increase as `λ̄` grows (per set and `λ`).
    pub gamma_trend_ok: bool,
    /// Measured `δ̄` does not increase as `λ̄` grows.
    pub delta_trend_ok: bool,
}

impl ConstantsTable {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        let mut out = String::from("set_id,d,lambda,lambda_bar,delta_or_kappa,r,gamma,tau,runtime_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.set_id,
                r.d,
                r.lambda,
                r.lambda_bar,
                r.delta_or_kappa,
                opt(r.r),
                opt(r.gamma),
                opt(r.tau),
                r.runtime_ms
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamGrid {
    pub lambdas: Vec<f64>,
    pub lambda_bars: Vec<f64>,
    /// Exponents `i` of the ladder `δ = 2^{-i}`.
    pub delta_exponents: Vec<u32>,
    /// Deepest thin cube examined.
    pub max_cube_depth: u32,
}

/// Worst-case gamma and tau over the thin cubes of every set, per parameter
/// tuple. Rows carry timings; floors are timing-free and reproducible.
pub fn estimate_constants(
    corpus: &[(String, GridSet)],
    d: f64,
    grid: &ParamGrid,
) -> Result<ConstantsTable> {
    if corpus.is_empty() {
        return Err(Error::Parameter("empty corpus".into()));
    }
    let mut rows = Vec::new();
    let mut floors = Vec::new();
    for (id, s) in corpus {
        check_d(d, s.dim())?;
        let t = ContentTable::new(s, d)?;
        for &lambda in &grid.lambdas {
            let search = ThickSearch::new(&t, lambda)?;
            for &lb in &grid.lambda_bars {
                let thin = thin_cubes(&t, lb, grid.max_cube_depth);
                let mut tau_floor: Option<f64> = None;
                for q in &thin {
                    let tau = porosity_certificate(s, q)?.tau;
                    tau_floor = Some(tau_floor.map_or(tau, |f| f.min(tau)));
                }
                let mut delta_bar = 0.0;
                let mut exps = grid.delta_exponents.clone();
                exps.sort_unstable();
                for &i in &exps {
                    let start = Instant::now();
                    let delta = (-(i as f64)).exp2();
                    let mut worst: Option<f64> = None;
                    for q in &thin {
                        let g = cavity_w(&search, q, delta)?.gamma;
                        worst = Some(worst.map_or(g, |w| w.min(g)));
                    }
                    rows.push(ConstantsRow {
                        set_id: id.clone(),
                        d,
                        lambda,
                        lambda_bar: lb,
                        delta_or_kappa: delta,
                        r: None,
                        gamma: worst,
                        tau: tau_floor,
                        runtime_ms: start.elapsed().as_millis(),
                    });
                    if delta_bar == 0.0 && worst.is_none_or(|g| g > 0.0) {
                        delta_bar = delta;
                    }
                }
                let mut gamma_floor: Option<f64> = None;
                for q in &thin {
                    let g = cavity_w(&search, q, delta_bar / 2.0)?.gamma;
                    gamma_floor = Some(gamma_floor.map_or(g, |w| w.min(g)));
                }
                floors.push(Floors {
                    set_id: id.clone(),
                    lambda,
                    lambda_bar: lb,
                    thin_cubes: thin.len(),
                    delta_bar,
                    gamma_floor,
                    tau_floor,
                });
            }
        }
    }
    let mut gamma_trend_ok = true;
    let mut delta_trend_ok = true;
    for w in floors.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.set_id == b.set_id && a.lambda == b.lambda && a.lambda_bar < b.lambda_bar {
            if let (Some(x), Some(y)) = (a.gamma_floor, b.gamma_floor) {
                gamma_trend_ok &= y <= x;
            }
            if a.thin_cubes > 0 && b.thin_cubes > 0 {
                delta_trend_ok &= b.delta_bar <= a.delta_bar;
            }
        }
    }
    Ok(ConstantsTable { rows, floors, gamma_trend_ok, delta_trend_ok })
}

/// Measure of the occupied part of `q` relative to `l(q)^n`.
pub fn occupied_fraction(s: &GridSet, q: &CubeIndex) -> f64 {
    let cells = s.occupied_in(q) as f64;
    cells * side_pow(s.depth(), s.dim() as f64) / side_pow(q.depth, s.dim() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_cantor_base4, generate_example_61};

    #[test]
    fn certificate_examples() {
        let c = generate_cantor_base4(3).unwrap();
        let p = porosity_certificate(&c, &CubeIndex::root(1)).unwrap();
        assert_eq!(p.tau, 0.5);
        let hole = p.hole.unwrap();
        assert_eq!((hole.lower(0), hole.upper(0)), (0.25, 0.75));
        let full = GridSet::full(2, 3);
        let p = porosity_certificate(&full, &CubeIndex::root(2)).unwrap();
        assert!(p.fully_occupied && p.tau == 0.0);
        let s = generate_example_61(3).unwrap();
        let taus: Vec<f64> = (1..=3)
            .map(|j| {
                let q = CubeIndex::new(j, vec![(1 << j) - 2]).unwrap();
                porosity_certificate(&s, &q).unwrap().tau
            })
            .collect();
        assert!(taus.windows(2).all(|w| w[1] < w[0]), "{taus:?}");
    }

    #[test]
    fn dense_hole_is_empty_and_maximal() {
        let p = crate::grid::generate_percolation(2, 0.8, 5, 4).unwrap();
        let q = CubeIndex::root(2);
        let cert = porosity_certificate(&p, &q).unwrap();
        let (corner, side) = cert.hole_cells.unwrap();
        for a in 0..side {
            for b in 0..side {
                assert!(!p.contains_cell(&[corner[0] + a, corner[1] + b]));
            }
        }
        // no empty cube one cell larger anywhere
        let big = side + 1;
        for x in 0..=(32 - big.min(32)) {
            for y in 0..=(32 - big.min(32)) {
                let empty = (0..big).all(|a| (0..big).all(|b| !p.contains_cell(&[x + a, y + b])));
                assert!(!empty);
            }
        }
    }

    #[test]
    fn cavity_examples() {
        let c = generate_cantor_base4(3).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let s = ThickSearch::new(&t, 0.5).unwrap();
        let q = CubeIndex::root(1);
        let r0 = cavity_w(&s, &q, 0.0).unwrap();
        assert_eq!(r0.gamma, 1.0 - occupied_fraction(&c, &q));
        let r1 = cavity_w(&s, &q, 0.1).unwrap();
        let r2 = cavity_w(&s, &q, 0.3).unwrap();
        let extra = crate::grid::set_algebra(&r2.region, &r1.region, crate::grid::SetOp::Difference);
        assert_eq!(extra.unwrap().cell_count(), 0);
    }

    #[test]
    fn thin_examples() {
        let e = GridSet::empty(1, 4);
        let t = ContentTable::new(&e, 0.5).unwrap();
        let q = CubeIndex::root(1);
        let r = thin_subcube(&t, 0.5, 2.0, &q).unwrap();
        assert_eq!((r.cube, r.kappa), (Some(q.clone()), 1.0));
        let c = generate_cantor_base4(3).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let half = CubeIndex::new(1, vec![0]).unwrap();
        let r = thin_subcube(&t, 0.9, 2.0, &half).unwrap();
        assert!(r.cube.unwrap().depth <= 4);
        assert!(thin_subcube(&t, 0.5, 2.0, &q).is_err());

        let g = thin_complement(&ContentTable::new(&e, 0.5).unwrap(), 0.5, 2.0, &q, 0.5).unwrap();
        assert_eq!(g.gamma, 1.0);
        let a = thin_complement(&t, 0.5, 1.5, &half, 0.1).unwrap().gamma;
        let b = thin_complement(&t, 0.5, 1.5, &half, 0.3).unwrap().gamma;
        let c2 = thin_complement(&t, 0.5, 3.0, &half, 0.3).unwrap().gamma;
        assert!(b <= a && c2 <= b);
    }

    #[test]
    fn hollow_examples() {
        let e = GridSet::empty(2, 3);
        let t = ContentTable::new(&e, 1.0).unwrap();
        let h = hollow_bound_check(&t, 0.5, &CubeIndex::root(2)).unwrap();
        assert!(h.ok && h.gamma_measured == 1.0);
    }
}
