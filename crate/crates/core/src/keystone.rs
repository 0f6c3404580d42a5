//! Keystone families: maximal thick sub-cubes, the canonical stratification of
//! the thick dyadic cubes, nice sequences and their packing audit.
//!
//! Strata are numbered from 1. Stratum 1 is the family of maximal thick cubes
//! strictly below the root; when the root itself is thick it is reported
//! separately through `root_thick` and every stratum index shifts by one
//! relative to a numbering that starts at the root.

use rand::Rng;
use rustc_hash::FxHashSet;
use serde::Serialize;
use serde_json::{json, Value};

use crate::content::{check_d, check_lambda, optimal_covering_with, ContentTable};
use crate::cube::{dominates, family_content_sum, CubeFamily, CubeIndex};
use crate::grid::{GridSet, NodeState};
use crate::{le_tol, side_pow, Error, Result, REL_TOL};

fn nonempty_children(t: &ContentTable, q: &CubeIndex) -> Vec<CubeIndex> {
    if q.depth >= t.set().depth() {
        return Vec::new();
    }
    q.children().into_iter().filter(|c| t.cost(c) > 0.0).collect()
}

/// DF(1) membership: content equals `side^d` up to the relative tolerance.
pub fn in_df1(t: &ContentTable, q: &CubeIndex) -> bool {
    let c = t.cost(q);
    c > 0.0 && crate::ge_tol(c, t.self_cost(q.depth))
}

/// Maximal thick dyadic cubes strictly inside `q`, in canonical order.
/// Occupied depth-`K` cells are always thick, so the result covers `S ∩ q`.
pub fn maximal_thick_children_with(t: &ContentTable, q: &CubeIndex, lambda: f64) -> Vec<CubeIndex> {
    let mut out = Vec::new();
    let mut stack: Vec<CubeIndex> = nonempty_children(t, q).into_iter().rev().collect();
    while let Some(c) = stack.pop() {
        if t.is_thick(&c, lambda) {
            out.push(c);
        } else {
            stack.extend(nonempty_children(t, &c).into_iter().rev());
        }
    }
    out
}

pub fn maximal_thick_children(
    s: &GridSet,
    q: &CubeIndex,
    d: f64,
    lambda: f64,
) -> Result<CubeFamily> {
    check_lambda(lambda)?;
    let t = ContentTable::new(s, d)?;
    if t.cost(q) == 0.0 {
        return Err(Error::Domain(format!("cube {q:?} has no occupied cells")));
    }
    Ok(CubeFamily::new(maximal_thick_children_with(&t, q, lambda)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalDecomposition {
    pub d: f64,
    pub lambda: f64,
    pub root_thick: bool,
    /// `strata[s - 1]` is stratum `s`.
    pub strata: Vec<CubeFamily>,
}

impl CanonicalDecomposition {
    pub fn to_json(&self) -> Value {
        let strata: Vec<Value> = self
            .strata
            .iter()
            .enumerate()
            .map(|(i, f)| {
                json!({
                    "stratum": i + 1,
                    "count": f.len(),
                    "content_sum": family_content_sum(f, self.d),
                    "cubes": f.members(),
                })
            })
            .collect();
        json!({
            "d": self.d,
            "lambda": self.lambda,
            "root_thick": self.root_thick,
            "strata": strata,
        })
    }
}

pub fn canonical_decomposition(s: &GridSet, d: f64, lambda: f64) -> Result<CanonicalDecomposition> {
    let t = ContentTable::new(s, d)?;
    canonical_decomposition_with(&t, lambda, usize::MAX)
}

/// Iterates maximal thick children from the root until only depth-`K` cells
/// remain, keeping at most `max_stratum` strata.
pub fn canonical_decomposition_with(
    t: &ContentTable,
    lambda: f64,
    max_stratum: usize,
) -> Result<CanonicalDecomposition> {
    check_lambda(lambda)?;
    let root = CubeIndex::root(t.set().dim());
    if t.cost(&root) == 0.0 {
        return Err(Error::Domain("decomposition of an empty set".into()));
    }
    let mut strata = Vec::new();
    let mut current = maximal_thick_children_with(t, &root, lambda);
    while !current.is_empty() && strata.len() < max_stratum {
        let next: Vec<CubeIndex> =
            current.iter().flat_map(|q| maximal_thick_children_with(t, q, lambda)).collect();
        strata.push(CubeFamily::new(current));
        current = next;
    }
    Ok(CanonicalDecomposition {
        d: t.d(),
        lambda,
        root_thick: t.is_thick(&root, lambda),
        strata,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AxiomReport {
    pub union_is_df: bool,
    pub strata_nice: bool,
    pub strictly_decreasing: bool,
    pub gap_property: bool,
    /// Number of intermediate cubes inspected for the gap property.
    pub gap_cubes_checked: usize,
    pub failures: Vec<String>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.union_is_df && self.strata_nice && self.strictly_decreasing && self.gap_property
    }
}

/// Every nonempty dyadic cube of the set that passes the thickness test.
pub fn enumerate_df(t: &ContentTable, lambda: f64) -> Vec<CubeIndex> {
    let mut out = Vec::new();
    let mut stack = vec![CubeIndex::root(t.set().dim())];
    while let Some(q) = stack.pop() {
        if t.is_thick(&q, lambda) {
            out.push(q.clone());
        }
        if t.set().node_state(&q) != NodeState::Empty {
            stack.extend(nonempty_children(t, &q));
        }
    }
    out.sort();
    out
}

/// Exhaustive check of the four decomposition properties.
pub fn verify_canonical(t: &ContentTable, dec: &CanonicalDecomposition) -> AxiomReport {
    let mut r = AxiomReport {
        union_is_df: true,
        strata_nice: true,
        strictly_decreasing: true,
        gap_property: true,
        ..Default::default()
    };
    let lambda = dec.lambda;
    let n = t.set().dim();
    let root = CubeIndex::root(n);
    let kmax = t.set().depth();

    // (1) union of strata (with the root when thick) is exactly DF
    let mut union: Vec<CubeIndex> = dec.strata.iter().flat_map(|f| f.members().to_vec()).collect();
    if dec.root_thick {
        union.push(root.clone());
    }
    union.sort();
    let dup = union.windows(2).any(|w| w[0] == w[1]);
    let df = enumerate_df(t, lambda);
    if dup || union != df {
        r.union_is_df = false;
        r.failures.push(format!(
            "union of strata has {} cubes (duplicates: {dup}), DF has {}",
            union.len(),
            df.len()
        ));
    }

    // (2) each stratum is non-overlapping, thick and covers S up to cells
    // already terminated at depth K in earlier strata
    let mut terminated: FxHashSet<u64> = FxHashSet::default();
    for (i, f) in dec.strata.iter().enumerate() {
        if !f.is_non_overlapping() {
            r.strata_nice = false;
            r.failures.push(format!("stratum {} overlaps", i + 1));
        }
        if let Some(q) = f.members().iter().find(|q| !t.is_thick(q, lambda)) {
            r.strata_nice = false;
            r.failures.push(format!("stratum {} holds thin cube {q:?}", i + 1));
        }
        let covered: u64 = f.members().iter().map(|q| t.set().occupied_in(q)).sum();
        if covered + terminated.len() as u64 != t.set().cell_count() {
            r.strata_nice = false;
            r.failures.push(format!("stratum {} does not cover the set", i + 1));
        }
        terminated.extend(f.members().iter().filter(|q| q.depth == kmax).map(|q| q.code()));
    }

    // (3) strict refinement between consecutive strata
    for (i, w) in dec.strata.windows(2).enumerate() {
        if dominates(&w[0], &w[1]) != Some(true) {
            r.strictly_decreasing = false;
            r.failures.push(format!("stratum {} does not strictly refine stratum {}", i + 2, i + 1));
        }
    }

    // (4) no thick cube strictly between a cube and its container one stratum up
    let root_family = CubeFamily::new(vec![root]);
    let mut upper = &root_family;
    for f in &dec.strata {
        for q in f.members() {
            let Some(top) = upper.container_of(q) else { continue };
            // the root is only a stratum member when thick; otherwise it is a frame
            for k in top.depth + 1..q.depth {
                r.gap_cubes_checked += 1;
                let mid = q.ancestor(k);
                if t.is_thick(&mid, lambda) {
                    r.gap_property = false;
                    r.failures.push(format!("thick cube {mid:?} between {top:?} and {q:?}"));
                }
            }
        }
        upper = f;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NiceSequence {
    pub d: f64,
    pub lambda: f64,
    pub eps: f64,
    /// `levels[0]` holds the root when `S` is nonempty.
    pub levels: Vec<CubeFamily>,
    /// Per thin cube split by an `eps > 0` covering: `H^d` of the thin
    /// remainder after each round, relative to the cube's `side^d`.
    pub remainder_decay: Vec<Vec<f64>>,
}

impl NiceSequence {
    pub fn to_json(&self) -> Value {
        let levels: Vec<Value> = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, f)| {
                json!({
                    "level": i,
                    "count": f.len(),
                    "content_sum": family_content_sum(f, self.d),
                    "cubes": f.members(),
                })
            })
            .collect();
        json!({ "d": self.d, "lambda": self.lambda, "eps": self.eps, "levels": levels })
    }
}

/// Thick almost-covering of a thin cube: `eps`-optimal coverings, with thin
/// members covered again until none remain.
fn thin_cube_family(
    t: &ContentTable,
    q: &CubeIndex,
    lambda: f64,
    eps: f64,
    decay: &mut Vec<Vec<f64>>,
) -> Result<Vec<CubeIndex>> {
    let mut out = Vec::new();
    let mut thin = vec![q.clone()];
    let mut trail = Vec::new();
    while !thin.is_empty() {
        let mut next = Vec::new();
        for c in &thin {
            for m in optimal_covering_with(t, c, eps)?.into_members() {
                if t.is_thick(&m, lambda) {
                    out.push(m);
                } else {
                    next.push(m);
                }
            }
        }
        let rem: f64 = next.iter().map(|m| t.self_cost(m.depth)).sum();
        trail.push(rem / t.self_cost(q.depth));
        thin = next;
    }
    if eps > 0.0 {
        decay.push(trail);
    }
    Ok(out)
}

pub fn nice_sequence(s: &GridSet, d: f64, lambda: f64) -> Result<NiceSequence> {
    let t = ContentTable::new(s, d)?;
    nice_sequence_with(&t, lambda, 0.0)
}

/// Level `s + 1` replaces every cube of level `s`: a thin cube by the thick
/// members of its optimal coverings, a DF(1) cube by its thick children and
/// the coverings of its thin children. Depth-`K` cells persist, and the
/// construction stops once every member is such a cell.
pub fn nice_sequence_with(t: &ContentTable, lambda: f64, eps: f64) -> Result<NiceSequence> {
    check_lambda(lambda)?;
    if eps < 0.0 || (eps > 0.0 && eps >= 1.0 - lambda) {
        return Err(Error::Parameter(format!("eps = {eps} must lie in [0, 1 - lambda)")));
    }
    let set = t.set();
    let root = CubeIndex::root(set.dim());
    let mut seq = NiceSequence { d: t.d(), lambda, eps, levels: Vec::new(), remainder_decay: Vec::new() };
    if t.cost(&root) == 0.0 {
        return Ok(seq);
    }
    let kmax = set.depth();
    let mut current = vec![root];
    seq.levels.push(CubeFamily::new(current.clone()));
    while current.iter().any(|q| q.depth < kmax) {
        let mut next = Vec::new();
        for q in &current {
            if q.depth == kmax {
                next.push(q.clone());
            } else if in_df1(t, q) {
                for c in nonempty_children(t, q) {
                    if t.is_thick(&c, lambda) {
                        next.push(c);
                    } else {
                        next.extend(thin_cube_family(t, &c, lambda, eps, &mut seq.remainder_decay)?);
                    }
                }
            } else {
                next.extend(thin_cube_family(t, q, lambda, eps, &mut seq.remainder_decay)?);
            }
        }
        let fam = CubeFamily::new(next);
        current = fam.members().to_vec();
        seq.levels.push(fam);
    }
    let report = validate_nice_sequence(t, &seq);
    if !report.passed() {
        return Err(Error::Internal(format!("nice sequence failed validation: {:?}", report.failures)));
    }
    Ok(seq)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NiceReport {
    pub levels_nice: bool,
    pub refinement: bool,
    pub packing: bool,
    pub packing_checks: usize,
    /// Largest observed ratio of level sum to its bound.
    pub worst_packing_ratio: f64,
    pub failures: Vec<String>,
}

impl NiceReport {
    pub fn passed(&self) -> bool {
        self.levels_nice && self.refinement && self.packing
    }
}

/// Checks the defining conditions of a nice sequence, the packing inequality
/// on every dyadic sub-cube that holds a member of the next level.
pub fn validate_nice_sequence(t: &ContentTable, seq: &NiceSequence) -> NiceReport {
    let mut r = NiceReport { levels_nice: true, refinement: true, packing: true, ..Default::default() };
    let set = t.set();
    let d = t.d();
    let kmax = set.depth();
    if let Some(l0) = seq.levels.first() {
        if l0.members() != [CubeIndex::root(set.dim())] {
            r.levels_nice = false;
            r.failures.push("level 0 is not the root".into());
        }
    }
    for (s, f) in seq.levels.iter().enumerate().skip(1) {
        if !f.is_non_overlapping() {
            r.levels_nice = false;
            r.failures.push(format!("level {s} overlaps"));
        }
        if let Some(q) = f.members().iter().find(|q| !t.is_thick(q, seq.lambda)) {
            r.levels_nice = false;
            r.failures.push(format!("level {s} holds thin cube {q:?}"));
        }
        let covered: u64 = f.members().iter().map(|q| set.occupied_in(q)).sum();
        if covered != set.cell_count() {
            r.levels_nice = false;
            r.failures.push(format!("level {s} covers {covered} of {} cells", set.cell_count()));
        }
    }
    for (s, w) in seq.levels.windows(2).enumerate() {
        let (upper, lower) = (&w[0], &w[1]);
        match dominates(upper, lower) {
            None => {
                r.refinement = false;
                r.failures.push(format!("level {} does not refine level {s}", s + 1));
            }
            Some(_) => {
                // equal containers are allowed only for terminal cells
                if let Some(q) = lower
                    .members()
                    .iter()
                    .find(|q| q.depth < kmax && upper.container_of(q).map(|c| c.depth) == Some(q.depth))
                {
                    r.refinement = false;
                    r.failures.push(format!("level {} repeats non-terminal cube {q:?}", s + 1));
                }
            }
        }
        // packing: sum of level s+1 inside Q, for Q ⊆ Qbar ∈ level s
        let mut sums: rustc_hash::FxHashMap<CubeIndex, f64> = rustc_hash::FxHashMap::default();
        for m in lower.members() {
            let Some(top) = upper.container_of(m) else { continue };
            let w = side_pow(m.depth, d);
            for k in top.depth..=m.depth {
                *sums.entry(m.ancestor(k)).or_default() += w;
            }
        }
        let mut keys: Vec<_> = sums.into_iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        for (q, sum) in keys {
            let is_top = upper.contains(&q);
            let bound = if is_top && in_df1(t, &q) {
                (set.dim() as f64 - d).exp2() * side_pow(q.depth, d)
            } else {
                side_pow(q.depth, d)
            };
            r.packing_checks += 1;
            r.worst_packing_ratio = r.worst_packing_ratio.max(sum / bound);
            if !le_tol(sum, bound) {
                r.packing = false;
                r.failures.push(format!("level {} packs {sum} > {bound} in {q:?}", s + 1));
            }
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PackingAudit {
    pub j0: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Smallest level index whose restriction to `q` covers `S ∩ q`; `0` for the
/// root. A literal reading of the squeeze with level 0 is vacuous for proper
/// sub-cubes, so levels from 1 on are scanned for them.
pub fn packing_j0(t: &ContentTable, seq: &NiceSequence, q: &CubeIndex) -> Option<usize> {
    if q.depth == 0 && !seq.levels.is_empty() {
        return Some(0);
    }
    let need = t.set().occupied_in(q);
    seq.levels.iter().enumerate().skip(1).find_map(|(j, f)| {
        let got: u64 =
            f.members().iter().filter(|m| q.contains(m)).map(|m| t.set().occupied_in(m)).sum();
        (got == need).then_some(j)
    })
}

pub fn packing_bound_audit(
    t: &ContentTable,
    seq: &NiceSequence,
    lambda2: f64,
    q: &CubeIndex,
    c: &CubeFamily,
) -> Result<PackingAudit> {
    check_lambda(lambda2)?;
    let j0 = packing_j0(t, seq, q)
        .ok_or_else(|| Error::Domain(format!("no level of the sequence covers S inside {q:?}")))?;
    let level = crate::cube::restrict(&seq.levels[j0], q);
    if !c.is_non_overlapping() {
        return Err(Error::Domain("squeezed family overlaps".into()));
    }
    if let Some(m) = c.members().iter().find(|m| !q.contains(m)) {
        return Err(Error::Domain(format!("squeeze {{Q}} ⪰ C fails at {m:?}")));
    }
    if dominates(c, &level).is_none() {
        return Err(Error::Domain(format!("squeeze C ⪰ level {j0} fails")));
    }
    if let Some(m) = c.members().iter().find(|m| !t.is_thick(m, lambda2)) {
        return Err(Error::Domain(format!("member {m:?} is not thick for lambda2")));
    }
    let d = t.d();
    let lhs = family_content_sum(c, d);
    let factor = if in_df1(t, q) { (t.set().dim() as f64 - d).exp2() } else { 1.0 };
    let rhs = factor * side_pow(q.depth, d) / lambda2;
    Ok(PackingAudit { j0, lhs, rhs, ok: lhs <= rhs * (1.0 + REL_TOL) })
}

/// Random family squeezed between `{q}` and level `j0` restricted to `q`:
/// walks down from `q`, taking a `lambda2`-thick cube with probability `p`
/// and always at level members. `None` when a forced member is not thick.
pub fn random_squeezed<R: Rng>(
    t: &ContentTable,
    seq: &NiceSequence,
    q: &CubeIndex,
    lambda2: f64,
    p: f64,
    rng: &mut R,
) -> Option<CubeFamily> {
    let j0 = packing_j0(t, seq, q)?;
    let level = crate::cube::restrict(&seq.levels[j0], q);
    let mut out = Vec::new();
    let mut stack = vec![q.clone()];
    while let Some(x) = stack.pop() {
        let forced = level.contains(&x);
        let thick = t.is_thick(&x, lambda2);
        if forced || (thick && rng.gen::<f64>() < p) {
            if !thick {
                return None;
            }
            out.push(x);
            continue;
        }
        for c in nonempty_children(t, &x) {
            if level.members().iter().any(|m| c.contains(m)) {
                stack.push(c);
            }
        }
    }
    Some(CubeFamily::new(out))
}

/// Input validation shared by the CLI.
pub fn check_decomposition_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (0, 1)")));
    }
    Ok(())
}

pub fn check_inputs(s: &GridSet, d: f64) -> Result<()> {
    check_d(d, s.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::grid_level;
    use crate::grid::generate_cantor_base4;

    fn q(k: u32, m: &[u64]) -> CubeIndex {
        CubeIndex::new(k, m.to_vec()).unwrap()
    }

    #[test]
    fn maximal_children_examples() {
        let c = generate_cantor_base4(3).unwrap();
        let f = maximal_thick_children(&c, &CubeIndex::root(1), 0.5, 1.0).unwrap();
        assert_eq!(f.members(), &[q(2, &[0]), q(2, &[3])]);
        let full = GridSet::full(2, 3);
        let f = maximal_thick_children(&full, &CubeIndex::root(2), 1.0, 1.0).unwrap();
        assert_eq!(f, grid_level(2, 1));
        // one-sided set: everything in the left child
        let one = GridSet::from_cells(1, 4, &[vec![1], vec![2]]).unwrap();
        let f = maximal_thick_children(&one, &CubeIndex::root(1), 0.5, 1.0).unwrap();
        assert!(f.members().iter().all(|m| q(1, &[0]).contains(m)));
        let e = GridSet::empty(1, 3);
        assert!(maximal_thick_children(&e, &CubeIndex::root(1), 0.5, 1.0).is_err());
    }

    #[test]
    fn canonical_examples() {
        let full = GridSet::full(1, 3);
        let dec = canonical_decomposition(&full, 0.5, 0.9).unwrap();
        assert!(dec.root_thick);
        let want: Vec<CubeFamily> = (1..=3).map(|k| grid_level(1, k)).collect();
        assert_eq!(dec.strata, want);

        let c = generate_cantor_base4(3).unwrap();
        let dec = canonical_decomposition(&c, 0.5, 1.0).unwrap();
        assert_eq!(dec.strata.len(), 3);
        for (i, f) in dec.strata.iter().enumerate() {
            let s = i as u32 + 1;
            assert_eq!(f.len(), 1 << s);
            assert!(f.members().iter().all(|m| m.depth == 2 * s));
        }
        let t = ContentTable::new(&c, 0.5).unwrap();
        let r = verify_canonical(&t, &dec);
        assert!(r.passed(), "{:?}", r.failures);
        // cubes between strata fail the test
        for m in dec.strata[1].members() {
            assert!(!t.is_thick(&m.ancestor(3), 1.0));
        }
    }

    #[test]
    fn nice_examples() {
        let full = GridSet::full(1, 4);
        let seq = nice_sequence(&full, 0.5, 0.5).unwrap();
        let want: Vec<CubeFamily> = (0..=4).map(|k| grid_level(1, k)).collect();
        assert_eq!(seq.levels, want);

        let c = generate_cantor_base4(3).unwrap();
        let seq = nice_sequence(&c, 0.5, 0.9).unwrap();
        for (s, f) in seq.levels.iter().enumerate() {
            for m in f.members() {
                assert!(m.depth >= (2 * s as u32).min(6), "level {s}: {m:?}");
            }
        }
    }

    #[test]
    fn packing_examples() {
        let c = generate_cantor_base4(4).unwrap();
        let t = ContentTable::new(&c, 0.5).unwrap();
        let seq = nice_sequence_with(&t, 1.0, 0.0).unwrap();
        // the root squeezes only itself
        let root = CubeIndex::root(1);
        let only = CubeFamily::new(vec![root.clone()]);
        assert!(packing_bound_audit(&t, &seq, 1.0, &root, &only).unwrap().ok);
        let finer = CubeFamily::new(vec![q(2, &[0]), q(2, &[3])]);
        assert!(packing_bound_audit(&t, &seq, 1.0, &root, &finer).is_err());

        // [0, 1/8] sits between strata: the level below holds [0, 1/16]
        let between = q(3, &[0]);
        assert!(!in_df1(&t, &between));
        let c = CubeFamily::new(vec![q(4, &[0])]);
        let a = packing_bound_audit(&t, &seq, 1.0, &between, &c).unwrap();
        assert!(a.ok);
        assert_eq!(a.lhs, 0.25);
        assert!((a.rhs - 8f64.powf(-0.5)).abs() < 1e-12);

        // a thin cube alone
        let thin = q(1, &[0]);
        assert!(!in_df1(&t, &thin));
        let a = packing_bound_audit(&t, &seq, 0.5, &thin, &CubeFamily::new(vec![thin.clone()]));
        // {q} is only admissible if thick for lambda2
        assert!(a.is_ok());
        let a = a.unwrap();
        assert!(a.ok && a.lhs == side_pow(1, 0.5));
    }
}
