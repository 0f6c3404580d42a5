//! Dyadic cube arithmetic, cube families and family functionals.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{side_pow, Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 3;

/// The closed dyadic cube `prod [m_i 2^-k, (m_i + 1) 2^-k]`.
///
/// The derived ordering is the canonical one: depth first, then the corner
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeIndex {
    pub depth: u32,
    pub corner: Vec<u64>,
}

impl CubeIndex {
    pub fn new(depth: u32, corner: Vec<u64>) -> Result<Self> {
        if corner.is_empty() || corner.len() > MAX_DIM {
            return Err(Error::Domain(format!("dimension {} unsupported", corner.len())));
        }
        if depth > 60 {
            return Err(Error::Resource(format!("depth {depth} exceeds 60")));
        }
        if corner.iter().any(|&m| m >> depth != 0) {
            return Err(Error::Domain(format!(
                "corner {corner:?} outside the unit cube at depth {depth}"
            )));
        }
        Ok(CubeIndex { depth, corner })
    }

    pub fn root(n: usize) -> Self {
        CubeIndex { depth: 0, corner: vec![0; n] }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> f64 {
        side_pow(self.depth, 1.0)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.corner[axis] as f64 * self.side()
    }

    pub fn upper(&self, axis: usize) -> f64 {
        (self.corner[axis] + 1) as f64 * self.side()
    }

    /// Whether `other` is a (non-strict) dyadic sub-cube of `self`.
    pub fn contains(&self, other: &CubeIndex) -> bool {
        if other.depth < self.depth || other.dim() != self.dim() {
            return false;
        }
        let shift = other.depth - self.depth;
        self.corner.iter().zip(&other.corner).all(|(&a, &b)| b >> shift == a)
    }

    /// Two dyadic cubes overlap (share interior points) iff one contains the other.
    pub fn overlaps(&self, other: &CubeIndex) -> bool {
        self.contains(other) || other.contains(self)
    }

    pub fn parent(&self) -> Option<CubeIndex> {
        (self.depth > 0).then(|| CubeIndex {
            depth: self.depth - 1,
            corner: self.corner.iter().map(|m| m >> 1).collect(),
        })
    }

    /// Ancestor at the given (coarser or equal) depth.
    pub fn ancestor(&self, depth: u32) -> CubeIndex {
        assert!(depth <= self.depth);
        let shift = self.depth - depth;
        CubeIndex { depth, corner: self.corner.iter().map(|m| m >> shift).collect() }
    }

    /// The `2^n` children in Morton order.
    pub fn children(&self) -> Vec<CubeIndex> {
        let n = self.dim();
        (0..1u64 << n)
            .map(|c| CubeIndex {
                depth: self.depth + 1,
                corner: (0..n)
                    .map(|i| 2 * self.corner[i] + ((c >> (n - 1 - i)) & 1))
                    .collect(),
            })
            .collect()
    }

    /// Bit-interleaved code of the corner; sub-cubes of `self` at depth `K`
    /// occupy the contiguous code range [`CubeIndex::code_range`].
    pub fn code(&self) -> u64 {
        morton_encode(&self.corner, self.depth)
    }

    pub fn from_code(code: u64, depth: u32, n: usize) -> Self {
        CubeIndex { depth, corner: morton_decode(code, depth, n)[..n].to_vec() }
    }

    /// Half-open range of depth-`k` codes inside this cube.
    pub fn code_range(&self, k: u32) -> (u64, u64) {
        assert!(k >= self.depth);
        let shift = self.dim() as u32 * (k - self.depth);
        let c = self.code();
        (c << shift, (c + 1) << shift)
    }

    pub fn to_geom(&self) -> GeomCube {
        let s = self.side();
        GeomCube {
            center: self.corner.iter().map(|&m| (m as f64 + 0.5) * s).collect(),
            half_side: 0.5 * s,
        }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|i| self.lower(i) <= x[i] && x[i] <= self.upper(i))
    }
}

pub fn morton_encode(corner: &[u64], depth: u32) -> u64 {
    let mut code = 0u64;
    for b in (0..depth).rev() {
        for &m in corner {
            code = (code << 1) | ((m >> b) & 1);
        }
    }
    code
}

pub fn morton_decode(code: u64, depth: u32, n: usize) -> [u64; MAX_DIM] {
    let mut out = [0u64; MAX_DIM];
    for b in 0..depth {
        for i in 0..n {
            let bit = (code >> (b as usize * n + (n - 1 - i))) & 1;
            out[i] |= bit << b;
        }
    }
    out
}

/// The closed cube `Q_l(x) = prod [x_i - l, x_i + l]`; `half_side == 0` is a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomCube {
    pub center: Vec<f64>,
    pub half_side: f64,
}

impl GeomCube {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_side
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_side
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|i| self.lower(i) <= x[i] && x[i] <= self.upper(i))
    }

    /// Same center, `c` times the half-side.
    pub fn scaled(&self, c: f64) -> GeomCube {
        GeomCube { center: self.center.clone(), half_side: c * self.half_side }
    }
}

/// `cQ`: same center, half-side `c 2^{-k-1}`.
pub fn dilate(q: &CubeIndex, c: f64) -> Result<GeomCube> {
    if !(c >= 1.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("dilation factor {c} must be >= 1")));
    }
    Ok(q.to_geom().scaled(c))
}

/// A finite family of dyadic cubes in canonical order without duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CubeFamily {
    members: Vec<CubeIndex>,
}

impl CubeFamily {
    pub fn new(mut members: Vec<CubeIndex>) -> Self {
        members.sort();
        members.dedup();
        CubeFamily { members }
    }

    pub fn empty() -> Self {
        CubeFamily { members: Vec::new() }
    }

    pub fn members(&self) -> &[CubeIndex] {
        &self.members
    }

    pub fn into_members(self) -> Vec<CubeIndex> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, q: &CubeIndex) -> bool {
        self.members.binary_search(q).is_ok()
    }

    /// Interiors of distinct members are pairwise disjoint.
    pub fn is_non_overlapping(&self) -> bool {
        let keys: HashSet<(u32, &[u64])> =
            self.members.iter().map(|q| (q.depth, q.corner.as_slice())).collect();
        self.members.iter().all(|q| {
            let mut a = q.clone();
            while let Some(p) = a.parent() {
                if keys.contains(&(p.depth, p.corner.as_slice())) {
                    return false;
                }
                a = p;
            }
            true
        })
    }

    pub fn union(&self, other: &CubeFamily) -> CubeFamily {
        CubeFamily::new(self.members.iter().chain(&other.members).cloned().collect())
    }

    /// The member containing `q` (non-strictly), if any.
    pub fn container_of(&self, q: &CubeIndex) -> Option<&CubeIndex> {
        let mut a = Some(q.clone());
        while let Some(c) = a {
            if let Ok(i) = self.members.binary_search(&c) {
                return Some(&self.members[i]);
            }
            a = c.parent();
        }
        None
    }
}

impl FromIterator<CubeIndex> for CubeFamily {
    fn from_iter<T: IntoIterator<Item = CubeIndex>>(iter: T) -> Self {
        CubeFamily::new(iter.into_iter().collect())
    }
}

/// `H^d(F) = sum of side^d`, summed in canonical member order.
pub fn family_content_sum(f: &CubeFamily, d: f64) -> f64 {
    f.members.iter().map(|q| side_pow(q.depth, d)).sum()
}

/// (metric floor, metric roof) = (min side, max side).
pub fn metric_floor_roof(f: &CubeFamily) -> Result<(f64, f64)> {
    let (first, last) = match (f.members.first(), f.members.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Domain("metric floor of an empty family".into())),
    };
    // canonical order is by depth, so the extremes are the ends
    Ok((last.side(), first.side()))
}

/// Maximum number of closed cubes sharing a point, evaluated exactly at every
/// vertex of the arrangement generated by the cube faces.
pub fn covering_multiplicity(f: &[GeomCube]) -> usize {
    let Some(first) = f.first() else { return 0 };
    let n = first.dim();
    let mut axes: Vec<Vec<f64>> = (0..n)
        .map(|i| f.iter().flat_map(|q| [q.lower(i), q.upper(i)]).collect())
        .collect();
    for a in axes.iter_mut() {
        a.sort_by(|x, y| x.total_cmp(y));
        a.dedup();
    }
    let mut best = 0;
    let mut idx = vec![0usize; n];
    let mut p = vec![0.0; n];
    loop {
        for i in 0..n {
            p[i] = axes[i][idx[i]];
        }
        let count = f.iter().filter(|q| q.contains_point(&p)).count();
        best = best.max(count);
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Outcome of comparing two non-overlapping families under the refinement
/// order (`a ⪰ b` iff every member of `b` lies in a member of `a`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Comparison {
    Equal,
    Dominates { strict: bool },
    DominatedBy { strict: bool },
    Incomparable,
}

/// `Some(strict)` when `a ⪰ b`; `strict` means every containing cube is strictly larger.
pub fn dominates(a: &CubeFamily, b: &CubeFamily) -> Option<bool> {
    let mut strict = true;
    for q in &b.members {
        {
            let c = a.container_of(q)?;
            strict &= c.depth < q.depth
        }
    }
    Some(strict)
}

pub fn family_compare(a: &CubeFamily, b: &CubeFamily) -> Result<Comparison> {
    for (name, f) in [("first", a), ("second", b)] {
        if !f.is_non_overlapping() {
            return Err(Error::Domain(format!("{name} family is overlapping")));
        }
    }
    Ok(match (dominates(a, b), dominates(b, a)) {
        (Some(_), Some(_)) => Comparison::Equal,
        (Some(s), None) => Comparison::Dominates { strict: s },
        (None, Some(s)) => Comparison::DominatedBy { strict: s },
        (None, None) => Comparison::Incomparable,
    })
}

/// `G|_U`: members contained in `u`.
pub fn restrict(f: &CubeFamily, u: &CubeIndex) -> CubeFamily {
    CubeFamily { members: f.members.iter().filter(|q| u.contains(q)).cloned().collect() }
}

/// All cubes of `D_k` in dimension `n`.
pub fn grid_level(n: usize, k: u32) -> CubeFamily {
    let count = 1u64 << (n as u32 * k);
    (0..count).map(|c| CubeIndex::from_code(c, k, n)).collect()
}
