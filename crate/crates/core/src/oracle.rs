//! Brute-force references for small grids.
//!
//! These enumerate every candidate explicitly and are meant for depths of
//! three or less. Sums follow child order so results compare bit-for-bit with
//! the table-driven code.

use crate::cube::CubeIndex;
use crate::grid::GridSet;
use crate::{side_pow, Error, Result};

/// Upper limit on the number of coverings materialized per node.
pub const MAX_COVERS: usize = 1 << 22;

/// Costs of every dyadic antichain covering of `S ∩ q` by cubes of depth
/// `<= K`, one entry per covering.
pub fn antichain_costs(s: &GridSet, q: &CubeIndex, d: f64) -> Result<Vec<f64>> {
    covers(s, q, d, s.dim())
}

fn covers(s: &GridSet, q: &CubeIndex, d: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let occupied = s.occupied_in(q) > 0;
    if !occupied {
        out.push(0.0);
    }
    out.push(side_pow(q.depth, d));
    if q.depth < s.depth() {
        // every combination of one covering per child, summed in child order
        let mut acc = vec![0.0f64];
        for c in 0..1u64 << n {
            let child = CubeIndex::from_code((q.code() << n) | c, q.depth + 1, n);
            let opts = covers(s, &child, d, n)?;
            if acc.len() * opts.len() > MAX_COVERS {
                return Err(Error::Resource("too many coverings to enumerate".into()));
            }
            acc = acc.iter().flat_map(|&a| opts.iter().map(move |&b| a + b)).collect();
        }
        out.extend(acc);
    }
    Ok(out)
}

/// Minimum over all antichain coverings.
pub fn brute_content(s: &GridSet, q: &CubeIndex, d: f64) -> Result<f64> {
    let costs = antichain_costs(s, q, d)?;
    Ok(costs.into_iter().fold(f64::INFINITY, f64::min))
}

/// Every dyadic cube of depth `<= K`, in canonical order.
pub fn all_cubes(n: usize, depth: u32) -> Vec<CubeIndex> {
    let mut out: Vec<CubeIndex> = (0..=depth)
        .flat_map(|k| (0..1u64 << (n as u32 * k)).map(move |c| CubeIndex::from_code(c, k, n)))
        .collect();
    out.sort();
    out
}
