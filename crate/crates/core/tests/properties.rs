use proptest::prelude::*;

use dyadic_porosity::content::{dyadic_content, hausdorff_content_bounds, ContentTable};
use dyadic_porosity::cube::CubeIndex;
use dyadic_porosity::grid::{set_algebra, GridSet, SetOp};
use dyadic_porosity::keystone::{canonical_decomposition_with, verify_canonical};
use dyadic_porosity::oracle::{all_cubes, brute_content};
use dyadic_porosity::porosity::{cavity_w, porosity_certificate};
use dyadic_porosity::thick::ThickSearch;

/// Random set as a keep-mask over all cells, with `n` and depth drawn small.
fn grid_set(max_depth: [u32; 2]) -> impl Strategy<Value = GridSet> {
    (1usize..=2)
        .prop_flat_map(move |n| (Just(n), 0..=max_depth[n - 1]))
        .prop_flat_map(|(n, depth)| {
            let total = 1usize << (n as u32 * depth);
            (Just(n), Just(depth), proptest::collection::vec(any::<bool>(), total))
        })
        .prop_map(|(n, depth, keep)| {
            GridSet::from_codes(n, depth, keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i as u64))
        })
}

fn nonempty(max_depth: [u32; 2]) -> impl Strategy<Value = GridSet> {
    grid_set(max_depth).prop_filter("nonempty", |s| !s.is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn table_matches_exhaustive_minimum(s in grid_set([3, 2]), frac in 0.05f64..0.95) {
        let d = frac * s.dim() as f64;
        for q in all_cubes(s.dim(), s.depth().min(1)) {
            prop_assert_eq!(dyadic_content(&s, &q, d).unwrap().to_bits(), brute_content(&s, &q, d).unwrap().to_bits());
        }
    }

    #[test]
    fn content_is_monotone_under_inclusion(s in grid_set([6, 3]), drop in any::<u64>(), frac in 0.0f64..1.0) {
        let d = frac * s.dim() as f64;
        let sub = GridSet::from_codes(s.dim(), s.depth(), s.codes().filter(|c| (drop >> (c % 64)) & 1 == 0).collect::<Vec<_>>());
        let root = CubeIndex::root(s.dim());
        prop_assert!(dyadic_content(&sub, &root, d).unwrap() <= dyadic_content(&s, &root, d).unwrap());
    }

    #[test]
    fn content_bounds_are_ordered(s in grid_set([6, 3]), frac in 0.05f64..1.0) {
        let n = s.dim();
        let (lo, hi) = hausdorff_content_bounds(&s, &CubeIndex::root(n), frac * n as f64).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!(lo == 0.0 || hi / lo <= (1u64 << n) as f64 + 1e-9);
    }

    #[test]
    fn cavities_shrink_as_delta_grows(s in nonempty([6, 3]), a in 0.01f64..0.5, b in 0.01f64..0.5, lambda in 0.05f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let t = ContentTable::new(&s, 0.5 * s.dim() as f64).unwrap();
        let search = ThickSearch::new(&t, lambda).unwrap();
        let q = CubeIndex::root(s.dim());
        let wide = cavity_w(&search, &q, lo).unwrap();
        let narrow = cavity_w(&search, &q, hi).unwrap();
        let extra = set_algebra(&narrow.region, &wide.region, SetOp::Difference).unwrap();
        prop_assert!(extra.is_empty());
        prop_assert!(set_algebra(&wide.region, &s, SetOp::Intersect).unwrap().is_empty());
    }

    #[test]
    fn porosity_hole_is_empty_and_maximal_in_size(s in grid_set([7, 3])) {
        let q = CubeIndex::root(s.dim());
        let cert = porosity_certificate(&s, &q).unwrap();
        match &cert.hole_cells {
            None => prop_assert!(cert.fully_occupied && cert.tau == 0.0),
            Some((corner, side)) => {
                prop_assert_eq!(cert.tau, *side as f64 / s.side_cells() as f64);
                let n = s.dim();
                let mut idx = vec![0u64; n];
                loop {
                    let cell: Vec<u64> = (0..n).map(|i| corner[i] + idx[i]).collect();
                    prop_assert!(!s.contains_cell(&cell));
                    let mut i = 0;
                    while i < n && idx[i] + 1 == *side {
                        idx[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                    idx[i] += 1;
                }
                // no empty dyadic cube is larger than the certified hole
                for k in 0..=s.depth() {
                    let w = 1u64 << (s.depth() - k);
                    if w <= *side {
                        break;
                    }
                    for c in all_cubes(n, k) {
                        prop_assert!(s.occupied_in(&c) > 0);
                    }
                }
            }
        }
    }

    #[test]
    fn json_round_trip(s in grid_set([7, 3])) {
        let back = GridSet::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn canonical_axioms_hold(s in nonempty([7, 3]), frac in 0.1f64..1.0, lambda in 0.05f64..1.0) {
        let t = ContentTable::new(&s, frac * s.dim() as f64).unwrap();
        let dec = canonical_decomposition_with(&t, lambda, usize::MAX).unwrap();
        let r = verify_canonical(&t, &dec);
        prop_assert!(r.passed(), "{:?}", r.failures);
    }
}
