//! Self-checks behind `verify`: each prints one PASS/FAIL line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::content::{dyadic_content, hausdorff_content_bounds, ContentTable};
use crate::corpus::{standard_corpus, GeneratorSpec};
use crate::cube::CubeIndex;
use crate::grid::{generate_cantor_base4, generate_percolation, GridSet};
use crate::keystone::{canonical_decomposition_with, nice_sequence_with, validate_nice_sequence, verify_canonical};
use crate::oracle::brute_content;
use crate::thick::{thick_distance_field, Pseudometric, ThickSearch};
use crate::whitney::{
    build_cavity_decomposition, empirical_delta_bar, lambda_range, verify_decomposition, WhitneyInput,
};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Quick,
    Full,
}

/// Uniformly random subset of the depth-`K` cells, each kept with probability 1/2.
pub fn random_set<R: Rng>(n: usize, depth: u32, rng: &mut R) -> GridSet {
    let total = 1u64 << (n as u32 * depth);
    GridSet::from_codes(n, depth, (0..total).filter(|_| rng.gen_bool(0.5)).collect::<Vec<_>>())
}

type Check = (&'static str, fn(Profile) -> Result<Option<String>>);

/// Runs every check; `true` when all pass.
pub fn run(profile: Profile) -> bool {
    let checks: [Check; 7] = [
        ("content-oracle", oracle),
        ("content-sandwich", sandwich),
        ("canonical-axioms", canonical),
        ("nice-sequence", nice),
        ("pseudometric", pseudometric),
        ("cavity-decomposition", whitney),
        ("svg-determinism", svg),
    ];
    let mut all = true;
    for (name, f) in checks {
        match f(profile) {
            Ok(None) => println!("PASS {name}"),
            Ok(Some(why)) => {
                all = false;
                println!("FAIL {name}: {why}");
            }
            Err(e) => {
                all = false;
                println!("FAIL {name}: {e}");
            }
        }
    }
    all
}

fn oracle(p: Profile) -> Result<Option<String>> {
    let trials = if p == Profile::Full { 200 } else { 40 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..trials {
        let n = 1 + i % 2;
        let depth = rng.gen_range(0..=if n == 1 { 3 } else { 2 });
        let s = random_set(n, depth, &mut rng);
        for d in [0.25, 0.5, 0.9 * n as f64] {
            let q = CubeIndex::root(n);
            let (a, b) = (dyadic_content(&s, &q, d)?, brute_content(&s, &q, d)?);
            if a != b {
                return Ok(Some(format!("trial {i}, d = {d}: table {a} vs brute {b}")));
            }
        }
    }
    Ok(None)
}

fn corpus(p: Profile) -> Result<Vec<(String, GridSet)>> {
    let specs = standard_corpus();
    let keep = |id: &str| p == Profile::Full || ["cantor4_t2", "cantor4_t3", "full_n2", "perc_n2_s0"].contains(&id);
    specs.into_iter().filter(|(id, _)| keep(id)).map(|(id, g)| Ok((id, g.build()?))).collect()
}

fn sandwich(p: Profile) -> Result<Option<String>> {
    for (id, s) in corpus(p)? {
        let n = s.dim();
        for d in [0.5 * n as f64, n as f64] {
            let (lo, hi) = hausdorff_content_bounds(&s, &CubeIndex::root(n), d)?;
            if lo > hi || (lo > 0.0 && hi / lo > (1u64 << n) as f64 + 1e-9) {
                return Ok(Some(format!("{id}, d = {d}: [{lo}, {hi}]")));
            }
        }
    }
    Ok(None)
}

fn canonical(p: Profile) -> Result<Option<String>> {
    let mut sets = vec![("cantor4_t3".to_string(), generate_cantor_base4(3)?), ("full".into(), GridSet::full(2, 3))];
    if p == Profile::Full {
        sets.push(("cantor4_t4".into(), generate_cantor_base4(4)?));
        for seed in 0..5 {
            sets.push((format!("perc_s{seed}"), generate_percolation(2, 0.7, 5, seed)?));
        }
    }
    for (id, s) in &sets {
        let t = ContentTable::new(s, 0.5 * s.dim() as f64)?;
        for lambda in [0.3, 0.7] {
            let dec = canonical_decomposition_with(&t, lambda, usize::MAX)?;
            let r = verify_canonical(&t, &dec);
            if !r.passed() {
                return Ok(Some(format!("{id}, lambda = {lambda}: {:?}", r.failures.first())));
            }
        }
    }
    Ok(None)
}

fn nice(p: Profile) -> Result<Option<String>> {
    let iters = if p == Profile::Full { 4 } else { 3 };
    let s = generate_cantor_base4(iters)?;
    let t = ContentTable::new(&s, 0.5)?;
    for (lambda, eps) in [(0.5, 0.0), (0.9, 0.05)] {
        let seq = nice_sequence_with(&t, lambda, eps)?;
        let r = validate_nice_sequence(&t, &seq);
        if !r.passed() {
            return Ok(Some(format!("lambda = {lambda}: {:?}", r.failures.first())));
        }
    }
    Ok(None)
}

fn pseudometric(p: Profile) -> Result<Option<String>> {
    let s = generate_cantor_base4(2)?;
    let t = ContentTable::new(&s, 0.5)?;
    let pm = Pseudometric::new(ThickSearch::new(&t, 0.5)?, usize::MAX)?;
    let h = s.cell_side();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = if p == Profile::Full { 1000 } else { 100 };
    for _ in 0..trials {
        let pts: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.gen::<f64>()]).collect();
        let r = |a: &[f64], b: &[f64]| pm.eval(a, b).map(|e| e.value);
        let (xy, yx) = (r(&pts[0], &pts[1])?, r(&pts[1], &pts[0])?);
        let (xz, zy) = (r(&pts[0], &pts[2])?, r(&pts[2], &pts[1])?);
        if xy != yx {
            return Ok(Some(format!("asymmetric at {pts:?}")));
        }
        if xy > xz + zy + 2.0 * h {
            return Ok(Some(format!("triangle fails at {pts:?}")));
        }
    }
    Ok(None)
}

fn whitney(p: Profile) -> Result<Option<String>> {
    let iters: &[u32] = if p == Profile::Full { &[3, 4] } else { &[3] };
    for &it in iters {
        let s = generate_cantor_base4(it)?;
        let t = ContentTable::new(&s, 0.5)?;
        let c = 1.5;
        let range = lambda_range(&t, 1.0, c);
        let search = ThickSearch::new(&t, range.proof)?;
        let lb = (range.lambda_s / c.powf(0.5)).min(1.0);
        let delta_bar = empirical_delta_bar(&search, lb, 3)?;
        let dec = build_cavity_decomposition(&WhitneyInput { search: &search, c, delta_bar })?;
        let r = verify_decomposition(&dec, &thick_distance_field(&search), &s);
        if !r.passed() {
            return Ok(Some(format!("cantor t = {it}: {r:?}")));
        }
    }
    Ok(None)
}

fn svg(_: Profile) -> Result<Option<String>> {
    let s = GeneratorSpec::Percolation { n: 2, p: 0.7, depth: 5, seed: 3 }.build()?;
    let layer = [crate::svg::Layer { label: "S".into(), region: &s }];
    let a = crate::svg::render(&layer, &[])?;
    let b = crate::svg::render(&layer, &[])?;
    if a != b || crate::svg::count_cells(&a) as u64 != s.cell_count() {
        return Ok(Some("svg output differs between runs or miscounts cells".into()));
    }
    Ok(None)
}
