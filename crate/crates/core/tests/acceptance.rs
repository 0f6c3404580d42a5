//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use dyadic_porosity::content::{dyadic_content, hausdorff_content_bounds, lcr_lambda, lcr_lambda_with, ContentTable};
use dyadic_porosity::corpus::standard_corpus;
use dyadic_porosity::cube::{CubeIndex, GeomCube};
use dyadic_porosity::grid::{
    generate_cantor_base4, generate_example_61, generate_example_62, generate_percolation, GridSet,
};
use dyadic_porosity::keystone::{
    canonical_decomposition_with, nice_sequence_with, packing_bound_audit, random_squeezed, validate_nice_sequence,
    verify_canonical,
};
use dyadic_porosity::oracle::{all_cubes, brute_content};
use dyadic_porosity::porosity::{cavity_w, estimate_constants, porosity_certificate, ParamGrid};
use dyadic_porosity::selfcheck::random_set;
use dyadic_porosity::thick::{
    boundary_strip_volume, neighborhood_volume_audit, neighborhood_constants, thick_distance_field, Pseudometric, ThickSearch,
};
use dyadic_porosity::whitney::{
    build_cavity_decomposition, empirical_delta_bar, lambda_range, verify_decomposition, WhitneyInput,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn within(limit_s: u64, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t > Duration::from_secs(limit_s) {
        return Err(format!("took {:.1} s, limit {limit_s} s", t.as_secs_f64()));
    }
    Ok(t)
}

fn corpus() -> Vec<(String, GridSet)> {
    standard_corpus().into_iter().map(|(id, g)| (id, g.build().unwrap())).collect()
}

fn half_n(s: &GridSet) -> f64 {
    0.5 * s.dim() as f64
}

/// Exact equality with the exhaustive antichain minimum.
fn c1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for i in 0..200 {
        let n = 1 + i % 2;
        let depth = rng.gen_range(0..=if n == 1 { 3 } else { 2 });
        let s = random_set(n, depth, &mut rng);
        for d in [0.25, 0.5, 0.9 * n as f64] {
            let q = CubeIndex::root(n);
            let (a, b) = (dyadic_content(&s, &q, d).unwrap(), brute_content(&s, &q, d).unwrap());
            if a.to_bits() != b.to_bits() {
                return Err(format!("set {i} (n = {n}, depth {depth}), d = {d}: {a} vs {b}"));
            }
            compared += 1;
        }
    }
    let t = within(10, start)?;
    Ok(format!("{compared} comparisons exact in {:.2} s", t.as_secs_f64()))
}

/// `lower <= upper <= 2^n lower` over every dyadic cube up to depth 2.
fn c2_sandwich() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (id, s) in corpus() {
        let n = s.dim();
        for d in [0.5, half_n(&s), 0.9 * n as f64] {
            for q in all_cubes(n, 2.min(s.depth())) {
                let (lo, hi) = hausdorff_content_bounds(&s, &q, d).unwrap();
                if lo > hi {
                    return Err(format!("{id}, {q:?}, d = {d}: lower {lo} > upper {hi}"));
                }
                if lo > 0.0 {
                    let r = hi / lo;
                    worst = worst.max(r);
                    if r > (1u64 << n) as f64 + 1e-9 {
                        return Err(format!("{id}, {q:?}, d = {d}: ratio {r}"));
                    }
                }
                checked += 1;
            }
        }
    }
    let t = within(30, start)?;
    Ok(format!("{checked} cubes, worst upper/lower {worst:.4}, {:.2} s", t.as_secs_f64()))
}

fn block(j: u32) -> CubeIndex {
    CubeIndex::new(j, vec![(1 << j) - 2]).unwrap()
}

/// Teeth blocks: content below `2^-j / 8`, and the cavity vanishes once
/// thick cubes of side `2^-2j` are admitted.
fn c3_example_62() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for j in 1..=5u32 {
        let depth = 2 * j + 6;
        let s = generate_example_62(j, depth).unwrap();
        let q = block(j);
        let c = dyadic_content(&s, &q, 1.0).unwrap();
        let bound = 0.125 * q.side();
        if !(c < bound - 1e-12) {
            return Err(format!("j = {j}: content {c} not below {bound}"));
        }
        let t = ContentTable::new(&s, 1.0).unwrap();
        let search = ThickSearch::new(&t, 0.1).unwrap();
        let h = s.cell_side();
        // δ·l one cell past 2^{-2j}: every side-2^{-2j} cube is admitted
        let delta = (q.side() * q.side() + h) / q.side();
        let g = cavity_w(&search, &q, delta).unwrap().gamma;
        if g != 0.0 {
            return Err(format!("j = {j}: gamma {g} at delta·l = {}", delta * q.side()));
        }
        // below the threshold the cavity is still there
        let below = cavity_w(&search, &q, q.side() / 4.0 * 0.5).unwrap().gamma;
        notes.push(format!("j={j}: DH/l={:.4} gamma_small={below:.3}", c / q.side()));
    }
    let t = within(20, start)?;
    Ok(format!("{}; {:.2} s", notes.join(", "), t.as_secs_f64()))
}

/// Non-thickness trend and porosity decay along the middle-third blocks.
fn c4_example_61() -> Outcome {
    let start = Instant::now();
    let d = 2f64.ln() / 3f64.ln();
    let l2 = lcr_lambda(&generate_example_61(2).unwrap(), d, 1, 10).unwrap();
    let s5 = generate_example_61(5).unwrap();
    let l5 = lcr_lambda(&s5, d, 1, 10).unwrap();
    if !(l5 * 2.0 <= l2) {
        return Err(format!("lcr {l2} -> {l5} drops by less than 2x"));
    }
    let taus: Vec<f64> = (1..=5).map(|j| porosity_certificate(&s5, &block(j)).unwrap().tau).collect();
    if !taus.windows(2).all(|w| w[1] < w[0]) {
        return Err(format!("tau not decreasing: {taus:?}"));
    }
    let t = within(30, start)?;
    Ok(format!("lcr {l2:.4} -> {l5:.5} (x{:.1}), tau {taus:?}, {:.2} s", l2 / l5, t.as_secs_f64()))
}

fn c5_canonical() -> Outcome {
    let start = Instant::now();
    let mut sets: Vec<(String, GridSet)> = (1..=4).map(|t| (format!("cantor t={t}"), generate_cantor_base4(t).unwrap())).collect();
    sets.push(("full n=1".into(), GridSet::full(1, 6)));
    sets.push(("full n=2".into(), GridSet::full(2, 4)));
    // ten nonempty seeds per dimension
    for (n, depth, p) in [(1, 8, 0.6), (2, 5, 0.7)] {
        let mut kept = 0;
        for seed in 0.. {
            let s = generate_percolation(n, p, depth, seed).unwrap();
            if !s.is_empty() {
                sets.push((format!("percolation n={n} seed {seed}"), s));
                kept += 1;
            }
            if kept == 10 {
                break;
            }
        }
    }
    let mut gap_cubes = 0;
    let mut runs = 0;
    for (id, s) in &sets {
        for d in [0.5, half_n(s)] {
            let t = ContentTable::new(s, d).unwrap();
            for lambda in [0.25, 0.5, 0.9] {
                let dec = canonical_decomposition_with(&t, lambda, usize::MAX).unwrap();
                let r = verify_canonical(&t, &dec);
                if !r.passed() {
                    return Err(format!("{id}, d = {d}, lambda = {lambda}: {:?}", r.failures));
                }
                gap_cubes += r.gap_cubes_checked;
                runs += 1;
            }
        }
    }
    let t = within(60, start)?;
    Ok(format!("{runs} decompositions, {gap_cubes} intermediate cubes checked, {:.2} s", t.as_secs_f64()))
}

fn c6_nice_packing() -> Outcome {
    let start = Instant::now();
    let mut sets = vec![generate_cantor_base4(4).unwrap(), GridSet::full(2, 3)];
    for seed in 0..4 {
        sets.push(generate_percolation(1, 0.7, 8, seed).unwrap());
        sets.push(generate_percolation(2, 0.7, 4, seed).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = 0;
    let mut audits = 0;
    let mut worst: f64 = 0.0;
    let mut nontrivial = 0;
    for s in sets.iter().filter(|s| !s.is_empty()) {
        let t = ContentTable::new(s, half_n(s)).unwrap();
        for (lambda, eps) in [(0.5, 0.0), (0.8, 0.1)] {
            let seq = nice_sequence_with(&t, lambda, eps).unwrap();
            let r = validate_nice_sequence(&t, &seq);
            if !r.passed() {
                return Err(format!("level packing: {:?}", r.failures));
            }
            checks += r.packing_checks;
            worst = worst.max(r.worst_packing_ratio);
            let cubes: Vec<CubeIndex> =
                all_cubes(s.dim(), s.depth().min(8)).into_iter().filter(|q| s.occupied_in(q) > 0).collect();
            for _ in 0..400 {
                if audits >= 100 * (1 + sets.len()) {
                    break;
                }
                let q = &cubes[rng.gen_range(0..cubes.len())];
                let lambda2 = lambda * rng.gen_range(0.25..=1.0);
                let Some(c) = random_squeezed(&t, &seq, q, lambda2, 0.5, &mut rng) else { continue };
                let a = packing_bound_audit(&t, &seq, lambda2, q, &c).map_err(|e| format!("{q:?}: {e}"))?;
                if !a.ok {
                    return Err(format!("audit fails on {q:?}: {} > {}", a.lhs, a.rhs));
                }
                audits += 1;
                nontrivial += usize::from(c.len() > 1 || c.members()[0] != *q);
            }
        }
    }
    if audits < 100 {
        return Err(format!("only {audits} squeezed families audited"));
    }
    let t = start.elapsed();
    Ok(format!(
        "{checks} level checks (worst ratio {worst:.4}), {audits} squeezed audits ({nontrivial} proper), {:.2} s",
        t.as_secs_f64()
    ))
}

fn c7_pseudometric() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut triples = 0;
    for (id, s) in corpus() {
        let n = s.dim();
        let h = s.cell_side();
        let t = ContentTable::new(&s, half_n(&s)).unwrap();
        let t0 = ContentTable::new(&s, 0.0).unwrap();
        let pm = Pseudometric::new(ThickSearch::new(&t, 0.3).unwrap(), usize::MAX).unwrap();
        let pm0 = Pseudometric::new(ThickSearch::new(&t0, 0.3).unwrap(), usize::MAX).unwrap();
        let norm = |a: &[f64], b: &[f64]| (0..n).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
        for _ in 0..1000 {
            let p: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
            let e = |a: &[f64], b: &[f64]| pm.eval(a, b).unwrap();
            let xy = e(&p[0], &p[1]);
            let yx = e(&p[1], &p[0]);
            if xy.value.to_bits() != yx.value.to_bits() {
                return Err(format!("{id}: asymmetric at {p:?}: {} vs {}", xy.value, yx.value));
            }
            let (xz, zy) = (e(&p[0], &p[2]).value, e(&p[2], &p[1]).value);
            if xy.value > xz + zy + 2.0 * h {
                return Err(format!("{id}: triangle fails at {p:?}"));
            }
            if xy.value < norm(&xy.x, &xy.y) {
                return Err(format!("{id}: below the norm at {p:?}"));
            }
            let z = pm0.eval(&p[0], &p[1]).unwrap();
            if (z.value - norm(&z.x, &z.y)).abs() > h {
                return Err(format!("{id}: d = 0 gives {} vs norm {}", z.value, norm(&z.x, &z.y)));
            }
            triples += 1;
        }
    }
    Ok(format!("{triples} triples, {:.2} s", start.elapsed().as_secs_f64()))
}

fn snapshot_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

/// Floors of the thin-cube constants; frozen in `tests/data/floors.json`.
fn floors_table() -> serde_json::Value {
    let lambdas = [0.1, 0.3];
    let grid = ParamGrid {
        lambdas: vec![0.1, 0.3],
        lambda_bars: vec![0.3, 0.6, 0.9],
        delta_exponents: (1..=8).collect(),
        max_cube_depth: 8,
    };
    let mut out = Vec::new();
    for (id, s) in corpus() {
        if s.is_empty() {
            out.push(serde_json::json!({ "set_id": id, "empty": true, "skipped": true }));
            continue;
        }
        let d = half_n(&s);
        let t = ContentTable::new(&s, d).unwrap();
        let lcr = lcr_lambda_with(&t, 1, s.depth().min(4)).unwrap();
        for &lambda in &lambdas {
            if lcr < lambda {
                out.push(serde_json::json!({ "set_id": id, "lambda": lambda, "lcr": lcr, "skipped": true }));
                continue;
            }
            let g = ParamGrid { lambdas: vec![lambda], ..grid.clone() };
            let table = estimate_constants(&[(id.clone(), s.clone())], d, &g).unwrap();
            for f in table.floors {
                out.push(serde_json::json!({ "lcr": lcr, "skipped": false, "floor": f }));
            }
        }
    }
    serde_json::Value::Array(out)
}

fn c8_floors() -> Outcome {
    let start = Instant::now();
    let a = floors_table();
    let b = floors_table();
    let text = serde_json::to_string_pretty(&a).unwrap() + "\n";
    if text != serde_json::to_string_pretty(&b).unwrap() + "\n" {
        return Err("floors differ between two runs".into());
    }
    let mut tested = 0;
    for row in a.as_array().unwrap() {
        if row["skipped"] == true {
            continue;
        }
        let f = &row["floor"];
        if f["thin_cubes"].as_u64() == Some(0) {
            continue;
        }
        tested += 1;
        let pos = |k: &str| f[k].as_f64().is_some_and(|x| x > 0.0);
        if !(pos("delta_bar") && pos("gamma_floor") && pos("tau_floor")) {
            return Err(format!("non-positive floor: {f}"));
        }
    }
    let path = snapshot_path("floors.json");
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::write(out_dir.join("floors.json"), &text).map_err(|e| e.to_string())?;
    if std::env::var_os("DP_BLESS").is_some() {
        std::fs::write(&path, &text).map_err(|e| e.to_string())?;
    }
    let frozen = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if frozen != text {
        return Err(format!("floors differ from the frozen table {}", path.display()));
    }
    Ok(format!("{tested} positive floor rows, bit-stable and equal to the frozen table, {:.2} s", start.elapsed().as_secs_f64()))
}

fn c9_whitney() -> Outcome {
    let start = Instant::now();
    let c = 1.5;
    let mut sets: Vec<(String, GridSet)> = (3..=4).map(|t| (format!("cantor t={t}"), generate_cantor_base4(t).unwrap())).collect();
    let mut seed = 0;
    while sets.len() < 12 {
        let s = generate_percolation(2, 0.7, 4, seed).unwrap();
        if !s.is_empty() {
            sets.push((format!("percolation seed {seed}"), s));
        }
        seed += 1;
    }
    let mut summary = Vec::new();
    for (id, s) in &sets {
        let d = half_n(s);
        let t = ContentTable::new(s, d).unwrap();
        let range = lambda_range(&t, 1.0, c);
        let lambda = range.proof;
        let search = ThickSearch::new(&t, lambda).unwrap();
        let lb = (range.lambda_s / c.powf(d)).min(1.0);
        let delta_bar = empirical_delta_bar(&search, lb, s.depth().min(4)).unwrap();
        let dec = build_cavity_decomposition(&WhitneyInput { search: &search, c, delta_bar }).unwrap();
        let r = verify_decomposition(&dec, &thick_distance_field(&search), s);
        if !r.passed() {
            return Err(format!("{id}: {r:?}"));
        }
        if r.c3 > dec.multiplicity_bound(s.dim()) {
            return Err(format!("{id}: C3 = {} above {}", r.c3, dec.multiplicity_bound(s.dim())));
        }
        summary.push(format!("{id}: {} pieces C1={:.2} C2={:.3} C3={}/{}", dec.pieces.len(), r.c1, r.c2, r.c3, r.c3_bound));
    }
    let t = within(300, start)?;
    Ok(format!("{}; {:.2} s", summary.join("; "), t.as_secs_f64()))
}

fn random_cube<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64, side: f64) -> GeomCube {
    GeomCube { center: (0..n).map(|_| rng.gen_range(lo..hi)).collect(), half_side: side / 2.0 }
}

fn c10_volume_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_strip: f64 = 0.0;
    for i in 0..200 {
        let n = 1 + i % 3;
        let l = rng.gen_range(0.5..2.0);
        let q = random_cube(&mut rng, n, -1.0, 1.0, l);
        let mu = l / 2.0 * rng.gen_range(0.05..0.99);
        let m = rng.gen_range(1..40);
        let f: Vec<GeomCube> = (0..m)
            .map(|_| {
                let side = mu * rng.gen_range(0.1..=1.0);
                let mut g = random_cube(&mut rng, n, -1.0 - l, 1.0 + l, side);
                // pull some members onto the boundary
                if rng.gen_bool(0.6) {
                    let axis = rng.gen_range(0..n);
                    let face = if rng.gen_bool(0.5) { q.lower(axis) } else { q.upper(axis) };
                    g.center[axis] = face + rng.gen_range(-side / 2.0..side / 2.0);
                    for k in (0..n).filter(|&k| k != axis) {
                        g.center[k] = rng.gen_range(q.lower(k)..q.upper(k));
                    }
                }
                g
            })
            .collect();
        let r = boundary_strip_volume(&q, &f).map_err(|e| format!("strip instance {i}: {e}"))?;
        if !r.ok {
            return Err(format!("strip instance {i}: {} > {}", r.volume, r.bound));
        }
        worst_strip = worst_strip.max(r.volume / r.bound);
    }
    let mut worst_nbhd: f64 = 0.0;
    for i in 0..200 {
        let n = 1 + i % 3;
        let d = n as f64 * rng.gen_range(0.1..0.9);
        let cbar = rng.gen_range(1.05..2.0);
        let r = rng.gen_range(1.01..3.0);
        let k = neighborhood_constants(n, d, cbar, r).unwrap();
        let delta = k.delta_bar * rng.gen_range(0.01..=1.0);
        let tau = rng.gen_range(0.01..1.0);
        let m = rng.gen_range(1..30);
        let f: Vec<GeomCube> = (0..m)
            .map(|_| {
                let side = tau * rng.gen_range(delta..=1.0);
                random_cube(&mut rng, n, 0.0, 1.0, side)
            })
            .collect();
        let a = neighborhood_volume_audit(&f, d, cbar, r, delta, tau).map_err(|e| format!("neighborhood instance {i}: {e}"))?;
        if !a.ok {
            return Err(format!("neighborhood instance {i}: {} > {}", a.volume, a.bound));
        }
        worst_nbhd = worst_nbhd.max(a.volume / a.bound);
    }
    Ok(format!(
        "400 instances, worst strip ratio {worst_strip:.3}, worst neighborhood ratio {worst_nbhd:.3}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("DP-oracle equivalence", c1_oracle),
        ("content sandwich", c2_sandwich),
        ("teeth example: thin blocks with empty cavities", c3_example_62),
        ("middle-third example: non-thickness and porosity decay", c4_example_61),
        ("canonical decomposition axioms", c5_canonical),
        ("nice-sequence packing", c6_nice_packing),
        ("pseudometric axioms", c7_pseudometric),
        ("cavity and porosity floors", c8_floors),
        ("cavity decomposition pipeline", c9_whitney),
        ("volume bound audits", c10_volume_bounds),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let tag = format!("[{}] {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| tag.contains(x.as_str())) {
            continue;
        }
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(msg)) => println!("PASS {tag}: {msg}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {tag}: {why}");
            }
            Err(p) => {
                failed += 1;
                let why = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {tag}: panicked: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
