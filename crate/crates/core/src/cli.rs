//! Command-line front end.
//!
//! Exit codes: `0` success, `1` rejected input or failed operation, `2` a
//! verification that ran and failed, `64` bad usage.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::content::{dyadic_content, hausdorff_content_bounds, optimal_covering, ContentTable};
use crate::corpus::{load_corpus, standard_corpus, write_corpus, GeneratorSpec};
use crate::cube::CubeIndex;
use crate::grid::GridSet;
use crate::json::num;
use crate::keystone::{
    canonical_decomposition_with, check_decomposition_lambda, nice_sequence_with, validate_nice_sequence,
    verify_canonical,
};
use crate::porosity::{cavity_w, estimate_constants, porosity_certificate, thin_complement, ParamGrid};
use crate::svg::{render, Layer};
use crate::thick::{thick_distance, thick_distance_field, thick_neighborhood, Pseudometric, ThickSearch};
use crate::whitney::{
    build_cavity_decomposition, empirical_delta_bar, lambda_range, verify_decomposition, WhitneyInput,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "dyadic-porosity", version, about = "Dyadic contents, thick cubes and cavities on grid sets")]
pub struct Cli {
    /// JSON object of flag values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a grid set or a whole corpus.
    Generate(GenerateArgs),
    /// Dyadic content of a cube, optionally with the optimal covering and bounds.
    Content(ContentArgs),
    /// Canonical decomposition or nice sequence.
    Decompose(DecomposeArgs),
    /// Thick distance at a point or on every cell.
    Distance(DistanceArgs),
    /// Thick neighborhood of radius delta.
    Neighborhood(NeighborhoodArgs),
    /// Thick pseudometric between two points.
    Rho(RhoArgs),
    /// Largest empty cube inside a dyadic cube.
    Porosity(PorosityArgs),
    /// Cavity of a cube, by thick distance or by removing dilated thick cubes.
    Cavity(CavityArgs),
    /// Cavity decomposition of the unit cube minus the set.
    Whitney(WhitneyArgs),
    /// Empirical constants over a corpus.
    Sweep(SweepArgs),
    /// Built-in self-checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub cantor4: bool,
    #[arg(long)]
    pub iters: Option<u32>,
    #[arg(long)]
    pub example61: bool,
    #[arg(long)]
    pub example62: bool,
    #[arg(long)]
    pub jmax: Option<u32>,
    #[arg(long)]
    pub percolation: bool,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the standard corpus and its manifest into this directory.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    /// Emit `[start, end)` runs instead of cells (n = 1 only).
    #[arg(long)]
    pub runs: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SetArgs {
    #[arg(long)]
    pub set: PathBuf,
    #[arg(long)]
    pub d: f64,
}

#[derive(Args, Debug)]
pub struct ContentArgs {
    #[command(flatten)]
    pub set: SetArgs,
    /// `depth` or `depth:m1,m2,...`
    #[arg(long, default_value = "0")]
    pub cube: String,
    #[arg(long)]
    pub covering: bool,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long)]
    pub bounds: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Build a nice sequence instead of the canonical decomposition.
    #[arg(long)]
    pub nice: bool,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Comma-separated coordinates.
    #[arg(long)]
    pub point: Option<String>,
    #[arg(long)]
    pub field: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NeighborhoodArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RhoArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// Longest chain considered; unlimited by default.
    #[arg(long)]
    pub chain_cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PorosityArgs {
    #[arg(long)]
    pub set: PathBuf,
    #[arg(long, default_value = "0")]
    pub cube: String,
    /// Include the hole's geometry in the output.
    #[arg(long)]
    pub emit_hole: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CavityArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value = "0")]
    pub cube: String,
    #[arg(long, conflicts_with_all = ["kappa_cap", "r"])]
    pub delta: Option<f64>,
    #[arg(long, requires = "r")]
    pub kappa_cap: Option<f64>,
    #[arg(long, requires = "kappa_cap")]
    pub r: Option<f64>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WhitneyArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub c: f64,
    /// Overrides the empirically measured delta_bar.
    #[arg(long)]
    pub delta_bar: Option<f64>,
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON file, or inline `lambda=..;lambda_bar=..;delta_exp=..;max_depth=..`.
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub d: f64,
    /// `csv` or `json`.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, conflicts_with = "full")]
    pub quick: bool,
    #[arg(long)]
    pub full: bool,
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let args: Vec<OsString> = args.into_iter().collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_DOMAIN;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY,
        Err(e) => {
            eprintln!("{e}");
            EXIT_DOMAIN
        }
    }
}

/// Appends flags from `--config` that are not given explicitly.
fn merge_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_owned)
        }
    });
    let Some(path) = path else { return Ok(args) };
    let v: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let obj = v.as_object().ok_or_else(|| Error::Domain("config must be a JSON object".into()))?;
    for (key, val) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let given = strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match val {
            Value::Bool(true) => args.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => args.extend([flag.into(), s.into()]),
            Value::Number(x) => args.extend([flag.into(), x.to_string().into()]),
            Value::Array(xs) => {
                let joined: Vec<String> =
                    xs.iter().map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_owned)).collect();
                args.extend([flag.into(), joined.join(",").into()]);
            }
            Value::Object(_) => return Err(Error::Domain(format!("config key `{key}` is an object"))),
        }
    }
    Ok(args)
}

pub fn parse_cube(spec: &str, n: usize) -> Result<CubeIndex> {
    let bad = || Error::Domain(format!("bad cube `{spec}`; expected `depth` or `depth:m1,m2,...`"));
    let (k, corner) = match spec.split_once(':') {
        None => (spec.trim().parse::<u32>().map_err(|_| bad())?, vec![0; n]),
        Some((k, m)) => {
            let k = k.trim().parse::<u32>().map_err(|_| bad())?;
            let m: Vec<u64> =
                m.split(',').map(|x| x.trim().parse::<u64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            (k, m)
        }
    };
    if corner.len() != n {
        return Err(Error::Domain(format!("cube `{spec}` has {} coordinates, set has n = {n}", corner.len())));
    }
    CubeIndex::new(k, corner)
}

pub fn parse_point(spec: &str, n: usize) -> Result<Vec<f64>> {
    let p: Vec<f64> = spec
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Domain(format!("bad point `{spec}`")))?;
    if p.len() != n {
        return Err(Error::Domain(format!("point `{spec}` has {} coordinates, set has n = {n}", p.len())));
    }
    Ok(p)
}

fn load_set(path: &Path) -> Result<GridSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    GridSet::from_json(&serde_json::from_str(&text)?)
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn emit(v: &Value, out: Option<&Path>) -> Result<()> {
    emit_text(&(serde_json::to_string_pretty(v)? + "\n"), out)
}

fn region_json(r: &GridSet) -> Value {
    json!({ "dim": r.dim(), "depth": r.depth(), "cells": r.cells(), "measure": num(crate::grid::lebesgue_measure(r)) })
}

fn threads(cli: &Cli) -> Result<usize> {
    match cli.threads {
        Some(0) => Err(Error::Parameter("--threads must be >= 1".into())),
        Some(t) => Ok(t),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// `Ok(false)` reports a verification failure.
pub fn dispatch(cli: &Cli) -> Result<bool> {
    let workers = threads(cli)?;
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Content(a) => content(a),
        Command::Decompose(a) => decompose(a),
        Command::Distance(a) => distance(a),
        Command::Neighborhood(a) => neighborhood(a),
        Command::Rho(a) => rho(a),
        Command::Porosity(a) => porosity(a),
        Command::Cavity(a) => cavity(a),
        Command::Whitney(a) => whitney(a),
        Command::Sweep(a) => sweep(a, workers),
        Command::Verify(a) => Ok(crate::selfcheck::run(if a.full { Profile::Full } else { Profile::Quick })),
    }
}

pub use crate::selfcheck::Profile;

fn generate(a: &GenerateArgs) -> Result<bool> {
    if let Some(dir) = &a.corpus_dir {
        let m = write_corpus(dir, &standard_corpus())?;
        println!("wrote {} sets to {}", m.entries.len(), dir.display());
        return Ok(true);
    }
    let need = |x: Option<u32>, name: &str| x.ok_or_else(|| Error::Parameter(format!("--{name} is required")));
    let spec = match (a.cantor4, a.example61, a.example62, a.percolation) {
        (true, false, false, false) => GeneratorSpec::Cantor4 { iters: need(a.iters, "iters")? },
        (false, true, false, false) => GeneratorSpec::Example61 { j_max: need(a.jmax, "jmax")? },
        (false, false, true, false) => {
            let j_max = need(a.jmax, "jmax")?;
            GeneratorSpec::Example62 { j_max, depth: a.depth.unwrap_or(2 * j_max + 6) }
        }
        (false, false, false, true) => GeneratorSpec::Percolation {
            n: a.n.ok_or_else(|| Error::Parameter("--n is required".into()))?,
            p: a.p.ok_or_else(|| Error::Parameter("--p is required".into()))?,
            depth: need(a.depth, "depth")?,
            seed: a.seed,
        },
        _ => {
            return Err(Error::Parameter(
                "choose exactly one of --cantor4, --example61, --example62, --percolation".into(),
            ))
        }
    };
    let s = spec.build()?;
    let v = if a.runs {
        if s.dim() != 1 {
            return Err(Error::Domain("--runs needs n = 1".into()));
        }
        s.to_json_runs()
    } else {
        s.to_json()
    };
    emit(&v, a.out.as_deref())?;
    Ok(true)
}

fn content(a: &ContentArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let q = parse_cube(&a.cube, s.dim())?;
    let cost = dyadic_content(&s, &q, a.set.d)?;
    let mut v = json!({ "cube": q, "d": num(a.set.d), "cost": num(cost) });
    if a.covering {
        v["covering"] = serde_json::to_value(optimal_covering(&s, &q, a.set.d, a.eps)?)?;
    }
    if a.bounds {
        let (lo, hi) = hausdorff_content_bounds(&s, &q, a.set.d)?;
        v["bounds"] = json!({ "lower": num(lo), "upper": num(hi) });
    }
    emit(&v, a.out.as_deref())?;
    Ok(true)
}

fn decompose(a: &DecomposeArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    check_decomposition_lambda(a.lambda)?;
    let t = ContentTable::new(&s, a.set.d)?;
    let mut ok = true;
    let (mut v, layers): (Value, Vec<(String, GridSet)>) = if a.nice {
        let seq = nice_sequence_with(&t, a.lambda, a.eps)?;
        let mut v = seq.to_json();
        if a.verify {
            let r = validate_nice_sequence(&t, &seq);
            ok = r.passed();
            v["verification"] = serde_json::to_value(&r)?;
        }
        let layers = seq
            .levels
            .iter()
            .enumerate()
            .map(|(i, f)| (format!("level {i}"), GridSet::from_cubes(s.dim(), s.depth(), f.members())))
            .collect();
        (v, layers)
    } else {
        let dec = canonical_decomposition_with(&t, a.lambda, usize::MAX)?;
        let mut v = dec.to_json();
        if a.verify {
            let r = verify_canonical(&t, &dec);
            ok = r.passed();
            v["verification"] = serde_json::to_value(&r)?;
        }
        let layers = dec
            .strata
            .iter()
            .enumerate()
            .map(|(i, f)| (format!("stratum {}", i + 1), GridSet::from_cubes(s.dim(), s.depth(), f.members())))
            .collect();
        (v, layers)
    };
    if let Some(p) = &a.svg {
        let ls: Vec<Layer> = layers.iter().map(|(l, r)| Layer { label: l.clone(), region: r }).collect();
        let legend = vec![format!("d = {}, lambda = {}", a.set.d, a.lambda)];
        fs::write(p, render(&ls, &legend)?)?;
        v["svg_cells"] = json!(layers.iter().map(|(_, r)| r.cell_count()).sum::<u64>());
    }
    emit(&v, a.out.as_deref())?;
    Ok(ok)
}

fn distance(a: &DistanceArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let t = ContentTable::new(&s, a.set.d)?;
    let search = ThickSearch::new(&t, a.lambda)?;
    let v = match (&a.point, a.field) {
        (Some(p), false) => serde_json::to_value(thick_distance(&search, &parse_point(p, s.dim())?)?)?,
        (None, true) => {
            let f = thick_distance_field(&search);
            let values: Vec<Value> = (0..f.len() as u64).map(|c| num(f.value(c))).collect();
            json!({ "d": num(a.set.d), "lambda": num(a.lambda), "depth": s.depth(), "order": "morton", "values": values })
        }
        _ => return Err(Error::Parameter("give exactly one of --point, --field".into())),
    };
    emit(&v, a.out.as_deref())?;
    Ok(true)
}

fn neighborhood(a: &NeighborhoodArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let t = ContentTable::new(&s, a.set.d)?;
    let search = ThickSearch::new(&t, a.lambda)?;
    let r = thick_neighborhood(&search, a.delta)?;
    if let Some(p) = &a.svg {
        let legend = vec![format!("d = {}, lambda = {}, delta = {}", a.set.d, a.lambda, a.delta)];
        fs::write(p, render(&[Layer { label: "neighborhood".into(), region: &r }], &legend)?)?;
    }
    emit(&region_json(&r), a.out.as_deref())?;
    Ok(true)
}

fn rho(a: &RhoArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let t = ContentTable::new(&s, a.set.d)?;
    let pm = Pseudometric::new(ThickSearch::new(&t, a.lambda)?, a.chain_cap.unwrap_or(usize::MAX))?;
    let e = pm.eval(&parse_point(&a.x, s.dim())?, &parse_point(&a.y, s.dim())?)?;
    emit(&serde_json::to_value(e)?, a.out.as_deref())?;
    Ok(true)
}

fn porosity(a: &PorosityArgs) -> Result<bool> {
    let s = load_set(&a.set)?;
    let q = parse_cube(&a.cube, s.dim())?;
    let c = porosity_certificate(&s, &q)?;
    let mut v = json!({ "cube": q, "tau": num(c.tau), "resolution": num(c.resolution), "fully_occupied": c.fully_occupied });
    if a.emit_hole {
        v["hole"] = serde_json::to_value(&c.hole)?;
        v["hole_cells"] = serde_json::to_value(&c.hole_cells)?;
    }
    emit(&v, a.out.as_deref())?;
    Ok(true)
}

fn cavity(a: &CavityArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let q = parse_cube(&a.cube, s.dim())?;
    let t = ContentTable::new(&s, a.set.d)?;
    let rep = match (a.delta, a.kappa_cap, a.r) {
        (Some(delta), None, None) => cavity_w(&ThickSearch::new(&t, a.lambda)?, &q, delta)?,
        (None, Some(k), Some(r)) => thin_complement(&t, a.lambda, r, &q, k)?,
        _ => return Err(Error::Parameter("give --delta, or both --kappa-cap and --r".into())),
    };
    if let Some(p) = &a.svg {
        fs::write(p, render(&[Layer { label: "cavity".into(), region: &rep.region }], &[])?)?;
    }
    let mut v = serde_json::to_value(&rep)?;
    v["region"] = region_json(&rep.region);
    emit(&v, a.out.as_deref())?;
    Ok(true)
}

fn whitney(a: &WhitneyArgs) -> Result<bool> {
    let s = load_set(&a.set.set)?;
    let t = ContentTable::new(&s, a.set.d)?;
    let search = ThickSearch::new(&t, a.lambda)?;
    let range = lambda_range(&t, a.lambda, a.c);
    let delta_bar = match a.delta_bar {
        Some(x) => x,
        None => {
            let lb = (range.lambda_s / a.c.powf(a.set.d)).min(1.0);
            empirical_delta_bar(&search, lb, s.depth().min(4))?
        }
    };
    let dec = build_cavity_decomposition(&WhitneyInput { search: &search, c: a.c, delta_bar })?;
    if let Some(w) = &dec.warning {
        eprintln!("warning: {w}");
    }
    let report = a.verify.then(|| verify_decomposition(&dec, &thick_distance_field(&search), &s));
    if let Some(p) = &a.svg {
        let ls: Vec<Layer> = dec
            .pieces
            .iter()
            .map(|pc| Layer { label: format!("k = {}, host {:?}", pc.k, pc.host.corner), region: &pc.region })
            .collect();
        let legend = vec![format!("d = {}, lambda = {}, c = {}, j* = {}", a.set.d, a.lambda, a.c, dec.j_star)];
        fs::write(p, render(&ls, &legend)?)?;
    }
    emit(&dec.to_json(report.as_ref()), a.out.as_deref())?;
    Ok(report.is_none_or(|r| r.passed()))
}

pub fn parse_grid(spec: &str) -> Result<ParamGrid> {
    if Path::new(spec).is_file() {
        let v: Value = serde_json::from_str(&fs::read_to_string(spec)?)?;
        let list = |k: &str| -> Result<Vec<f64>> {
            v[k].as_array()
                .ok_or_else(|| Error::Domain(format!("grid file needs array `{k}`")))?
                .iter()
                .map(crate::json::parse_num)
                .collect()
        };
        return Ok(ParamGrid {
            lambdas: list("lambda")?,
            lambda_bars: list("lambda_bar")?,
            delta_exponents: list("delta_exp")?.into_iter().map(|x| x as u32).collect(),
            max_cube_depth: v["max_depth"].as_u64().unwrap_or(3) as u32,
        });
    }
    let mut g = ParamGrid { lambdas: vec![], lambda_bars: vec![], delta_exponents: vec![], max_cube_depth: 3 };
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (k, vals) = part.split_once('=').ok_or_else(|| Error::Domain(format!("bad grid part `{part}`")))?;
        let nums = || -> Result<Vec<f64>> {
            vals.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number in `{part}`"))))
                .collect()
        };
        match k.trim() {
            "lambda" => g.lambdas = nums()?,
            "lambda_bar" => g.lambda_bars = nums()?,
            "delta_exp" => g.delta_exponents = nums()?.into_iter().map(|x| x as u32).collect(),
            "max_depth" => g.max_cube_depth = nums()?.first().copied().unwrap_or(3.0) as u32,
            other => return Err(Error::Domain(format!("unknown grid key `{other}`"))),
        }
    }
    if g.lambdas.is_empty() || g.lambda_bars.is_empty() || g.delta_exponents.is_empty() {
        return Err(Error::Parameter("grid needs lambda, lambda_bar and delta_exp".into()));
    }
    Ok(g)
}

/// Splits the corpus over at most `workers` threads; rows keep corpus order.
pub fn sweep_table(
    corpus: &[(String, GridSet)],
    d: f64,
    grid: &ParamGrid,
    workers: usize,
) -> Result<crate::porosity::ConstantsTable> {
    if corpus.is_empty() {
        return Err(Error::Parameter("empty corpus".into()));
    }
    let chunk = corpus.len().div_ceil(workers.max(1));
    let parts: Vec<Result<crate::porosity::ConstantsTable>> = std::thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .chunks(chunk)
            .map(|c| scope.spawn(move || estimate_constants(c, d, grid)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("worker panicked".into())))).collect()
    });
    let mut out = crate::porosity::ConstantsTable { rows: vec![], floors: vec![], gamma_trend_ok: true, delta_trend_ok: true };
    for p in parts {
        let p = p?;
        out.rows.extend(p.rows);
        out.floors.extend(p.floors);
        out.gamma_trend_ok &= p.gamma_trend_ok;
        out.delta_trend_ok &= p.delta_trend_ok;
    }
    Ok(out)
}

fn sweep(a: &SweepArgs, workers: usize) -> Result<bool> {
    let corpus = load_corpus(&a.corpus)?;
    let grid = parse_grid(&a.grid)?;
    let table = sweep_table(&corpus, a.d, &grid, workers)?;
    match a.format.as_str() {
        "csv" => emit_text(&table.to_csv(), a.out.as_deref())?,
        "json" => emit(&serde_json::to_value(&table)?, a.out.as_deref())?,
        f => return Err(Error::Parameter(format!("unknown format `{f}`"))),
    }
    if !table.gamma_trend_ok || !table.delta_trend_ok {
        eprintln!("note: a monotone trend flag is off (gamma {}, delta {})", table.gamma_trend_ok, table.delta_trend_ok);
    }
    Ok(true)
}
