//! Named generator specs, the standard test corpus and its on-disk manifest.

use std::fs;
use std::path::Path;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{
    generate_cantor_base4, generate_example_61, generate_example_62, generate_percolation, GridSet,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Cantor4 { iters: u32 },
    Example61 { j_max: u32 },
    Example62 { j_max: u32, depth: u32 },
    Percolation { n: usize, p: f64, depth: u32, seed: u64 },
    Full { n: usize, depth: u32 },
    Empty { n: usize, depth: u32 },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<GridSet> {
        match *self {
            GeneratorSpec::Cantor4 { iters } => generate_cantor_base4(iters),
            GeneratorSpec::Example61 { j_max } => generate_example_61(j_max),
            GeneratorSpec::Example62 { j_max, depth } => generate_example_62(j_max, depth),
            GeneratorSpec::Percolation { n, p, depth, seed } => generate_percolation(n, p, depth, seed),
            GeneratorSpec::Full { n, depth } => {
                crate::grid::check_resolution(n, depth)?;
                Ok(GridSet::full(n, depth))
            }
            GeneratorSpec::Empty { n, depth } => {
                crate::grid::check_resolution(n, depth)?;
                Ok(GridSet::empty(n, depth))
            }
        }
    }
}

/// The sets every sweep and property check runs on. Sizes stay small enough
/// for unoptimized builds.
pub fn standard_corpus() -> Vec<(String, GeneratorSpec)> {
    let mut out: Vec<(String, GeneratorSpec)> = vec![
        ("cantor4_t2".into(), GeneratorSpec::Cantor4 { iters: 2 }),
        ("cantor4_t3".into(), GeneratorSpec::Cantor4 { iters: 3 }),
        ("cantor4_t4".into(), GeneratorSpec::Cantor4 { iters: 4 }),
        ("full_n1".into(), GeneratorSpec::Full { n: 1, depth: 4 }),
        ("full_n2".into(), GeneratorSpec::Full { n: 2, depth: 3 }),
    ];
    for seed in 0..3 {
        out.push((format!("perc_n1_s{seed}"), GeneratorSpec::Percolation { n: 1, p: 0.85, depth: 7, seed }));
    }
    for seed in 0..3 {
        out.push((format!("perc_n2_s{seed}"), GeneratorSpec::Percolation { n: 2, p: 0.7, depth: 4, seed }));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub set_id: String,
    pub generator: GeneratorSpec,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "corpus.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes one JSON file per set plus `corpus.json`.
pub fn write_corpus(dir: &Path, specs: &[(String, GeneratorSpec)]) -> Result<CorpusManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (id, spec) in specs {
        let s = spec.build()?;
        let text = serde_json::to_string_pretty(&s.to_json())? + "\n";
        let file = format!("{id}.json");
        fs::write(dir.join(&file), &text)?;
        entries.push(ManifestEntry {
            set_id: id.clone(),
            generator: spec.clone(),
            file,
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let m = CorpusManifest { entries };
    check_unique(&m)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(m)
}

fn check_unique(m: &CorpusManifest) -> Result<()> {
    let mut seen = FxHashSet::default();
    for e in &m.entries {
        if !seen.insert(e.set_id.as_str()) {
            return Err(Error::Domain(format!("duplicate set id `{}`", e.set_id)));
        }
    }
    Ok(())
}

/// Loads every set named in `dir/corpus.json`, verifying checksums.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, GridSet)>> {
    let m: CorpusManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    check_unique(&m)?;
    let mut out = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let text = fs::read(dir.join(&e.file))?;
        let got = sha256_hex(&text);
        if got != e.sha256 {
            return Err(Error::Domain(format!("checksum mismatch for `{}`: {got}", e.file)));
        }
        let v: serde_json::Value = serde_json::from_slice(&text)?;
        out.push((e.set_id.clone(), GridSet::from_json(&v)?));
    }
    Ok(out)
}
