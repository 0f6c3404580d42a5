//! Frozen values and end-to-end runs of the binary.

use std::process::Command;

use dyadic_porosity::content::{dyadic_content, lcr_lambda};
use dyadic_porosity::cube::CubeIndex;
use dyadic_porosity::grid::{generate_cantor_base4, generate_example_61, generate_example_62};
use dyadic_porosity::porosity::porosity_certificate;

#[test]
fn cantor_content_is_one_at_every_iteration() {
    for t in 1..=6 {
        let s = generate_cantor_base4(t).unwrap();
        assert_eq!(dyadic_content(&s, &CubeIndex::root(1), 0.5).unwrap(), 1.0);
    }
}

#[test]
fn teeth_blocks_keep_a_fixed_content_ratio() {
    for j in 1..=4u32 {
        let s = generate_example_62(j, 2 * j + 6).unwrap();
        let q = CubeIndex::new(j, vec![(1 << j) - 2]).unwrap();
        let ratio = dyadic_content(&s, &q, 1.0).unwrap() / q.side();
        assert!((ratio - 7.0 / 64.0).abs() < 1e-12, "j = {j}: {ratio}");
    }
}

#[test]
fn middle_third_blocks_frozen() {
    let s = generate_example_61(5).unwrap();
    let taus: Vec<u64> = (1..=5)
        .map(|j| porosity_certificate(&s, &CubeIndex::new(j, vec![(1 << j) - 2]).unwrap()).unwrap().tau.to_bits())
        .collect();
    let want: Vec<u64> =
        [0.3888888359069824, 0.2376542091369629, 0.12362813949584961, 0.062347412109375, 0.031232833862304688]
            .iter()
            .map(|x: &f64| x.to_bits())
            .collect();
    assert_eq!(taus, want);
    let d = 2f64.ln() / 3f64.ln();
    let lcr = lcr_lambda(&generate_example_61(2).unwrap(), d, 1, 10).unwrap();
    assert!((lcr - 0.1739).abs() < 1e-4, "{lcr}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyadic-porosity"))
}

fn tmp(name: &str) -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn binary_generates_and_measures() {
    let set = tmp("cantor2.json");
    let st = bin().args(["generate", "--cantor4", "--iters", "2", "--out"]).arg(&set).status().unwrap();
    assert!(st.success());
    let out = bin().args(["content", "--d", "0.5", "--set"]).arg(&set).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cost"], 1.0);
    let out = bin().args(["porosity", "--cube", "1:1", "--set"]).arg(&set).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tau"], 0.5);
}

#[test]
fn binary_exit_codes() {
    assert_eq!(bin().args(["content", "--d", "0.5", "--set", "/nonexistent.json"]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["content", "--frobnicate"]).status().unwrap().code(), Some(64));
    let set = tmp("cantor1.json");
    bin().args(["generate", "--cantor4", "--iters", "1", "--out"]).arg(&set).status().unwrap();
    let code = bin().args(["content", "--d", "3", "--set"]).arg(&set).status().unwrap().code();
    assert_eq!(code, Some(1));
}

#[test]
fn corpus_written_by_the_binary_reloads() {
    let dir = tmp("corpus");
    let _ = std::fs::remove_dir_all(&dir);
    assert!(bin().args(["generate", "--corpus-dir"]).arg(&dir).status().unwrap().success());
    let sets = dyadic_porosity::corpus::load_corpus(&dir).unwrap();
    assert_eq!(sets.len(), dyadic_porosity::corpus::standard_corpus().len());
}
