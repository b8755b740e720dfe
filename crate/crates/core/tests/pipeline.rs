mod common;

use common::*;
use lce::fixture::{gen_fixture, FixtureSpec};
use lce::pipeline::{compute, run, run_pipeline, Outputs, PipelineConfig, RunManifest, MANIFEST_NAME};
use lce::profile::ConceptCategory::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

fn lce() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lce"))
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn write_minimal_profiles(dir: &Path) -> Vec<PathBuf> {
    let a = profile_with("alpha", 16, &[("car", Object), ("car", Object), ("fur", Material), ("red", Color)]);
    let b = profile_with("beta", 16, &[("car", Object), ("leg", Part), ("fur", Material), ("fur", Material)]);
    [a, b]
        .iter()
        .map(|p| {
            let path = dir.join(format!("{}.json", p.model_name));
            std::fs::write(&path, p.to_json()).unwrap();
            path
        })
        .collect()
}

fn fixture_dir(seed: u64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    gen_fixture(&FixtureSpec::default(), seed).unwrap().write(dir.path()).unwrap();
    dir
}

#[test]
fn minimal_two_profile_run() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = write_minimal_profiles(dir.path());
    let out = dir.path().join("out");
    let config = PipelineConfig {
        profile_paths: profiles,
        output_dir: out.clone(),
        ..Default::default()
    };
    let manifest = run_pipeline(&config).unwrap();
    let files = read_dir(&out);
    for name in ["embedding.csv", "clusters.csv", "loadings.csv", "variance.csv", MANIFEST_NAME] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let variance = String::from_utf8(files["variance.csv"].clone()).unwrap();
    assert_eq!(variance, "component,ratio,cumulative\n1,1.000000000,1.000000000\n");
    assert_eq!(manifest.inputs.len(), 2);
}

#[test]
fn reruns_are_byte_identical_and_manifest_is_complete() {
    let fx = fixture_dir(42);
    let mut config = PipelineConfig::load(&fx.path().join("config.json")).unwrap();
    let first = fx.path().join("first");
    let second = fx.path().join("second");
    config.output_dir = first.clone();
    let m1 = run_pipeline(&config).unwrap();
    config.output_dir = second.clone();
    run_pipeline(&config).unwrap();
    let (a, b) = (read_dir(&first), read_dir(&second));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        if name != MANIFEST_NAME {
            assert_eq!(bytes, &b[name], "{name} differs");
        }
    }
    assert!(a.keys().any(|n| n.ends_with(".svg")));
    assert!(a.keys().any(|n| n.starts_with("field_")));
    assert!(a.keys().any(|n| n.starts_with("ensemble_gain_")));

    let listed: Vec<&str> = m1.artifacts.iter().map(|d| d.path.as_str()).collect();
    let mut on_disk: Vec<&str> = a.keys().map(String::as_str).collect();
    on_disk.sort();
    let mut listed_sorted = listed.clone();
    listed_sorted.sort();
    assert_eq!(listed_sorted, on_disk);
    for d in &m1.artifacts {
        if let Some(h) = &d.sha256 {
            assert_eq!(h, &sha(&a[&d.path]));
        }
    }
    let stored: RunManifest = serde_json::from_slice(&a[MANIFEST_NAME]).unwrap();
    assert_eq!(stored, m1);
}

fn sha(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn rerun_into_same_directory_replaces_previous_outputs() {
    let fx = fixture_dir(5);
    let config = PipelineConfig::load(&fx.path().join("config.json")).unwrap();
    run_pipeline(&config).unwrap();
    let full = read_dir(&config.output_dir);
    let narrow = Outputs { embedding: true, ..Outputs::NONE };
    let manifest = run(&config, &narrow).unwrap();
    let after = read_dir(&config.output_dir);
    assert!(after.len() < full.len());
    assert_eq!(after.len(), manifest.artifacts.len());
    assert!(after.contains_key("embedding.csv") && !after.contains_key("clusters.csv"));
}

#[test]
fn compute_touches_nothing_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let same = profile_with("one", 8, &[("car", Object)]);
    let twin = profile_with("two", 8, &[("car", Object)]);
    let mut paths = Vec::new();
    for p in [same, twin] {
        let path = dir.path().join(format!("{}.json", p.model_name));
        std::fs::write(&path, p.to_json()).unwrap();
        paths.push(path);
    }
    let out = dir.path().join("out");
    let config = PipelineConfig {
        profile_paths: paths,
        output_dir: out.clone(),
        ..Default::default()
    };
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("embed"), "{err}");
    assert!(!out.exists());
    assert!(compute(&config, &Outputs::ALL).is_err());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = write_minimal_profiles(dir.path());
    let out = dir.path().join("cli-out");
    let ok = lce()
        .arg("pipeline")
        .args(profiles.iter().flat_map(|p| ["--profile".as_ref(), p.as_os_str()]))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("embedding.csv").exists());

    let missing = lce()
        .args(["embed", "--profile", "/nonexistent/profile.json", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let bad_threshold = lce()
        .arg("ingest")
        .args(profiles.iter().flat_map(|p| ["--profile".as_ref(), p.as_os_str()]))
        .args(["--iou-threshold", "2"])
        .output()
        .unwrap();
    assert_eq!(bad_threshold.status.code(), Some(2));

    let flat = dir.path().join("flat");
    std::fs::create_dir(&flat).unwrap();
    for name in ["a", "b", "c"] {
        std::fs::write(flat.join(format!("{name}.json")), profile_with(name, 8, &[("car", Object)]).to_json()).unwrap();
    }
    let degenerate = lce()
        .args(["embed", "--profile"])
        .arg(&flat)
        .arg("--out")
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(degenerate.status.code(), Some(3));
    assert!(!dir.path().join("y").exists());

    let usage = lce().arg("embed").arg("--bogus").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn cli_flags_override_config_values() {
    let fx = fixture_dir(9);
    let out = fx.path().join("flags");
    let status = lce()
        .arg("embed")
        .arg("--config")
        .arg(fx.path().join("config.json"))
        .args(["--components", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(out.join(MANIFEST_NAME)).unwrap()).unwrap();
    assert_eq!(manifest.config.pca_components, 2);
    let header = String::from_utf8(std::fs::read(out.join("embedding.csv")).unwrap()).unwrap();
    assert!(header.starts_with("model,pc1,pc2\n"));
}

#[test]
fn gen_fixture_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let st = lce()
            .args(["gen-fixture", "--seed", "7", "--out"])
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert!(st.status.success());
    }
    let walk = |root: PathBuf| -> BTreeMap<PathBuf, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.clone()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.insert(p.strip_prefix(&root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
                }
            }
        }
        out
    };
    let a = walk(dir.path().join("a"));
    assert_eq!(a, walk(dir.path().join("b")));
    let lib: BTreeMap<PathBuf, Vec<u8>> = gen_fixture(&FixtureSpec::default(), 7).unwrap().files();
    assert_eq!(a, lib);
    assert_ne!(lib, gen_fixture(&FixtureSpec::default(), 8).unwrap().files());
}

#[test]
fn infeasible_fixture_specs_fail() {
    let spec = FixtureSpec { n_models: 2, n_clusters: 3, ..Default::default() };
    assert!(gen_fixture(&spec, 1).is_err());
}
