use std::fs;
use std::path::{Path, PathBuf};

use stokes_lab::runner::{run, verify, CacheStatus, ExperimentConfig, Kind, MANIFEST};
use stokes_lab::Error;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn resolved(name: &str, kind: Kind, out: PathBuf, cache: &Path) -> ExperimentConfig {
    let mut c = config(name).resolve(kind, None, Some(out)).unwrap();
    c.cache_dir = Some(cache.to_path_buf());
    c
}

#[test]
fn eigen_run_lists_its_payloads_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let c = resolved("eigen.toml", Kind::Eigen, dir.path().join("out"), &dir.path().join("cache"));
    let m = run(&c).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert!(names.contains(&"basis.json") && names.contains(&"eigenvalues.csv"), "{names:?}");
    assert_eq!(m.basis_cache, CacheStatus::Miss);
    let v = verify(&dir.path().join("out").join(MANIFEST)).unwrap();
    assert!(v.passed(), "{:?}", v.checks);
    assert!(v.check("orthonormality").unwrap().passed);
    assert!(v.check("divergence").unwrap().passed);
}

#[test]
fn second_run_hits_the_cache_with_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let first = run(&resolved("spectral.toml", Kind::Spectral, dir.path().join("a"), &cache)).unwrap();
    let second = run(&resolved("spectral.toml", Kind::Spectral, dir.path().join("b"), &cache)).unwrap();
    assert_eq!(first.basis_cache, CacheStatus::Miss);
    assert_eq!(second.basis_cache, CacheStatus::Hit);
    assert_eq!(first.basis_key, second.basis_key);
    assert_eq!(first.config_hash, second.config_hash);
    assert_eq!(first.payload_hashes(), second.payload_hashes());
}

#[test]
fn corrupted_cache_is_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let first = run(&resolved("eigen.toml", Kind::Eigen, dir.path().join("a"), &cache)).unwrap();
    let file = cache.join(format!("basis-{}.json", first.basis_key));
    let text = fs::read_to_string(&file).unwrap();
    fs::write(&file, &text[..text.len() / 2]).unwrap();
    let second = run(&resolved("eigen.toml", Kind::Eigen, dir.path().join("b"), &cache)).unwrap();
    assert_eq!(second.basis_cache, CacheStatus::Rebuilt);
    assert_eq!(first.payload_hashes(), second.payload_hashes());
    let third = run(&resolved("eigen.toml", Kind::Eigen, dir.path().join("c"), &cache)).unwrap();
    assert_eq!(third.basis_cache, CacheStatus::Hit);
}

#[test]
fn fraction_above_one_names_the_field() {
    let mut c = config("shape.toml");
    c.shape.as_mut().unwrap().fraction = 1.5;
    match c.validate() {
        Err(Error::Config(msg)) => assert!(msg.contains("shape.fraction"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = "[domain]\ncells_x = 8\ncells_z = 3\n[basis]\nmodes = 2\n[mask]\nshape = \"full\"\n";
    assert!(ExperimentConfig::from_toml(text).is_err());
}

#[test]
fn tampered_design_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run(&resolved("shape.toml", Kind::Shape, out.clone(), &dir.path().join("cache"))).unwrap();
    let csv = out.join("design.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut row: Vec<String> = lines[1].split(',').map(String::from).collect();
    *row.last_mut().unwrap() = "1.7".into();
    lines[1] = row.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();

    let v = verify(&out.join(MANIFEST)).unwrap();
    assert!(!v.passed());
    assert!(!v.check("hash:design.csv").unwrap().passed);
    assert!(!v.check("design_bounds").unwrap().passed);
    assert!(v.check("orthonormality").unwrap().passed);
}

#[test]
fn missing_payload_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run(&resolved("eigen.toml", Kind::Eigen, out.clone(), &dir.path().join("cache"))).unwrap();
    fs::remove_file(out.join("eigenvalues.csv")).unwrap();
    assert!(verify(&out.join(MANIFEST)).is_err());
}

#[test]
fn every_shipped_config_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    for (name, kind) in [
        ("eigen.toml", Kind::Eigen),
        ("spectral.toml", Kind::Spectral),
        ("observe.toml", Kind::Observe),
        ("shape.toml", Kind::Shape),
        ("timeopt.toml", Kind::Timeopt),
    ] {
        let out = dir.path().join(kind.name());
        run(&resolved(name, kind, out.clone(), &cache)).unwrap();
        let v = verify(&out.join(MANIFEST)).unwrap();
        let failed: Vec<_> = v.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}
