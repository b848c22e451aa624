use gazestab::config::{load_model, load_run, parse_toml, ModelFile, RunFile, ScriptFile};
use gazestab::model::HeadModel;
use std::path::{Path, PathBuf};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn toml_files(sub: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(configs().join(sub))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no files in {sub}");
    files
}

#[test]
fn shipped_models_round_trip() {
    for path in toml_files("models") {
        let file = ModelFile::load(&path).unwrap();
        let again: ModelFile = parse_toml(&file.to_toml_string(), &path).unwrap();
        assert_eq!(again, file, "{}", path.display());
        assert_eq!(again.to_model().unwrap(), file.to_model().unwrap());
    }
}

#[test]
fn degree_and_radian_models_are_identical() {
    let deg = load_model(&configs().join("models/default_head.toml")).unwrap();
    let rad = load_model(&configs().join("models/default_head_radians.toml")).unwrap();
    assert_eq!(deg, rad);
    assert_eq!(deg.left_chain(), rad.left_chain());
    assert_eq!(deg, HeadModel::default_model());
}

#[test]
fn shipped_scripts_round_trip() {
    for path in toml_files("scripts") {
        let file = ScriptFile::load(&path).unwrap();
        let again: ScriptFile = parse_toml(&file.to_toml_string(), &path).unwrap();
        assert_eq!(again, file, "{}", path.display());
        assert_eq!(again.to_script().unwrap(), file.to_script().unwrap());
    }
}

#[test]
fn shipped_runs_round_trip_and_load() {
    for path in toml_files("runs") {
        let file = RunFile::load(&path).unwrap();
        let again: RunFile = parse_toml(&file.to_toml_string(), &path).unwrap();
        assert_eq!(again, file, "{}", path.display());
        let setup = load_run(&path, None).unwrap();
        assert_eq!(setup.model, HeadModel::default_model());
        setup.params.steps().unwrap();
    }
}

#[test]
fn exp_a_script_shape() {
    let s = gazestab::config::load_script(&configs().join("scripts/exp_a.toml")).unwrap();
    let w = 20f64.to_radians();
    assert!(s
        .segments
        .iter()
        .all(|g| (g.velocity.abs() - w).abs() < 1e-15));
    let labels: Vec<&str> = s.segments.iter().map(|g| g.label.as_str()).collect();
    for l in ["yaw", "pitch", "roll", "simultaneous"] {
        assert!(labels.contains(&l));
    }
    // Each joint's net displacement returns to zero.
    for j in gazestab::simulator::DisturbanceJoint::ALL {
        let net: f64 = s
            .segments
            .iter()
            .filter(|g| g.joint == j)
            .map(|g| g.velocity * (g.end - g.start))
            .sum();
        assert!(net.abs() < 1e-12);
    }
}
