use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gazestab"));
    c.env_remove("GAZESTAB_MODEL_PATH");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> usize {
    csv.lines().filter(|l| !l.starts_with('#')).count() - 1
}

/// A short run file in `dir` pointing at the shipped scripts.
fn short_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    let scripts = configs().join("scripts");
    std::fs::write(&p, body.replace("SCRIPTS", &scripts.display().to_string())).unwrap();
    p
}

#[test]
fn missing_script_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "r.toml", "script = \"nowhere/missing.toml\"\n");
    let o = run_config(&cfg, &dir.path().join("o.csv"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.toml"), "{}", stderr(&o));
}

#[test]
fn syntax_error_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(
        dir.path(),
        "r.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nmode = \"kff\"\ndt = = 3\n",
    );
    let o = run_config(&cfg, &dir.path().join("o.csv"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r.toml:3:"), "{}", stderr(&o));
}

#[test]
fn unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(
        dir.path(),
        "r.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nspeedup = 2\n",
    );
    let o = run_config(&cfg, &dir.path().join("o.csv"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speedup"), "{}", stderr(&o));
}

#[test]
fn exp_a_log_has_one_row_per_tick_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("runs/exp_a_kff.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run_config(&cfg, out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text_a = std::fs::read(&a).unwrap();
    assert_eq!(text_a, std::fs::read(&b).unwrap());
    // duration 14 s, dt 0.01 s
    assert_eq!(data_rows(&String::from_utf8(text_a).unwrap()), 1401);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["rows"], 1401);
    assert_eq!(summary["meta"]["mode"], "kff");
}

#[test]
fn overrides_reach_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(
        dir.path(),
        "r.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nduration = 0.5\nmode = \"kff\"\n",
    );
    let out = dir.path().join("o.csv");
    let o = run_config(
        &cfg,
        &out,
        &["--seed", "99", "--mode", "ifb", "--dof", "eyes"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# seed=99\n"));
    assert!(text.contains("# mode=ifb\n"));
    assert!(text.contains("# dof=eyes\n"));
    assert_eq!(data_rows(&text), 51);
}

#[test]
fn default_output_uses_config_stem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(
        dir.path(),
        "short_run.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nduration = 0.1\n",
    );
    let o = bin()
        .current_dir(dir.path())
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("short_run.csv").exists());
    assert!(dir.path().join("short_run.summary.json").exists());
}

#[test]
fn model_path_environment_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(
        dir.path(),
        "r.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nduration = 0.1\n",
    );
    let radians = configs().join("models/default_head_radians.toml");
    let out = dir.path().join("o.csv");
    let o = bin()
        .env("GAZESTAB_MODEL_PATH", &radians)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin()
        .env("GAZESTAB_MODEL_PATH", dir.path().join("absent_model.toml"))
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent_model.toml"));
}

#[test]
fn diverged_run_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    // Lifting the robot 3 m/s moves the whole cloud out of view within a second.
    let script = dir.path().join("launch.toml");
    std::fs::write(
        &script,
        "name = \"launch\"\nunits = \"degrees\"\n\n[[segment]]\nlabel = \"up\"\njoint = \"base-z\"\nstart = 0.5\nend = 2.0\nvelocity = 3.0\n",
    )
    .unwrap();
    let cfg = short_config(
        dir.path(),
        "r.toml",
        "script = \"launch.toml\"\nmode = \"off\"\nduration = 2.0\n",
    );
    let out = dir.path().join("o.csv");
    let o = run_config(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("partial log"));
    let rows = data_rows(&std::fs::read_to_string(&out).unwrap());
    assert!(rows > 50 && rows < 201, "{rows}");
}

#[test]
fn compare_orders_conditions_and_reports_self_as_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for mode in ["off", "kff", "ifb"] {
        let out = dir.path().join(format!("{mode}.csv"));
        let o = run_config(
            &configs().join(format!("runs/exp_a_{mode}.toml")),
            &out,
            &[],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        logs.push(out);
    }
    let o = bin()
        .arg("compare")
        .arg("--baseline")
        .arg(&logs[0])
        .args(&logs)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let order: Vec<&str> = table
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1))
        .filter(|m| ["off", "kff", "ifb"].contains(m))
        .collect();
    assert_eq!(order, ["kff", "ifb", "off"], "{table}");
    let off_line = table
        .lines()
        .find(|l| l.split_whitespace().nth(1) == Some("off"))
        .unwrap();
    let cells: Vec<&str> = off_line.split_whitespace().skip(4).collect();
    assert!(
        !cells.is_empty() && cells.iter().all(|c| *c == "0.0%"),
        "{off_line}"
    );
}

#[test]
fn compare_requires_logs() {
    let o = bin()
        .args(["compare", "--baseline", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_rejects_mismatched_logs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg_a = short_config(
        dir.path(),
        "a.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nduration = 0.2\n",
    );
    let cfg_b = short_config(
        dir.path(),
        "b.toml",
        "script = \"SCRIPTS/exp_a.toml\"\nduration = 0.3\n",
    );
    assert!(run_config(&cfg_a, &a, &[]).status.success());
    assert!(run_config(&cfg_b, &b, &[]).status.success());
    let o = bin()
        .arg("compare")
        .arg("--baseline")
        .arg(&a)
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot be compared"), "{}", stderr(&o));
}
