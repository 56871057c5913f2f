use std::process::Command;

const CONFIG: &str = "\
domain.lx = 0.5
domain.ly = 0.5
grid.nx = 9
grid.ny = 9
model.epsilon = 0.02
model.delta = 0.02
model.coupling = liuwu
model.s1 = 50
model.s2 = 50
time.tau = 1e-4
time.t_end = 2e-3
init.kind = random
init.lo = 0.4
init.hi = 0.6
seed = 3
output.dir = liuwu_run
output.snapshot_times = 0, 2e-3
";

fn dynbc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynbc"))
}

#[test]
fn run_writes_artifacts_under_output_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dynbc().arg("run").arg(&cfg).env("DYNBC_OUTPUT_ROOT", root.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("liuwu_run");
    for f in ["diagnostics.csv", "phi_0.csv", "psi_0.csv", "phi_20.csv", "psi_20.csv", "manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let diag = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    let col = |line: &str, i: usize| line.split(',').nth(i).unwrap().parse::<f64>().unwrap();
    let rows: Vec<&str> = diag.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    for i in [3, 4] {
        let m0 = col(rows[0], i);
        assert!(rows.iter().all(|r| (col(r, i) - m0).abs() < 1e-10));
    }
    assert!(out.stderr.is_empty());
}

#[test]
fn stability_warning_goes_to_stderr() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.cfg");
    std::fs::write(&cfg, CONFIG.replace("model.s1 = 50", "model.s1 = 5")).unwrap();
    let out = dynbc().arg("run").arg(&cfg).env("DYNBC_OUTPUT_ROOT", root.path()).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let manifest = std::fs::read_to_string(root.path().join("liuwu_run/manifest.json")).unwrap();
    assert!(manifest.contains("energy-stability bound"));
}

#[test]
fn bad_config_fails_with_key_name() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.cfg");
    std::fs::write(&cfg, CONFIG.replace("grid.ny", "grid.nyy")).unwrap();
    let out = dynbc().arg("run").arg(&cfg).env("DYNBC_OUTPUT_ROOT", root.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.nyy"));
    assert!(!root.path().join("liuwu_run").exists());
}

#[test]
fn missing_config_fails() {
    let out = dynbc().args(["run", "/nonexistent/config.cfg"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = dynbc::cli::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if cfg.params.potential == dynbc::PotentialSpec::TruncatedDoubleWell {
            assert!(cfg.params.satisfies_stability(), "{}", path.display());
        }
        n += 1;
    }
    assert_eq!(n, 4);
}
