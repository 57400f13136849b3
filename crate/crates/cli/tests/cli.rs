use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sdrelax(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdrelax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove(sdrelax_cli::OUT_ENV)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

/// The single run directory under an output root.
fn run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lattice_matches_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("lattice_1d.toml");
    let o = sdrelax(&["solve-H", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(run_dir(tmp.path()).join("H_oracle.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 49);
    for r in rows {
        let diff: f64 = r.split(',').nth(4).unwrap().parse().unwrap();
        assert!(diff.abs() < 1e-4, "{r}");
    }
}

#[test]
fn empty_lattice_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 0\n[cell_problems]\nA = []\nB = [1.0]\n");
    let o = sdrelax(&["solve-H", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty spec"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "seed = 0\nunknown_key = 1\n",
        "seed = 0\n[densities]\nbulk = \"W7\"\n",
        "dim = 1\n[cell_problems]\nA = [1.0]\nB = [1.0]\n",
        "seed = 0\ndim = 3\n",
        "seed = 0\n[relaxation.lattice]\n",
    ];
    for text in cases {
        let cfg = write_config(tmp.path(), text);
        for cmd in ["solve-H", "tables"] {
            let o = sdrelax(&[cmd, "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
            assert_eq!(o.status.code(), Some(2), "{cmd} {text:?}: {}", stderr(&o));
        }
    }
}

#[test]
fn failed_invariant_exits_with_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        // two iterations cannot reach the oracle value
        "seed = 0\n[densities]\nbulk = \"W1abs\"\n[cell_problems]\nA = [3.0]\nB = [1.0]\n\
         [cell_problems.solver]\nmax_iters = 2\ncheck_every = 1\nrestarts = 0\n",
    );
    let o = sdrelax(&["solve-H", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("cell_problems") && err.contains("oracle equivalence"), "{err}");
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("gamma_mixed.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(sdrelax(&["gamma", "--config", cfg.to_str().unwrap()], &a).status.code(), Some(0));
    assert_eq!(sdrelax(&["gamma", "--config", cfg.to_str().unwrap(), "--jobs", "1"], &b).status.code(), Some(0));
    let (da, db) = (run_dir(&a), run_dir(&b));
    assert_eq!(da.file_name(), db.file_name());
    for name in ["gamma.csv", "rigidity.csv", "manifest.json"] {
        assert_eq!(std::fs::read(da.join(name)).unwrap(), std::fs::read(db.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_changes_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("axioms_1d.toml");
    let cfg = cfg.to_str().unwrap();
    sdrelax(&["check-axioms", "--config", cfg], tmp.path());
    sdrelax(&["check-axioms", "--config", cfg, "--seed", "9"], tmp.path());
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 2);
}

#[test]
fn manifest_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 0\n[deformation]\nn = 2\ngradient = 0.5\njump = [1.0]\nG = -0.25\n[approximation]\nns = [4, 8, 16]\n",
    );
    let o = sdrelax(&["approximate", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = run_dir(&tmp.path().join("out"));
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let listed: BTreeSet<String> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap().to_string()).collect();
    let on_disk: BTreeSet<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    assert_eq!(listed, on_disk);
    assert!(on_disk.contains("u_16.json") && on_disk.contains("weakstar.csv"));
    for f in manifest["files"].as_array().unwrap() {
        let bytes = std::fs::read(dir.join(f["file"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert!(!f["producer"].as_str().unwrap().is_empty());
    }
    let u = sdrelax::fields::read_field(&dir.join("u_8.json")).unwrap();
    assert_eq!(u.dim(), 1);
}

#[test]
fn environment_overrides_out() {
    let tmp = tempfile::tempdir().unwrap();
    let env_root = tmp.path().join("env");
    let cfg = configs().join("axioms_1d.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_sdrelax"))
        .args(["check-axioms", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("flag"))
        .env(sdrelax_cli::OUT_ENV, &env_root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_root.exists());
    assert!(!tmp.path().join("flag").exists());
}

#[test]
fn strict_turns_warnings_into_failures() {
    let tmp = tempfile::tempdir().unwrap();
    // V_dw is one-dimensional, so a 2D run skips it with a warning
    let cfg = write_config(tmp.path(), "seed = 0\ndim = 2\n[densities]\nsamples = 32\n");
    let cfg = cfg.to_str().unwrap();
    let lax = sdrelax(&["check-axioms", "--config", cfg], &tmp.path().join("a"));
    assert_eq!(lax.status.code(), Some(0), "{}", stderr(&lax));
    assert!(stderr(&lax).contains("warning"));
    let strict = sdrelax(&["check-axioms", "--config", cfg, "--strict"], &tmp.path().join("b"));
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn cantor_breakdown_matches_recession() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("cantor_1d.toml");
    let o = sdrelax(&["relax", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(run_dir(tmp.path()).join("relax.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').take(5).map(|x| x.parse().unwrap()).collect();
    // H^∞(1, 0) = 1 for W2 with PSI1, so the Cantor term equals the mass
    assert!((row[2] - row[4]).abs() < 1e-6, "{csv}");
    assert_eq!(row[0], 0.0);
}

#[test]
fn surface_run_in_2d() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("surface_2d.toml");
    let o = sdrelax(&["solve-h", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(run_dir(tmp.path()).join("h.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn library_entry_point_reports_checks() {
    use clap::Parser;
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("critical_1d.toml");
    let args = sdrelax_cli::Args::try_parse_from([
        "sdrelax",
        "solve-h",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ])
    .unwrap();
    let report = sdrelax_cli::run(&args).unwrap();
    assert!(report.checks.iter().any(|c| c.invariant == "recession consistency" && c.passed));
    assert_eq!(report.exit_code(), 0);
}
