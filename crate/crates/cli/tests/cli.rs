use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn doss(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_doss"))
        .args(args)
        .current_dir(dir)
        .env_remove("DOSS_WORKERS")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Rows of a comma-separated table, header dropped.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

const FREE: &str = r#"
[times]
t = 1.0

[grid]
min = -4.0
max = 4.0
points = 41

[mc]
n_paths = 20000
n_steps = 50
seed = 3
"#;

#[test]
fn free_propagation_table() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "free.toml", FREE);
    let (code, err) = doss(&["propagate", "--config", "free.toml", "--out", "out"], dir.path());
    assert_eq!(code, 0, "{err}");
    let table = rows(&dir.path().join("out/results.csv"));
    assert_eq!(table.len(), 41);
    let header = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert!(header.starts_with("t,x,re_psi,im_psi,stderr_re,stderr_im,n_paths\n"));
    let peak = table
        .iter()
        .max_by(|a, b| a[2].hypot(a[3]).total_cmp(&b[2].hypot(b[3])))
        .unwrap();
    assert_eq!(peak[1], 0.0);
    // |ψ(1, 0)| = π^{-1/4}·2^{-1/4} for the free ground state
    let exact = std::f64::consts::PI.powf(-0.25) * 2f64.powf(-0.25);
    let se = peak[4].hypot(peak[5]);
    assert!((peak[2].hypot(peak[3]) - exact).abs() < 3.0 * se, "{peak:?}");
    for name in ["manifest.toml", "plot_abs.dat", "plot_arg.dat"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn invalid_epsilon_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[potential]
terms = [{ kind = "polynomial", coefficients = [0, 0, 0, 0, 0, 0, 1] }]
[times]
t = 0.5
[assumptions]
epsilon = 1.0
"#;
    write(dir.path(), "bad.toml", cfg);
    let (code, err) = doss(&["check-assumptions", "--config", "bad.toml", "--out", "out"], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("epsilon"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn precondition_violations_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        // quadratic guard |a2| < 1/(2T²)
        "[potential]\nterms = [{ kind = \"quadratic\", a2 = 3.0 }]\n[times]\nt = 0.5\n",
        // evaluation point on the singularity
        "[potential]\nterms = [{ kind = \"inverse_abs\", a = 1.0, b = 0.0, n = 1 }]\n[times]\nt = 0.5\n[grid]\nx = [0.0]\n",
        // t beyond the horizon
        "[times]\nt = 1.0\nhorizon = 0.5\n",
        // unknown field
        "[times]\nt = 1.0\nbogus = 1\n",
        "[times]\nt = 1.0\n[mc]\nn_paths = 1\n",
    ];
    for (k, cfg) in cases.iter().enumerate() {
        let name = format!("c{k}.toml");
        write(dir.path(), &name, cfg);
        let (code, err) = doss(&["propagate", "--config", &name, "--out", "out"], dir.path());
        assert_eq!(code, 2, "case {k}: {err}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn outputs_do_not_depend_on_workers_and_manifest_reruns() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "free.toml", FREE);
    for (w, out) in [("1", "w1"), ("4", "w4")] {
        let (code, err) = doss(&["propagate", "--config", "free.toml", "--out", out, "--workers", w], dir.path());
        assert_eq!(code, 0, "{err}");
    }
    let a = fs::read(dir.path().join("w1/results.csv")).unwrap();
    let b = fs::read(dir.path().join("w4/results.csv")).unwrap();
    assert_eq!(a, b);
    let (code, err) = doss(&["propagate", "--config", "w4/manifest.toml", "--out", "again"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(a, fs::read(dir.path().join("again/results.csv")).unwrap());
    let manifest = fs::read_to_string(dir.path().join("w4/manifest.toml")).unwrap();
    assert!(manifest.contains("workers = 4"));
    assert!(manifest.contains("config_hash"));
}

#[test]
fn worker_flag_overrides_environment() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "free.toml", &FREE.replace("n_paths = 20000", "n_paths = 200"));
    let run = |extra: &[&str], out: &str| {
        let mut args = vec!["propagate", "--config", "free.toml", "--out", out];
        args.extend_from_slice(extra);
        let status = Command::new(env!("CARGO_BIN_EXE_doss"))
            .args(&args)
            .current_dir(dir.path())
            .env("DOSS_WORKERS", "3")
            .status()
            .unwrap();
        assert!(status.success());
        fs::read_to_string(dir.path().join(out).join("manifest.toml")).unwrap()
    };
    assert!(run(&[], "env").contains("workers = 3"));
    assert!(run(&["--workers", "2"], "flag").contains("workers = 2"));
}

#[test]
fn path_ladder_scales_like_the_clt() {
    let dir = TempDir::new().unwrap();
    let cfg = "[times]\nt = 0.5\n[mc]\nn_steps = 20\n[convergence]\naxis = \"n_paths\"\nvalues = [10000, 20000, 40000]\n";
    write(dir.path(), "conv.toml", cfg);
    let (code, err) = doss(&["convergence", "--config", "conv.toml", "--out", "out"], dir.path());
    assert_eq!(code, 0, "{err}");
    let table = rows(&dir.path().join("out/convergence.csv"));
    assert_eq!(table.len(), 3);
    let ratio = table[0][3] / table[2][3];
    assert!((ratio - 2.0).abs() < 0.4, "stderr ratio {ratio}");
}

#[test]
fn step_ladder_differences_shrink() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[potential]
terms = [{ kind = "polynomial", coefficients = [0, 0, 0, 0, 0, 0, 1] }]
[times]
t = 0.5
[grid]
x = [0.5]
[mc]
n_paths = 4000
[convergence]
axis = "n_steps"
values = [5, 10, 20, 40]
"#;
    write(dir.path(), "steps.toml", cfg);
    let (code, err) = doss(&["convergence", "--config", "steps.toml", "--out", "out"], dir.path());
    assert_eq!(code, 0, "{err}");
    let table = rows(&dir.path().join("out/convergence.csv"));
    assert!(table[3][6] < table[1][6], "{table:?}");
}

#[test]
fn degenerate_ladders_are_rejected() {
    let dir = TempDir::new().unwrap();
    for (k, values) in ["[10000]", "[10000, 20000, 30000]"].iter().enumerate() {
        let cfg = format!("[times]\nt = 0.5\n[convergence]\naxis = \"n_paths\"\nvalues = {values}\n");
        let name = format!("l{k}.toml");
        write(dir.path(), &name, &cfg);
        let (code, _) = doss(&["convergence", "--config", &name, "--out", "out"], dir.path());
        assert_eq!(code, 2);
    }
}

#[test]
fn overflowing_weights_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[potential]
terms = [{ kind = "polynomial", coefficients = [0, 0, 20000, 0, 0, 0, 1] }]
[times]
t = 1.0
[mc]
n_paths = 500
n_steps = 50
"#;
    write(dir.path(), "hot.toml", cfg);
    let (code, err) = doss(&["propagate", "--config", "hot.toml", "--out", "out"], dir.path());
    assert_eq!(code, 3, "{err}");
}

#[test]
fn ufunctional_and_assumption_modes_run() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[g]
terms = [{ kind = "gaussian" }]
[h]
terms = [{ kind = "gaussian", mean = 0.25 }]
[window]
kind = "delta"
x = 0.3
[times]
t = 0.5
[mc]
n_paths = 2000
n_steps = 40
[ufunctional]
ray = [0.0, [0.0, 1.0]]
radii = [0.5]
growth = [0.5, 1.0, 2.0]
[assumptions]
epsilon = 0.5
"#;
    write(dir.path(), "u.toml", cfg);
    let (code, err) = doss(&["ufunctional", "--config", "u.toml", "--out", "u"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(rows(&dir.path().join("u/ufunctional.csv")).len(), 2);
    let (code, err) = doss(&["check-assumptions", "--config", "u.toml", "--out", "a"], dir.path());
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(dir.path().join("a/assumptions.csv")).unwrap();
    assert!(text.contains("A1Intab"));
}

#[test]
fn validate_writes_a_summary() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "v.toml", "[validate]\nscale = \"smoke\"\n");
    let (code, err) = doss(&["validate", "--config", "v.toml", "--out", "out"], dir.path());
    assert!(code == 0 || code == 1, "{err}");
    let summary = fs::read_to_string(dir.path().join("out/validation.txt")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.starts_with("criterion ")).count(), 8);
    assert!(summary.contains("criteria passed"));
}
