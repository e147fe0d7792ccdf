//! End-to-end tests of the `permgd` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SWEEP: &str = r#"
seeds = [1, 2]
lr_grid = [0.05, 0.02]

[problem]
kind = "band_quadratic"
d = 10
lambda = 0.2
sigma_low = 10.0
m = 4

[engine]
epochs = 1000000
target = { metric = "param_norm", threshold = 0.2 }
max_steps = 100000

[sweep]
sigma_top = [0.0, 100.0]
m = [4]
K = [1]
"#;

const SMALL_RUN: &str = r#"
seeds = [1, 2]

[problem]
kind = "signed_example"
N = 6
sigma = 1.0

[[strategies]]
kind = "rr"

[[strategies]]
kind = "greedy"

[oracle]
mode = "gaussian"
zeta = 0.1

[engine]
gamma = 0.05
epochs = 20
x0 = 1.0
target = { metric = "param_norm", threshold = 0.05 }
"#;

const SMALL_GREEDY: &str = r#"
seeds = [1, 2, 3]
lr_grid = [0.2, 0.1, 0.05]

[problem]
kind = "signed_example"
N = 10
sigma = 1.0

[engine]
epochs = 10000
x0 = 1.0
target = { metric = "param_norm", threshold = 0.01 }

[demo]
rr_samples = 200
"#;

const SMALL_SAMECLASS: &str = r#"
seeds = [1, 2]

[problem]
kind = "sameclass_classification"
classes = 3
per_class = 20
dim = 3
batch_size = 5
seed = 1

[engine]
gamma = 0.1
epochs = 3
"#;

const SMALL_TUNE: &str = r#"
seeds = [1, 2, 3]
lr_grid = [1.0, 0.1]

[problem]
kind = "signed_example"
N = 2
sigma = 0.0

[strategy]
kind = "rr"

[engine]
epochs = 1000
x0 = 1.0
target = { metric = "param_norm", threshold = 0.2 }
"#;

const SMALL_MEASURE: &str = r#"
[problem]
kind = "signed_example"
N = 4
sigma = 1.0

[strategy]
kind = "greedy"

[engine]
gamma = 0.1
epochs = 1
x0 = 0.3
"#;

fn permgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permgd"))
        .args(args)
        .env_remove("PERMGD_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run_ok(sub: &str, config: &Path, out: &Path) -> Output {
    let o = permgd(&[sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(
        o.status.success(),
        "{sub} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL_RUN);
    let out = dir.path().join("out");
    run_ok("run", &cfg, &out);
    let summary = csv_lines(&out.join("summary.csv"));
    assert_eq!(
        summary[0],
        "strategy,seed,steps_to_target,diverged,total_steps,final_f,final_grad_norm_sq"
    );
    assert_eq!(summary.len(), 1 + 2 * 2);
    for label in ["rr", "greedy"] {
        for seed in [1, 2] {
            assert!(out.join(format!("trace_{label}_seed{seed}.csv")).exists());
            assert!(out.join(format!("epochs_{label}_seed{seed}.csv")).exists());
        }
    }
}

#[test]
fn sweep_writes_complete_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sweep.toml", SMALL_SWEEP);
    let out = dir.path().join("out");
    let o = run_ok("sweep", &cfg, &out);
    let results = csv_lines(&out.join("results.csv"));
    assert_eq!(
        results[0],
        "sigma_top,m,K,strategy,lr,seed,steps_to_target,final_grad_norm_sq,diverged"
    );
    // 2 sigma_top x 1 m x 2 strategies x 2 step sizes x 2 seeds
    assert_eq!(results.len() - 1, 16);
    let ratio = csv_lines(&out.join("ratio.csv"));
    assert_eq!(ratio[0], "sigma_top,4");
    assert_eq!(ratio.len(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sigma_top"));
}

#[test]
fn measure_greedy_sameclass_and_tune_write_outputs() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("measure", SMALL_MEASURE, vec!["phi.csv", "summary.json"]),
        ("greedy", SMALL_GREEDY, vec!["greedy_runs.csv", "greedy.json"]),
        ("sameclass", SMALL_SAMECLASS, vec!["sameclass.csv", "sameclass_summary.csv"]),
        ("tune", SMALL_TUNE, vec!["tune.csv", "best_lr.csv"]),
    ];
    for (sub, body, files) in cases {
        let cfg = write_config(dir.path(), &format!("{sub}.toml"), body);
        let out = dir.path().join(sub);
        run_ok(sub, &cfg, &out);
        for f in files {
            assert!(out.join(f).exists(), "{sub}: missing {f}");
        }
    }
    let phi = csv_lines(&dir.path().join("measure/phi.csv"));
    assert_eq!(phi, vec!["k,phi_sq", "1,1", "2,0", "3,1", "4,0"]);
    let best = fs::read_to_string(dir.path().join("tune/best_lr.csv")).unwrap();
    assert!(best.lines().nth(1).unwrap().contains(",1,1"), "{best}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("greedy/greedy.json")).unwrap()).unwrap();
    assert_eq!(json["greedy_sigma_star_sq"], 1.0);
}

#[test]
fn measure_accepts_an_order_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "m.toml", SMALL_MEASURE);
    let order = write_config(dir.path(), "order.txt", "1 2 3 4\n");
    let out = dir.path().join("out");
    let o = permgd(&[
        "measure",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--order",
        order.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_lines(&out.join("phi.csv")), vec!["k,phi_sq", "1,1", "2,4", "3,1", "4,0"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for (sub, body) in [
        ("run", SMALL_RUN),
        ("sweep", SMALL_SWEEP),
        ("measure", SMALL_MEASURE),
        ("greedy", SMALL_GREEDY),
        ("sameclass", SMALL_SAMECLASS),
        ("tune", SMALL_TUNE),
    ] {
        let cfg = write_config(dir.path(), &format!("{sub}.toml"), body);
        let a = dir.path().join(format!("{sub}_a"));
        let b = dir.path().join(format!("{sub}_b"));
        run_ok(sub, &cfg, &a);
        run_ok(sub, &cfg, &b);
        let files = csv_files(&a);
        assert!(!files.is_empty());
        for f in files {
            let other = b.join(f.file_name().unwrap());
            assert_eq!(fs::read(&f).unwrap(), fs::read(&other).unwrap(), "{sub}: {}", f.display());
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sweep.toml", SMALL_SWEEP);
    let mut bodies = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        let o = permgd(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w]);
        assert!(o.status.success());
        bodies.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn usage_and_config_errors_exit_with_code_2() {
    let o = permgd(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let o = permgd(&["run", "--config", "/nonexistent/permgd.toml", "--out", "/tmp/unused"]);
    assert_ne!(o.status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let bad = SMALL_RUN.replace("gamma = 0.05", "gamma = 0.05\ngama = 1.0");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let o = permgd(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));

    let odd = SMALL_RUN.replace("N = 6", "N = 5");
    let cfg = write_config(dir.path(), "odd.toml", &odd);
    let o = permgd(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = permgd(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["run", "sweep", "measure", "greedy", "sameclass", "tune"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}
