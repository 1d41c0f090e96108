use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_peglab");

fn peglab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = peglab(args);
    assert!(
        o.status.success(),
        "peglab {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, method: &str, budget: u64) -> String {
    let p = dir.join(name);
    std::fs::write(
        &p,
        format!(
            "method = \"{method}\"\nseeds = [0]\nbudget_sim_steps = {budget}\nrolling_window = 5\n\
             [ppo]\nsamples_per_update = 32\nminibatch = 16\nepochs_per_update = 2\n\
             [fix_seq_search]\ntrials_per_eval = 2\ngenerations = 2\n\
             [eval]\ntrials = 4\n"
        ),
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_eval_rollout_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let hy = write_config(d, "hybrid.toml", "hybrid", 20_000);
    let fs = write_config(d, "fixseq.toml", "fix-seq", 20_000);
    let hy_run = d.join("hy");
    let fs_run = d.join("fs");

    let out = ok(&["train", "--config", &hy, "--out", hy_run.to_str().unwrap()]);
    assert!(out.contains("seed 0"), "{out}");
    for f in ["run.json", "config.toml", "seed_0/curve.csv"] {
        assert!(hy_run.join(f).exists(), "missing {f}");
    }
    let curve = std::fs::read_to_string(hy_run.join("seed_0/curve.csv")).unwrap();
    assert!(curve.starts_with("# config_hash="));
    ok(&["train", "--config", &fs, "--out", fs_run.to_str().unwrap()]);
    assert!(fs_run.join("seed_0/fix_seq.json").exists());
    assert!(fs_run.join("seed_0/trace.csv").exists());

    // The copied config reproduces the run's hash.
    let copied = hy_run.join("config.toml");
    let out2 = ok(&["config"]);
    assert!(out2.contains("method = \"hybrid\""));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(hy_run.join("run.json")).unwrap()).unwrap();
    let again = d.join("again");
    let o = ok(&["train", "--config", copied.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    let m2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(again.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], m2["config_hash"], "{o}");

    ok(&["eval", "--config", &hy, "--run", hy_run.to_str().unwrap()]);
    ok(&["eval", "--config", &fs, "--run", fs_run.to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(hy_run.join("seed_0/eval.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], 4);
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(hy_run.join("seed_0/eval.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);

    let ck = hy_run.join("seed_0/checkpoints/final.json");
    assert!(ck.exists());
    let trace = d.join("trace.csv");
    let out = ok(&[
        "rollout",
        "--config",
        &hy,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.contains("steps"), "{out}");
    let rows: Vec<String> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("step,"))
        .map(String::from)
        .collect();
    assert!(!rows.is_empty() && rows.len() <= 15);
    for r in &rows {
        assert!(r.contains("SUCCESS") || r.contains("FAILURE"), "{r}");
    }

    let cmp = d.join("cmp");
    let table = ok(&[
        "compare",
        hy_run.to_str().unwrap(),
        fs_run.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(table.contains("hybrid") && table.contains("fix-seq"), "{table}");
    for f in ["comparison.json", "curves.csv", "steps_to_60.csv", "summary.csv"] {
        let body = std::fs::read_to_string(cmp.join(f)).unwrap();
        if f.ends_with(".csv") {
            assert!(body.starts_with("# env_hash="), "{f}");
        }
    }

    let o = peglab(&["compare", hy_run.to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least two"));
}

#[test]
fn compare_rejects_different_environments() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = write_config(d, "a.toml", "fix-seq", 1000);
    let b = d.join("b.toml");
    std::fs::write(&b, std::fs::read_to_string(&a).unwrap() + "[task]\npreset = \"square\"\n").unwrap();
    ok(&["train", "--config", &a, "--out", d.join("ra").to_str().unwrap()]);
    ok(&["train", "--config", b.to_str().unwrap(), "--out", d.join("rb").to_str().unwrap()]);
    let o = peglab(&[
        "compare",
        d.join("ra").to_str().unwrap(),
        d.join("rb").to_str().unwrap(),
        "--out",
        d.join("c").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different task"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("bad_method.toml", "method = \"random\"\n", "method"),
        ("owned.toml", "[ppo]\nseed = 4\n", "ppo.seed"),
        ("unknown.toml", "[sim]\nstifness = 3.0\n", "stifness"),
        ("range.toml", "[eval]\ntrials = 0\n", "eval.trials"),
        ("syntax.toml", "method = \n", "syntax.toml"),
    ];
    for (name, body, needle) in cases {
        let p = tmp.path().join(name);
        std::fs::write(&p, body).unwrap();
        let o = peglab(&["train", "--config", p.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn missing_checkpoint_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "hybrid", 1000);
    let o = peglab(&["eval", "--config", &cfg, "--checkpoint", "/nonexistent/ck.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/ck.json"));
    let o = peglab(&["eval", "--config", &cfg, "--run", tmp.path().to_str().unwrap(), "--trials", "0"]);
    assert!(!o.status.success());
}

#[test]
fn config_command_prints_presets() {
    let out = ok(&["config", "--preset", "triangle-hard", "--method", "ee-pose"]);
    assert!(out.contains("preset = \"triangle-hard\""));
    assert!(out.contains("method = \"ee-pose\""));
    assert!(!out.contains("friction ="));
    let o = peglab(&["config", "--preset", "hexagon"]);
    assert!(!o.status.success());
}
