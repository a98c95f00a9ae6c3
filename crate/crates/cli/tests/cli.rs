use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn orlicz(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orlicz"))
        .args(args)
        .env("ORLICZ_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: stdout {} stderr {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

fn ok(args: &[&str], out: &Path) -> Value {
    let o = orlicz(args, out);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    json(&o)
}

fn code(args: &[&str], out: &Path) -> i32 {
    orlicz(args, out).status.code().unwrap()
}

#[test]
fn nfunc_commands() {
    let d = TempDir::new().unwrap();
    let v = ok(&["nfunc", "eval", "exp_star", "--t", "0"], d.path());
    assert_eq!(v["rows"][0]["value"], 0.0);
    let tau0 = ok(&["nfunc", "tau0"], d.path())["tau0"].as_f64().unwrap();
    assert!(tau0 > 11.0 && tau0 < 12.0);
    let v = ok(&["nfunc", "verify", "exp:gamma=1,tau=20"], d.path());
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 4);
    // exp_{γ,τ} itself is not an N-function: φ(0) = 1 breaks the quotient check.
    assert_eq!(code(&["nfunc", "verify", "exp_raw:gamma=1,tau=2"], d.path()), 2);
    let v = ok(&["nfunc", "delta2", "power:p=2", "--lo", "0.01", "--hi", "100"], d.path());
    assert_eq!(v["report"]["class"], "global");
    let v = ok(&["nfunc", "delta2", "exp_star"], d.path());
    assert_eq!(v["report"]["class"], "none_on_range");
}

#[test]
fn modulars_norms_energies() {
    let d = TempDir::new().unwrap();
    let v = ok(&["modular", "--field", "zero", "--phi", "exp_star"], d.path());
    assert_eq!(v["result"]["value"], 0.0);
    let v = ok(&["modular", "--field", "half_log", "--phi", "tilde_exp:gamma=0,tau=tau0"], d.path());
    assert!((v["result"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-3, "{v}");
    assert_eq!(v["result"]["quadrature"]["grading_depth"], 40);
    // 2|u'| = 1/x is not φ-integrable for φ(s) = e^s − 1 − s: a valid answer.
    let v = ok(&["modular", "--field", "half_log", "--phi", "tilde_exp:gamma=0,tau=tau0", "--lambda", "0.5"], d.path());
    assert_eq!(v["diverged"], true);
    let v = ok(&["energy", "--field", "plane", "--phi", "power:p=2"], d.path());
    assert!((v["result"]["value"].as_f64().unwrap() - 4.0).abs() < 1e-9, "{v}");
    let v = ok(&["energy", "--field", "plane", "--phi", "power:p=2", "--weight", "one_plus_x2"], d.path());
    assert!((v["result"]["value"].as_f64().unwrap() - 16.0 / 3.0).abs() < 1e-3, "{v}");
}

#[test]
fn norm_of_stored_field_is_discrete_l2() {
    let d = TempDir::new().unwrap();
    let n = 20;
    let vals: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 4.0) / 3.0).collect();
    let mut csv = String::from("x,v\n");
    for (i, v) in vals.iter().enumerate() {
        csv += &format!("{},{v}\n", (i as f64 + 0.5) / n as f64);
    }
    let path = d.path().join("u.csv");
    fs::write(&path, csv).unwrap();
    let l2 = (vals.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let v = ok(&["norm", "--field", path.to_str().unwrap(), "--phi", "power:p=2", "--tol", "1e-12"], d.path());
    let got = v["norm"].as_f64().unwrap();
    assert!((got - l2).abs() < 1e-9 * l2, "{got} vs {l2}");
}

#[test]
fn config_file_and_overrides() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.json");
    fs::write(&cfg, r#"{"command": "modular", "phi": "exp_star", "field": "plane", "lambda": 4}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let v = ok(&["--config", c, "modular"], d.path());
    assert_eq!(v["phi"], "exp_star");
    assert_eq!(v["lambda"], 4.0);
    let v = ok(&["--config", c, "modular", "--phi", "power:p=2"], d.path());
    assert_eq!(v["phi"], "power:p=2");
    // ∫∫ ((t + 2x)/4)² = 1/6
    assert!((v["result"]["value"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-4, "{v}");
    assert_eq!(code(&["--config", c, "norm"], d.path()), 1);

    fs::write(&cfg, "{\n  \"phi\": \"exp_star\",\n  \"colour\": 1\n}").unwrap();
    let o = orlicz(&["--config", c, "modular"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_one() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&["bogus"], d.path()), 1);
    assert_eq!(code(&["modular", "--colour", "red"], d.path()), 1);
    assert_eq!(code(&["modular", "--field", "nope", "--phi", "exp_star"], d.path()), 1);
    assert_eq!(code(&["nfunc", "eval", "exp:gamma=2,tau=20"], d.path()), 1);
    assert_eq!(code(&["smooth", "run", "--b", "tsin3x", "--phi", "exp_star", "--delta", "0.01", "--delta", "0.1"], d.path()), 1);
    assert_eq!(code(&["scenario", "run", "nope"], d.path()), 1);
    assert_eq!(code(&["scenario", "run", "example_ex", "--set", "colour=1"], d.path()), 1);
    assert_eq!(code(&["--help"], d.path()), 0);
}

#[test]
fn scenarios_write_run_directories() {
    let d = TempDir::new().unwrap();
    let list = ok(&["scenario", "list"], d.path());
    assert_eq!(list.as_array().unwrap().len(), 4);

    let v = ok(&["scenario", "run", "example_ex"], d.path());
    assert_eq!(v["passed"], true);
    let dir = d.path().join("example_ex");
    let csv = fs::read_to_string(dir.join("integrals.csv")).unwrap();
    assert!(csv.starts_with("h,int_f_h,int_log1p_f_h,int_f_f_h,mean_modular,energy_gap\n"), "{csv}");
    assert_eq!(csv.lines().count(), 6);
    let first = fs::read(dir.join("report.json")).unwrap();

    let again = d.path().join("again");
    ok(&["--out", again.to_str().unwrap(), "scenario", "run", "example_ex"], d.path());
    for f in ["config.json", "report.json", "integrals.csv", "convergence.csv"] {
        assert_eq!(fs::read(dir.join(f)).unwrap(), fs::read(again.join("example_ex").join(f)).unwrap(), "{f}");
    }
    assert_eq!(first, fs::read(again.join("example_ex/report.json")).unwrap());

    ok(&["scenario", "run", "example_w1k"], d.path());
    let report: Value = serde_json::from_slice(&fs::read(d.path().join("example_w1k/report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["modular"][0]["status"], "value");
    assert_eq!(report["report"]["modular_doubled"][0]["status"], "diverged");

    let o = orlicz(&["scenario", "run", "example_ex", "--set", "integral_tol=1e-30"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["passed"], false);
}

#[test]
fn smooth_run_meets_budgets() {
    let d = TempDir::new().unwrap();
    let v = ok(&["smooth", "run", "--b", "tsin3x", "--phi", "exp_star", "--delta", "1e-2"], d.path());
    assert_eq!(v["budgets_met"], true);
    let dir = d.path().join("smooth");
    let plan: Value = serde_json::from_slice(&fs::read(dir.join("plan_0.json")).unwrap()).unwrap();
    let rings = plan["rings"].as_array().unwrap();
    assert!(!rings.is_empty());
    for r in rings {
        for b in ["value", "gradient", "cutoff_l1", "cutoff_sup", "energy"] {
            assert_eq!(r[b]["passed"], true, "ring {} budget {b}", r["j"]);
        }
        assert!(r["epsilon"].as_f64().unwrap() < 1e-2);
    }
    for f in ["config.json", "energy.csv", "energy.json", "convergence.csv", "b_delta_0.csv", "db_delta_0.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let cfg: Value = serde_json::from_slice(&fs::read(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["command"], "smooth");
    assert_eq!(cfg["deltas"][0], 1e-2);
}

#[test]
fn unmet_budget_exits_three() {
    let d = TempDir::new().unwrap();
    // Db = 200: φ(|Db|) ~ e²⁰⁰, so rounding alone exceeds the energy budget.
    let n = 16;
    let mut csv = String::from("t,x,v\n");
    for i in 0..n {
        for j in 0..n {
            let (t, x) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            csv += &format!("{t},{x},{}\n", 200.0 * x);
        }
    }
    let path = d.path().join("steep.csv");
    fs::write(&path, csv).unwrap();
    let o = orlicz(
        &["smooth", "run", "--b", path.to_str().unwrap(), "--phi", "exp_star", "--delta", "0.1", "--resolution", "16", "--audit-points", "20"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ring 2") && err.contains("budget (d: energy)"), "{err}");
}
