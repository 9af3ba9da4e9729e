use std::process::{Command, Output};

fn fringe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fringe")).args(args).env_remove("FRINGE_WORKERS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn enumerate_lists_catalan_many_trees() {
    let o = fringe(&["enumerate", "--n", "4"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = fringe(&["enumerate", "--n", "6", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 42);
}

#[test]
fn enumerate_past_cap_is_usage_error() {
    let o = fringe(&["enumerate", "--n", "15"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn theory_poisson_leaf() {
    let o = fringe(&["theory", "--dist", "poisson_one", "--functional", "leaf"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let e = (-1f64).exp();
    assert!((v["mu"].as_f64().unwrap() - e).abs() < 1e-12);
    let g = e - 2.0 * e * e;
    assert!((v["gamma_sq"].as_f64().unwrap() - g).abs() < 1e-12);
}

#[test]
fn exact_law_is_rational() {
    let o = fringe(&["exact", "--dist", "binomial_two_half", "--n", "5", "--functional", "leaf"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mean"], "5/3");
    assert_eq!(v["exact"], true);
}

#[test]
fn verify_passes() {
    let o = fringe(&["verify", "--cap", "7", "--sequences", "200"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = fringe(&["verify", "--cap", "6", "--dist", "poisson_one", "--functional", "leaf", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["max_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn output_does_not_depend_on_workers() {
    let args = ["clt", "--dist", "geometric_half", "--functional", "outdeg:1", "--n", "200", "--replicates", "300", "--seed", "7"];
    let one = fringe(&[&args[..], &["--workers", "1"]].concat());
    let four = fringe(&[&args[..], &["--workers", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let s1 = fringe(&["sample", "--dist", "poisson_one", "--n", "50", "--count", "3", "--seed", "7"]);
    let s2 = fringe(&["sample", "--dist", "poisson_one", "--n", "50", "--count", "3", "--seed", "7"]);
    assert_eq!(s1.stdout, s2.stdout);
    assert_eq!(stdout(&s1).lines().count(), 3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fringe(&["theory", "--dist", "nope", "--functional", "leaf"]).status.code(), Some(2));
    assert_eq!(fringe(&["theory", "--functional", "leaf"]).status.code(), Some(2));
    assert_eq!(fringe(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fringe(&["clt", "--dist", "poisson_one", "--functional", "leaf", "--n", "50", "--centering", "median"]).status.code(), Some(2));
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = std::env::temp_dir().join(format!("fringe-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("exp.conf");
    std::fs::write(&cfg, "# defaults\ndist = binomial_two_half\nfunctional = leaf\nn = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = fringe(&["exact", "--config", cfg]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 5);
    let o = fringe(&["exact", "--config", cfg, "--n", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 3);
    let out = dir.join("out.json");
    let o = fringe(&["theory", "--config", cfg, "--output", out.to_str().unwrap()]);
    assert!(o.status.success() && o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().ends_with("}\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}
