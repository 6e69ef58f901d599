use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .display()
        .to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgcomp")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn region_reports_named_terms() {
    let r = json(&["region", "--dist", &data("noisy_pair.json"), "--r1", "5", "--r2", "5", "--eps", "1/20"]);
    assert_eq!(r["region_kind"], "oneshot");
    assert_eq!(r["good_mass"], "7/16");
    assert_eq!(r["satisfied"], false);
    assert!(r["slack_terms"]["log_delta"].is_number());
    let c = json(&["region", "--dist", &data("constant.json"), "--r1", "0", "--r2", "0", "--eps", "1"]);
    assert_eq!(c["satisfied"], true);
    let cmi = json(&["region", "--dist", &data("noisy_pair.json"), "--kind", "cmi", "--r1", "5", "--r2", "5"]);
    assert_eq!(cmi["region_kind"], "cmi");
}

#[test]
fn exit_codes_follow_the_error_class() {
    let pair = data("noisy_pair.json");
    assert_eq!(code(&["region", "--dist", &data("malformed.json"), "--r1", "1", "--r2", "1"]), 2);
    assert_eq!(code(&["region", "--dist", &data("unnormalized.json"), "--r1", "1", "--r2", "1"]), 2);
    assert_eq!(code(&["region", "--dist", "/nonexistent.json", "--r1", "1", "--r2", "1"]), 2);
    assert_eq!(code(&["region", "--dist", &pair, "--r1", "one", "--r2", "1"]), 2);
    assert_eq!(code(&["region", "--dist", &pair, "--r1", "1", "--r2", "1", "--format", "csv"]), 2);
    assert_eq!(code(&["lemmas", "--suite", "nope"]), 2);
    assert_eq!(code(&["region", "--dist", &data("non_markov.json"), "--r1", "5", "--r2", "5"]), 3);
    assert_eq!(code(&["hardsw", "--eps", "1/10"]), 3);
    assert_eq!(code(&["interactive", "--dist", &pair, "--max-rate", "0"]), 4);
}

#[test]
fn normalize_flag_accepts_unnormalized_input() {
    let out = run(&["region", "--dist", &data("unnormalized.json"), "--r1", "1", "--r2", "1", "--normalize"]);
    // normalized, but the single-variable law is not a task instance
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variable"));
}

#[test]
fn simulate_is_deterministic_given_the_seed() {
    let args = ["simulate", "--dist", &data("noisy_pair.json"), "--trials", "500", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["simulate", "--dist", &data("noisy_pair.json"), "--trials", "500", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
    let threads = run(&["simulate", "--dist", &data("noisy_pair.json"), "--trials", "500", "--seed", "7", "--threads", "2"]);
    assert_eq!(a.stdout, threads.stdout);
}

#[test]
fn simulate_constant_instance_has_zero_error() {
    let r = json(&["simulate", "--dist", &data("constant.json"), "--trials", "200"]);
    assert_eq!(r["report"]["tv_estimate"], 0.0);
}

#[test]
fn simulate_csv_counts_every_trial() {
    let out = run(&["simulate", "--dist", &data("dsc.json"), "--task", "dsc", "--trials", "300", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,z,m,n,count"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 16);
    let total: u64 = rows.iter().map(|r| r.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 300);
}

#[test]
fn manifest_round_trips_and_replays() {
    let dir = scratch("manifest");
    let out = dir.join("sim.json");
    let transcript = dir.join("trials.jsonl");
    let o = out.display().to_string();
    let t = transcript.display().to_string();
    let r = run(&[
        "simulate", "--dist", &data("taskb.json"), "--task", "taskb", "--trials", "300", "--seed", "3", "--out", &o,
        "--transcript", &t,
    ]);
    assert!(r.status.success());
    assert!(r.stdout.is_empty(), "stdout carries nothing when --out is given");
    assert_eq!(std::fs::read_to_string(&transcript).unwrap().lines().count(), 300);
    let mpath = dir.join("sim.json.manifest.json");
    let text = std::fs::read_to_string(&mpath).unwrap();
    let m: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    let mp = mpath.display().to_string();
    let rep = json(&["replay", "--manifest", &mp]);
    assert_eq!(rep["reproduced"], true);

    // a tampered output hash is reported as a failed verification
    let mut bad = m.clone();
    bad["outputs"][0]["sha256"] = Value::String("00".repeat(32));
    let bad_path = dir.join("bad.manifest.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = run(&["replay", "--manifest", &bad_path.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["reproduced"], false);
}

#[test]
fn lemmas_with_zero_count_pass_trivially() {
    let r = json(&["lemmas", "--count", "0"]);
    assert_eq!(r["all_pass"], true);
    assert_eq!(r["suites"].as_array().unwrap().len(), 10);
}

#[test]
fn lemmas_pass_and_dump_nothing() {
    let dir = scratch("dump");
    let d = dir.join("cases");
    let r = json(&["lemmas", "--count", "10", "--seed", "11", "--dump", &d.display().to_string()]);
    assert_eq!(r["all_pass"], true);
    assert!(!d.exists());
}

#[test]
fn dumped_case_replays_bit_exactly() {
    let dir = scratch("case");
    let case = dir.join("sch-9-3.json");
    let c = case.display().to_string();
    assert_eq!(code(&["replay", "--suite", "sch", "--index", "3", "--seed", "9", "--out", &c]), 0);
    let r = json(&["replay", "--case", &c]);
    assert_eq!(r["reproduced"], true);
    assert_eq!(r["index"], 3);

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&case).unwrap()).unwrap();
    v["holds"] = Value::Bool(!v["holds"].as_bool().unwrap());
    std::fs::write(&case, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&["replay", "--case", &c]), 1);
}

#[test]
fn testset_build_then_verify() {
    let dir = scratch("testset");
    let set = dir.join("set.json").display().to_string();
    let pair = data("noisy_pair.json");
    assert_eq!(code(&["testset", "build", "--dist", &pair, "--r1", "3", "--r2", "7/2", "--out", &set]), 0);
    let r = json(&["testset", "verify", "--dist", &pair, "--testset", &set]);
    assert_eq!(r["all_hold"], true);
    assert_eq!(code(&["testset", "verify", "--dist", &data("dsc.json"), "--testset", &set]), 2);
}

#[test]
fn hardsw_matches_the_closed_form() {
    let r = json(&["hardsw", "--n", "64", "--eps", "1/64"]);
    let h = r["h_x_given_z"].as_f64().unwrap();
    assert!((h - 56f64.log2() / 8.0).abs() < 1e-12);
    for p in r["protocols"].as_array().unwrap() {
        assert_eq!(p["extraction"]["derived_cost_bound_holds"], true);
    }
}

#[test]
fn counterexample_ratio_is_within_bound() {
    let r = json(&["counterexample"]);
    let rep = &r["report"];
    assert!(rep["ratio"].as_f64().unwrap() <= 7.0 * (1.0f64 / 64.0).sqrt());
    assert_eq!(rep["ok"], true);
    assert_eq!(r["alpha_branch"], "large");
}

#[test]
fn reduce_rand_with_a_short_list() {
    let r = json(&["reduce-rand", "--dist", &data("taskb.json"), "--list-size", "64", "--budget", "2", "--seed", "1"]);
    let rep = &r["report"];
    assert_eq!(rep["shared_bits"], 6);
    if rep["found"] == true {
        assert!(rep["tv"].as_f64().unwrap() <= rep["bound"].as_f64().unwrap());
    }
}

#[test]
fn lossy_error_is_within_bound() {
    let r = json(&["lossy", "--task", &data("lossy.json"), "--r1", "6", "--r2", "6", "--trials", "2000"]);
    assert_eq!(r["hypothesis_holds"], true);
    assert_eq!(r["within_bound"], true);
}

#[test]
fn interactive_reports_both_orders() {
    let r = json(&["interactive", "--dist", &data("noisy_pair.json"), "--p", "1/4"]);
    assert_eq!(r["p_n_first"], 0.25);
    assert_eq!(r["feedback"], 2.0);
    let total = r["total"].as_f64().unwrap();
    let parts = r["alice"].as_f64().unwrap() + r["bob"].as_f64().unwrap() + r["feedback"].as_f64().unwrap();
    assert!((total - parts).abs() < 1e-9);
}
