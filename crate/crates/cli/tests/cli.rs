use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_decisive")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn run_json(args: &[&str]) -> (i32, Value) {
    let (code, text) = run(args);
    (code, serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}")))
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn validate_reports_the_model_hash() {
    let path = fixture("coin.shs");
    let (code, v) = run_json(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let hash = v["model"]["sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(v["result"]["locations"], 3);
    assert_eq!(v["result"]["structure"]["cycle_reset"], true);
    assert!(v["result"]["semantics"]["edge_choice"].is_string());
}

#[test]
fn syntax_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir, "bad.shs", "shs v1\nvars x\nloc a { rate x = 1 ; inv { x <= } }\n");
    let (code, v) = run_json(&["validate", &bad]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "model");
    assert!(v["error"]["message"].as_str().unwrap().contains(":3:"));
    let (code, _) = run_json(&["qual", &bad, "--target", "t"]);
    assert_eq!(code, 2);
}

#[test]
fn capped_refinement_exits_with_3_and_lists_blocks() {
    let path = fixture("no_finite_abs.shs");
    let (code, v) = run_json(&["abstract", path.to_str().unwrap(), "--max-steps", "10"]);
    assert_eq!(code, 3);
    let payload = &v["error"]["payload"];
    assert_eq!(payload["outcome"], "StepCapReached");
    assert_eq!(payload["steps"], 10);
    let regions: Vec<&str> = payload["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|b| b["location"] == "l0")
        .map(|b| b["region"].as_str().unwrap())
        .collect();
    assert!(regions.contains(&"x < 0"));
    for i in 1..=9 {
        let want = format!("x >= {}, x < {i}", i - 1);
        assert!(regions.contains(&want.as_str()), "missing {want} in {regions:?}");
    }
}

#[test]
fn non_cycle_reset_models_are_a_precondition_failure() {
    let path = fixture("pacman.shs");
    let (code, v) = run_json(&["qual", path.to_str().unwrap(), "--target", "b"]);
    assert_eq!(code, 3);
    assert_eq!(v["error"]["hypothesis"], "cycle-reset");
}

#[test]
fn encoded_machine_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let machine = write(&dir, "h.2cm", "# one increment\ninc C 1\nhalt\n");
    let (code, text) = run(&["encode-2cm", &machine, "--cycle-reset"]);
    assert_eq!(code, 0);
    let model = write(&dir, "h.shs", &text);
    let (code, v) = run_json(&["qual", &model, "--target", "halt"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verdict"], "AlmostSure");
    let (_, text) = run(&["encode-2cm", &machine]);
    let faithful = write(&dir, "f.shs", &text);
    let (code, v) = run_json(&["validate", &faithful]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["structure"]["cycle_reset"], false);
    assert_eq!(run_json(&["qual", &faithful, "--target", "halt"]).0, 3);
    let broken = write(&dir, "b.2cm", "inc C 5\nhalt\n");
    assert_eq!(run(&["encode-2cm", &broken]).0, 2);
}

#[test]
fn quant_brackets_the_coin() {
    let path = fixture("coin.shs");
    let (code, v) = run_json(&["quant", path.to_str().unwrap(), "--target", "goal", "--epsilon", "0.02", "--confidence", "0.99", "--seed", "3"]);
    assert_eq!(code, 0);
    let lo = v["result"]["interval"][0].as_f64().unwrap();
    let hi = v["result"]["interval"][1].as_f64().unwrap();
    assert!(lo <= 0.5 && 0.5 <= hi && hi - lo <= 0.02, "[{lo}, {hi}]");
    assert_eq!(v["parameters"]["quant"]["seed"], 3);
}

#[test]
fn identical_arguments_give_identical_reports() {
    let path = fixture("retry.shs");
    let args = ["simulate", path.to_str().unwrap(), "--horizon", "20", "--runs", "200", "--seed", "5", "--target", "goal"];
    let (a, first) = run(&args);
    let (b, second) = run(&args);
    assert_eq!((a, b), (0, 0));
    assert_eq!(first, second);
    let v: Value = serde_json::from_str(&first).unwrap();
    assert!(v["result"]["target"]["estimate"].as_f64().unwrap() > 0.0);
    let path = fixture("coin.shs");
    let args = ["quant", path.to_str().unwrap(), "--target", "goal"];
    assert_eq!(run(&args).1, run(&args).1);
}

#[test]
fn finite_chain_utilities() {
    let dir = tempfile::tempdir().unwrap();
    // gambler's ruin on {0..5} with up-probability 7/10 and absorbing ends
    let chain = write(
        &dir,
        "ruin.json",
        r#"{"kernel": [[1,0,0,0,0,0],["3/10",0,"7/10",0,0,0],[0,"3/10",0,"7/10",0,0],[0,0,"3/10",0,"7/10",0],[0,0,0,"3/10",0,"7/10"],[0,0,0,0,0,1]]}"#,
    );
    let (code, v) = run_json(&["mc", &chain, "--op", "reach", "--set", "0"]);
    assert_eq!(code, 0);
    // ((q/p) - (q/p)^5) / (1 - (q/p)^5) with q/p = 3/7
    let r = 3.0f64 / 7.0;
    let expected = (r - r.powi(5)) / (1.0 - r.powi(5));
    let got: Vec<&str> = v["result"]["reach"][1].as_str().unwrap().split('/').collect();
    let got = got[0].parse::<f64>().unwrap() / got[1].parse::<f64>().unwrap();
    assert!((got - expected).abs() < 1e-12);
    let (code, v) = run_json(&["mc", &chain, "--op", "btilde", "--set", "0"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["btilde"], serde_json::json!([5]));
    let (code, v) = run_json(&["mc", &chain, "--op", "lemmas", "--blocks", "1;0,2;0,1,2,3", "--from", "1"]);
    assert_eq!(code, 0);
    for s in v["result"]["splits"].as_array().unwrap() {
        assert_eq!(s["holds"], true);
    }
    let (code, v) = run_json(&["mc", &chain, "--op", "criterion", "--set", "0", "--attractor", "0,5"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["criterion"]["decisive"], true);
    let bad = write(&dir, "bad.tsv", "1/2\t1/3\n0\t1\n");
    assert_eq!(run(&["mc", &bad, "--op", "reach", "--set", "0"]).0, 2);
}
