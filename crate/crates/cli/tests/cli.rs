use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const COORDINATION: &str = r#"
name = "coordination"
players = 2
input_length = 0
normalized = true

[[types]]
types = ["", ""]
prob = "1"

[[machines]]
source = """
label: heads
registers: 0
EMIT "0"
"""

[[machines]]
source = """
label: tails
registers: 0
EMIT "1"
"""

[[machines]]
source = """
label: coin
registers: 1
RAND r0
EMITR r0
"""

[[complexity]]
kind = "steps"

[[complexity]]
kind = "steps"

[[utilities]]
kind = "expr"
expr = "if(a1 == a2, 1, 0)"

[[utilities]]
kind = "expr"
expr = "if(a1 == a2, 1, 0)"

[[profiles]]
name = "agree"
machines = ["heads", "heads"]

[[profiles]]
name = "disagree"
machines = ["heads", "tails"]

[[profiles]]
name = "coins"
machines = ["coin", "coin"]
"#;

fn machgame(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_machgame"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MACHGAME_THREADS", t),
        None => cmd.env_remove("MACHGAME_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn game_file(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("game.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn doc(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON document")
}

#[test]
fn nash_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let g = g.to_str().unwrap();

    let ok = machgame(&["check-nash", g, "--profile", "agree"], None);
    assert_eq!(ok.status.code(), Some(0));
    let d = doc(&ok);
    assert_eq!(d["schema_version"], 1);
    assert_eq!(d["command"], "check-nash");
    assert_eq!(d["result"]["holds"], true);

    let bad = machgame(&["check-nash", g, "--profile", "disagree"], None);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(doc(&bad)["result"]["holds"], false);
}

#[test]
fn first_profile_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["eval-utility", g.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    assert_eq!(d["result"]["profile"], serde_json::json!(["heads", "heads"]));
    assert_eq!(d["result"]["utility"]["value"], "1/1");
}

#[test]
fn coin_flips_agree_half_the_time() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["eval-utility", g.to_str().unwrap(), "--profile", "coins", "--player", "2"], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(doc(&out)["result"]["utility"]["value"], "1/2");
}

#[test]
fn sampled_mode_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["eval-utility", g.to_str().unwrap(), "--profile", "coins", "--mode", "sampled"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn sampled_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let args = ["check-nash", g.to_str().unwrap(), "--profile", "coins", "--mode", "sampled", "--seed", "7", "--samples", "2000"];
    let a = machgame(&args, Some("1"));
    let b = machgame(&args, Some("1"));
    let c = machgame(&args, Some("4"));
    assert!(a.status.code() == Some(0) || a.status.code() == Some(2));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn bad_thread_count_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["validate", g.to_str().unwrap()], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_reports_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let good = game_file(dir.path(), COORDINATION);
    let out = machgame(&["validate", good.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(doc(&out)["result"]["profiles"], serde_json::json!(["agree", "disagree", "coins"]));

    let broken = game_file(dir.path(), &COORDINATION.replace("prob = \"1\"", "prob = \"1/2\""));
    let out = machgame(&["validate", broken.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ProbabilityNotOne"));
}

#[test]
fn missing_file_is_an_error() {
    let out = machgame(&["validate", "/nonexistent/game.toml"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let target = dir.path().join("report.json");
    let out = machgame(&["validate", g.to_str().unwrap(), "--output", target.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let d: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(d["command"], "validate");
}

#[test]
fn human_format_leads_with_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["--format", "human", "check-nash", g.to_str().unwrap(), "--profile", "disagree"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("check-nash [FAILS]"));
}

#[test]
fn coalition_and_robust_checks_run() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let g = g.to_str().unwrap();
    let out = machgame(&["check-coalition", g, "--profile", "agree", "--coalition", "1", "--coalition", "2"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = machgame(&["check-robust", g, "--profile", "agree", "--speedup", "2*t"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ModeAssumptionViolated"));

    let monotone = game_file(dir.path(), &COORDINATION.replace("normalized = true", "normalized = true\nmonotone = true"));
    let out = machgame(&["check-robust", monotone.to_str().unwrap(), "--profile", "agree", "--speedup", "2*t"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(doc(&out)["command"], "check-robust");
}

#[test]
fn solve_finds_a_pure_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["solve", g.to_str().unwrap(), "--assume-cheap", "--base", "heads,tails"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d = doc(&out);
    assert_eq!(d["result"]["certificate"]["max_regret"], "0/1");
}

#[test]
fn solve_needs_a_mode() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_file(dir.path(), COORDINATION);
    let out = machgame(&["solve", g.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exported_case_loads_and_solves_to_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("roshambo.toml");
    let out = machgame(&["run-case", "roshambo", "--export", file.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(doc(&out)["result"]["pass"], true);

    let out = machgame(
        &["solve", file.to_str().unwrap(), "--free-randomization", "--base", "rock,paper,scissors", "--lift"],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d = doc(&out);
    let strat = &d["result"]["players"][0]["strategy"][0];
    assert_eq!(strat["distribution"], serde_json::json!(["1/3", "1/3", "1/3"]));
    assert!(strat["sampler"].as_str().unwrap().contains("RAND"));
}

#[test]
fn case_parameters_accept_both_spellings() {
    let a = machgame(&["run-case", "frpd", "--N", "10", "--delta", "9/10"], None);
    let b = machgame(&["run-case", "frpd", "N=10", "delta=9/10"], None);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_case_or_parameter_is_an_error() {
    let out = machgame(&["run-case", "chess"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownCase"));
    let out = machgame(&["run-case", "frpd", "--rounds", "3"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn global_options_after_case_parameters_apply() {
    let out = machgame(&["run-case", "frpd", "--N", "10", "--format", "human"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("run-case [HOLDS]"));
}

#[test]
fn export_after_case_parameters_writes_the_game() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.toml");
    let out = machgame(&["run-case", "roshambo", "cost_det=1", "cost_rand=2", "--export", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let out = machgame(&["validate", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
}
