//! Golden tests for the `bnl` binary: output formats, exit codes, and
//! reproducibility, exercised through real process invocations.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn bnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnl"))
        .args(args)
        .output()
        .expect("spawning the bnl binary")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

#[test]
fn est_prints_exact_value_and_metadata() {
    let mood = fixture("mood.json");
    let out = bnl(&["est", mood.to_str().unwrap(), "--observe", "P=1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "est = 133/5 (26.600000) [2.66000\u{b7}10^1]\n\
         observed = P=1\n\
         program_size = 16\n\
         branch_order = lex\n"
    );
}

#[test]
fn est_prints_a_symbolic_rational_function_for_parameterized_networks() {
    let sprinkler = fixture("sprinkler.json");
    let out = bnl(&["est", sprinkler.to_str().unwrap(), "--observe", "G=0"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "est = (200*a^2 - 20*a - 780)/(89*a^2 - 69*a - 21)\n\
         observed = G=0\n\
         program_size = 14\n\
         branch_order = lex\n"
    );
}

#[test]
fn est_with_param_binding_substitutes_before_analysis() {
    let sprinkler = fixture("sprinkler.json");
    let out = bnl(&[
        "est",
        sprinkler.to_str().unwrap(),
        "--observe",
        "G=0",
        "--param",
        "a=1/2",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(
        stdout_of(&out).starts_with("est = 2960/133 (22.255639)"),
        "got: {}",
        stdout_of(&out)
    );
}

#[test]
fn est_of_an_impossible_observation_is_infinite() {
    let mut file = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    write!(
        file,
        r#"{{
          "name": "point",
          "variables": [{{"name": "X", "values": [0, 1]}}],
          "cpt": [{{"node": "X", "parents": [], "rows": [
            {{"given": [], "dist": ["1", "0"]}}
          ]}}]
        }}"#
    )
    .unwrap();
    let out = bnl(&["est", file.path().to_str().unwrap(), "--observe", "X=1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).starts_with("est = inf\n"), "got: {}", stdout_of(&out));
}

#[test]
fn prob_prints_the_posterior() {
    let mood = fixture("mood.json");
    let out = bnl(&[
        "prob",
        mood.to_str().unwrap(),
        "--observe",
        "P=1",
        "--query",
        "D=0",
        "--query",
        "G=0",
        "--query",
        "M=0",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "posterior = 27/100 (0.270000) [2.70000\u{b7}10^-1]\n"
    );
}

#[test]
fn translate_prints_the_sampling_program() {
    let mood = fixture("mood.json");
    let out = bnl(&["translate", mood.to_str().unwrap(), "--observe", "P=1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.starts_with("repeat {\n"), "got: {text}");
    assert!(text.trim_end().ends_with("} until (P = 1)"), "got: {text}");
    assert!(
        text.contains("D := 3/5\u{b7}\u{27e8}0\u{27e9} + 2/5\u{b7}\u{27e8}1\u{27e9};"),
        "got: {text}"
    );
    assert!(text.contains("if ((D = 0 \u{2227} P = 0)) {"), "got: {text}");
}

#[test]
fn sweep_emits_exact_csv_rows() {
    let sprinkler = fixture("sprinkler.json");
    let out = bnl(&[
        "sweep",
        sprinkler.to_str().unwrap(),
        "--observe",
        "G=0",
        "--param",
        "a",
        "--grid",
        "0:1:0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "param,est\n0,260/7\n0.5,2960/133\n1,600\n");
}

#[test]
fn simulate_is_deterministic_for_a_fixed_plan() {
    let mood = fixture("mood.json");
    let args = [
        "simulate",
        mood.to_str().unwrap(),
        "--observe",
        "P=1",
        "--trials",
        "20000",
        "--seed",
        "7",
    ];
    let first = bnl(&args);
    assert_eq!(first.status.code(), Some(0), "stderr: {}", stderr_of(&first));
    assert_eq!(
        stdout_of(&first),
        "trials=20000 mean=26.611100 var=481.689941 ci99=0.399748 truncated=0\n"
    );
    let second = bnl(&args);
    assert_eq!(stdout_of(&first), stdout_of(&second));
}

#[test]
fn stats_prints_structure_counts() {
    let earthquake = fixture("earthquake.bif");
    let out = bnl(&["stats", earthquake.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "nodes=5 edges=4 avg_mb=2.00\n");
}

#[test]
fn check_reports_zero_mismatches() {
    let mood = fixture("mood.json");
    let out = bnl(&["check", mood.to_str().unwrap(), "--observe", "P=1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "mismatches=0\n");
}

#[test]
fn missing_files_and_bad_labels_exit_2() {
    let out = bnl(&["stats", "no-such-file.bif"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error: "), "got: {}", stderr_of(&out));

    let mood = fixture("mood.json");
    let out = bnl(&["est", mood.to_str().unwrap(), "--observe", "P=7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error: "), "got: {}", stderr_of(&out));
}

#[test]
fn exceeding_the_table_cap_exits_3_with_a_size_diagnostic() {
    let asia = fixture("asia.bif");
    let out = Command::new(env!("CARGO_BIN_EXE_bnl"))
        .args(["est", asia.to_str().unwrap()])
        .env("BNL_MAX_TABLE_CELLS", "4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("cells"), "got: {err}");
    assert!(err.contains('4'), "got: {err}");
}

#[test]
fn all_truncated_trials_exit_4() {
    let mood = fixture("mood.json");
    let out = bnl(&[
        "simulate",
        mood.to_str().unwrap(),
        "--observe",
        "P=1",
        "--trials",
        "50",
        "--max-steps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).starts_with("error: "), "got: {}", stderr_of(&out));
}
