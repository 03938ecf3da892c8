//! Run directories: writing, reading back, and reporting.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use rtlevo::llm::{Matcher, ScriptEntry};
use rtlevo::runner::{self, RunConfig, ARTIFACTS_DIR, GENERATIONS_FILE, HEADER_FILE, REPORT_FILE, TRANSCRIPTS_FILE};
use rtlevo::Error;

/// A problem directory holding a description, a script that always answers
/// with one passing design, and a config using the given evaluator table.
fn workspace(dir: &Path, script: &[ScriptEntry], evaluator: &str) -> PathBuf {
    fs::write(dir.join("problem.md"), "A 2-bit adder: y = a + b, carry dropped.\n").unwrap();
    fs::write(dir.join("script.json"), serde_json::to_string(script).unwrap()).unwrap();
    let config = format!(
        r#"output_dir = "out"

[problem]
name = "adder2"
description_file = "problem.md"
circuit_kind = "combinational"
reference_ppa = {{ power = 4.0, area = 40.0, effective_clock_period = 0.5 }}

[evolution]
population_size = 4
offspring_count = 4
max_generations = 3
rng_seed = 5

[provider.scripted]
script = "script.json"

{evaluator}
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    path
}

fn half_power_script() -> Vec<ScriptEntry> {
    vec![
        common::feedback_entry(),
        ScriptEntry::new(Matcher::Any, common::design("half", 2.0, 40.0, true)).sticky(),
    ]
}

fn synthetic(dir: &Path, script: &[ScriptEntry]) -> RunConfig {
    let mut cfg = RunConfig::load(&workspace(dir, script, "[evaluator.synthetic]")).unwrap();
    cfg.keep_artifacts = true;
    cfg
}

#[test]
fn run_writes_a_complete_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic(tmp.path(), &half_power_script());
    let summary = runner::run(&cfg).unwrap();
    assert_eq!(summary.run_dir, tmp.path().join("out"));
    assert!(summary.report.found_correct && summary.report.flag.is_none());
    for f in ["config.toml", HEADER_FILE, GENERATIONS_FILE, TRANSCRIPTS_FILE, REPORT_FILE] {
        assert!(summary.run_dir.join(f).exists(), "{f}");
    }
    let lines = fs::read_to_string(summary.run_dir.join(GENERATIONS_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let transcripts = fs::read_to_string(summary.run_dir.join(TRANSCRIPTS_FILE)).unwrap();
    assert!(transcripts.lines().count() >= 4 + 3 * 4);
    let ind = summary.run_dir.join(ARTIFACTS_DIR).join("ind-0");
    for f in ["design.v", "thought.txt", "feedback.txt", "sim.log", "synth.log"] {
        assert!(ind.join(f).exists(), "{f}");
    }

    let err = runner::run(&cfg).unwrap_err();
    assert!(err.to_string().contains("already holds a run"), "{err}");
}

#[test]
fn report_shows_improvement_over_the_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = runner::run(&synthetic(tmp.path(), &half_power_script())).unwrap();
    let text = runner::render_report(&runner::load_run(&summary.run_dir).unwrap()).unwrap();
    assert!(text.contains("Status: functionally correct design found"), "{text}");
    assert!(text.contains("Power improv. 50.0%"), "{text}");
    assert!(text.contains("Area improv. 0.0%"), "{text}");
    assert!(text.contains("## Pass rate by generation"));
    assert!(text.contains("## Strategy statistics"));
    assert!(text.contains("## Power-area scatter"));
}

#[test]
fn all_failing_run_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let script = vec![
        common::feedback_entry(),
        ScriptEntry::new(Matcher::Any, common::design("bad", 1.0, 10.0, false)).sticky(),
    ];
    let summary = runner::run(&synthetic(tmp.path(), &script)).unwrap();
    assert!(!summary.report.found_correct);
    assert_eq!(summary.report.flag.as_deref(), Some(rtlevo::evolution::NO_CORRECT_DESIGN));
    let text = runner::render_report(&runner::load_run(&summary.run_dir).unwrap()).unwrap();
    assert!(text.contains(rtlevo::evolution::NO_CORRECT_DESIGN));
    assert!(text.contains("not reported"));
}

#[test]
fn corrupt_record_names_its_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = runner::run(&synthetic(tmp.path(), &half_power_script())).unwrap();
    let path = summary.run_dir.join(GENERATIONS_FILE);
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(str::to_string).collect();
    let half = lines[2].len() / 2;
    lines[2].truncate(half);
    fs::write(&path, lines.join("\n")).unwrap();
    match runner::load_run(&summary.run_dir).unwrap_err() {
        Error::Record { generation, .. } => assert_eq!(generation, 2),
        other => panic!("unexpected error {other}"),
    }

    fs::write(&path, "").unwrap();
    assert!(matches!(runner::load_run(&summary.run_dir), Err(Error::Record { .. })));
}

#[test]
fn missing_liberty_stops_before_the_run_directory_exists() {
    let tmp = tempfile::tempdir().unwrap();
    let table = "[evaluator.toolchain]\nliberty_path = \"nowhere/cells.lib\"\nrequired_executables = [\"sh\"]\n";
    let cfg = RunConfig::load(&workspace(tmp.path(), &half_power_script(), table)).unwrap();
    let err = runner::run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Environment(_)), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn dry_run_builds_one_prompt_per_individual() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic(tmp.path(), &half_power_script());
    let prompts = runner::dry_run(&cfg).unwrap();
    assert_eq!(prompts.len(), 4);
    assert!(prompts[0].user_text.contains("2-bit adder"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn reference_ppa_uses_the_configured_evaluator() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic(tmp.path(), &half_power_script());
    let design = tmp.path().join("ref.v");
    fs::write(&design, common::design("ref", 3.0, 30.0, true)).unwrap();
    let ppa = runner::reference_ppa(&cfg, &design).unwrap();
    assert_eq!((ppa.power, ppa.area), (3.0, 30.0));

    fs::write(&design, "module bare; endmodule\n").unwrap();
    let err = runner::reference_ppa(&cfg, &design).unwrap_err();
    assert!(matches!(err, Error::Ineligible(_)), "{err}");
}
