use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn retropredict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retropredict")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn toy() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy").display().to_string()
}

fn write_config(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("run.conf");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&retropredict(&["--help"])), 0);
    assert_eq!(code(&retropredict(&["--version"])), 0);
    let out = retropredict(&["run-all", "--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("--threads"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&retropredict(&[])), 1);
    assert_eq!(code(&retropredict(&["frobnicate"])), 1);
    assert_eq!(code(&retropredict(&["ingest", "--threads", "many"])), 1);
    assert_eq!(code(&retropredict(&["ingest", "--variant", "Everything"])), 1);

    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.conf").display().to_string();
    assert_eq!(code(&retropredict(&["ingest", "--config", &missing])), 1);
    let bad = write_config(&dir, "n_patients = lots\n");
    let out = retropredict(&["simulate", "--config", &bad]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let infeasible = write_config(&dir, "n_mutations = 2\n");
    let out_dir = dir.path().join("out").display().to_string();
    assert_eq!(code(&retropredict(&["simulate", "--config", &infeasible, "--out", &out_dir])), 1);
}

#[test]
fn stage_before_its_inputs_exits_one() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("cohort_dir = {}\n", toy()));
    let out_dir = dir.path().join("out").display().to_string();
    let out = retropredict(&["train", "--config", &config, "--out", &out_dir]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("earlier stages"));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cohort = dir.path().join("cohort");
    fs::create_dir(&cohort).unwrap();
    for entry in fs::read_dir(toy()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), cohort.join(entry.file_name())).unwrap();
    }
    let config = write_config(&dir, &format!("cohort_dir = {}\n", cohort.display()));
    let out_dir = dir.path().join("out").display().to_string();
    assert_eq!(code(&retropredict(&["ingest", "--config", &config, "--out", &out_dir])), 0);
    assert_eq!(code(&retropredict(&["label", "--config", &config, "--out", &out_dir])), 0);
    let labels = fs::read_to_string(dir.path().join("out/labels.tsv")).unwrap();
    assert_eq!(labels.lines().count(), 6);

    let therapies = cohort.join("therapies.tsv");
    let text = fs::read_to_string(&therapies).unwrap().replace("TDF;FTC;DRV", "TDF;FTC;XXX");
    fs::write(&therapies, text).unwrap();
    let out = retropredict(&["ingest", "--config", &config, "--out", &out_dir]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("therapies.tsv row 5"));
}

#[test]
fn run_all_on_a_small_synthetic_cohort() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "n_patients = 120\nn_candidates = 2\nsvm_max_epochs = 100\nruns = 2\nbootstrap_resamples = 20\n\
         variants = Full_History_Weighted, Full_No-history_Non-weighted\n",
    );
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.display().to_string();
    let out = retropredict(&["run-all", "--config", &config, "--out", &out_arg, "--seed", "3", "--threads", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["report.json", "manifest.json", "labels.tsv", "persistence_model.json", "cohort/therapies.tsv"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    assert!(out_dir.join("splits/seed-1/Full_History_Weighted/scree.tsv").exists());
    let out = retropredict(&["run-all", "--config", &config, "--out", &out_arg, "--seed", "3"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("already complete"));
}

#[test]
fn numeric_failures_map_to_three() {
    use retropredict_core::learner::LearnerError;
    let err = retropredict::Error::Learner(LearnerError::NumericFailure);
    assert_eq!(err.exit_status() as i32, 3);
}
