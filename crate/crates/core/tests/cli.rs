use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn cli(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triple-score"))
        .arg("--config")
        .arg(fixtures().join("pipeline.conf"))
        .arg("--workdir")
        .arg(work)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn trained(work: &Path) {
    for step in ["ingest", "train"] {
        let out = cli(work, &[step]);
        assert!(out.status.success(), "{step}: {}", stderr(&out));
    }
}

#[test]
fn ingest_reports_coverage_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["ingest"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "coverage: 20 of 21 persons (95.24%), 1 orphan sentence(s)\n");
    let first = fs::read(dir.path().join("index.json")).unwrap();
    assert!(cli(dir.path(), &["ingest"]).status.success());
    assert_eq!(fs::read(dir.path().join("index.json")).unwrap(), first);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["--sentences", "/no/such/sentences.tsv", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/sentences.tsv"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "colour = blue\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_triple-score"))
        .arg("--config")
        .arg(&conf)
        .arg("ingest")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("colour"));

    assert_eq!(cli(dir.path(), &["--threads", "0", "ingest"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["--seed", "many", "ingest"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn no_positives_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("space.tsv");
    fs::write(&lex, "Astronaut\tastronaut\tcosmonaut\n").unwrap();
    let work = dir.path().join("work");
    assert!(cli(&work, &["ingest"]).status.success());
    let out = cli(&work, &["--profession-lexicon", lex.to_str().unwrap(), "train"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("positive"), "{}", stderr(&out));
}

#[test]
fn score_eval_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    trained(&work);

    let scored = dir.path().join("scored.tsv");
    let out = cli(
        &work,
        &["score", "--input", fixtures().join("triples.tsv").to_str().unwrap(), "--output", scored.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&scored).unwrap();
    assert_eq!(text.lines().count(), 36);
    assert!(text.contains("p01\tprofession\tFootballer\t7\n"));
    assert!(text.contains("p21\tprofession\tSinger\t3\n"));
    assert!(text.ends_with("p22\tprofession\tLawyer\t3\n"));

    let report = dir.path().join("eval.txt");
    let out = cli(
        &work,
        &[
            "eval",
            "--predictions",
            scored.to_str().unwrap(),
            "--truth",
            fixtures().join("truth.tsv").to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let printed = stdout(&out);
    assert_eq!(fs::read_to_string(&report).unwrap(), printed);
    for key in ["accuracy=", "asd=", "tau=", "n_triples=36", "ranked_groups=", "skipped_groups="] {
        assert!(printed.lines().any(|l| l.starts_with(key)), "missing {key} in\n{printed}");
    }

    let out = cli(&work, &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = stdout(&out);
    assert!(rep.contains("coverage: 20 of 21"));
    assert!(rep.contains("profession") && rep.contains("nationality"));
}

#[test]
fn bad_lines_fail_or_warn() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    trained(&work);
    let input = dir.path().join("in.tsv");
    fs::write(&input, "p01\tprofession\tFootballer\np01\treligion\tActor\np01\tprofession\n").unwrap();
    let output = dir.path().join("out.tsv");
    let args = ["score", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()];

    let out = cli(&work, &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2") && stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(!output.exists());

    let out = cli(&work, &[&args[..], &["--skip-bad"]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stderr(&out).matches("warning:").count(), 2);
    assert_eq!(fs::read_to_string(&output).unwrap(), "p01\tprofession\tFootballer\t7\n");
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    trained(&work);
    let input = dir.path().join("empty.tsv");
    fs::write(&input, "").unwrap();
    let output = dir.path().join("out.tsv");
    let out = cli(&work, &["score", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&output).unwrap(), "");
}
