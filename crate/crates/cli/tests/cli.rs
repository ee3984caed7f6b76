use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_affgrpo");

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["score", "--nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_name() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    fs::write(&records, "{not json}\n").unwrap();
    let responses = dir.path().join("r.txt");
    fs::write(&responses, "x\n").unwrap();
    let lexicon = dir.path().join("l.vec");
    fs::write(&lexicon, "1\na 1\n").unwrap();
    let out = run(&[
        "score",
        "--responses",
        responses.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--lexicon",
        lexicon.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[DatasetError::Parse]"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "learning_rat = 1\n").unwrap();
    let out = run(&[
        "train-toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[ConfigError::UnknownKey]"));
}

#[test]
fn score_writes_one_breakdown_per_response() {
    let dir = tempfile::tempdir().unwrap();
    let rec = r#"{"id":"a","image_path":"a.jpg","instruction":"open","targets":[{"affordance":"openable","mask_path":"m.pgm","bbox":[1,1,4,4],"centroid":[3,3]}]}"#;
    let records = dir.path().join("records.jsonl");
    fs::write(&records, format!("{rec}\n{rec}\n")).unwrap();
    let good = r#"<think>t</think><rethink>r</rethink><answer>[{"bbox_2d":[1,1,4,4],"point_2d":[3,3],"affordance":"openable"}]</answer>"#;
    let responses = dir.path().join("r.txt");
    fs::write(
        &responses,
        format!(
            "{{\"response\": {}}}\nno tags at all\n",
            serde_json::to_string(good).unwrap()
        ),
    )
    .unwrap();
    let lexicon = dir.path().join("l.vec");
    fs::write(&lexicon, "1\nopenable 1\n").unwrap();
    let out = run(&[
        "score",
        "--responses",
        responses.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--lexicon",
        lexicon.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["total"], 7.0);
    assert_eq!(lines[1]["total"], 0.0);
    assert_eq!(lines[1]["failure_stage"], "missing_think");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# toy run\nseed = 3\nsteps = 5\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = run(&[
        "train-toy",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
        "-q",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let snap = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(snap.contains("seed = 9\n"));
    assert!(snap.contains("steps = 5\n"));
    assert_eq!(
        fs::read_to_string(out_dir.join("stats.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}
