use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn tutorgrade(args: &[&str], workdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutorgrade"))
        .args(args)
        .arg("--workdir")
        .arg(workdir)
        .output()
        .expect("binary runs")
}

fn corpus_arg() -> String {
    data("desk_corpus.jsonl").display().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn bundled_data_matches_generator() {
    let (train, test) = tutorgrade_cli::desk_corpora();
    assert_eq!(
        std::fs::read_to_string(data("desk_corpus.jsonl")).unwrap(),
        train.to_jsonl()
    );
    assert_eq!(
        std::fs::read_to_string(data("desk_test.jsonl")).unwrap(),
        test.to_jsonl()
    );
    assert_eq!(train.num_dialogues(), 30);
    assert_eq!(train.num_responses(), 240);
}

#[test]
fn clean_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for w in [&a, &b] {
        let out = tutorgrade(&["clean", "--corpus", &corpus_arg()], w);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in [
        "cleaned.jsonl",
        "cleaning_report.csv",
        "cleaning_config.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let report = std::fs::read_to_string(a.join("cleaning_report.csv")).unwrap();
    let rows: Vec<&str> = report
        .lines()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        rows,
        [
            "category",
            "Extra Info",
            "Appended Dialogue Trimming",
            "Code Abstraction",
            "Punctuation Cleanup",
            "Totals"
        ]
    );
}

#[test]
fn missing_config_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tutorgrade(
        &[
            "clean",
            "--corpus",
            &corpus_arg(),
            "--config",
            "/nonexistent/run.json",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("cannot read config file"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_cleaning_config_fails_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tutorgrade(
        &[
            "clean",
            "--corpus",
            &corpus_arg(),
            "--cleaning",
            "/nonexistent/clean.json",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
    assert!(!tmp.path().join("cleaned.jsonl").exists());
}

#[test]
fn k_above_dialogue_count_fails_at_split() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tutorgrade(
        &["pipeline", "--corpus", &corpus_arg(), "--k", "31"],
        tmp.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("stage `split` failed"), "{err}");
    assert!(err.contains("exceeds the number of dialogues"), "{err}");
    // Earlier artifacts stay for inspection.
    assert!(tmp.path().join("cleaned.jsonl").exists());
}

#[test]
fn transformer_backend_is_reported_unavailable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tutorgrade(
        &[
            "pipeline",
            "--corpus",
            &corpus_arg(),
            "--k",
            "3",
            "--backend",
            "transformer",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("stage `train` failed") && err.contains("not available"),
        "{err}"
    );
}

#[test]
fn stages_rerun_individually() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let out = tutorgrade(&["predict"], w);
    assert!(
        stderr(&out).contains("run `tutorgrade clean` first"),
        "{}",
        stderr(&out)
    );

    let common = [
        "--corpus",
        &corpus_arg(),
        "--k",
        "3",
        "--weights",
        "balanced",
        "--jobs",
        "2",
    ];
    for stage in ["clean", "split", "train", "predict", "evaluate", "analyze"] {
        let mut args = vec![stage];
        args.extend(common);
        let out = tutorgrade(&args, w);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    for f in [
        "folds.json",
        "checkpoints/fold-03/head.bin",
        "checkpoints/fold-01/weights.json",
        "predictions/cv/fold-02.csv",
        "metrics/cv.json",
        "analysis/pca.csv",
        "analysis/errors.json",
    ] {
        assert!(w.join(f).exists(), "{f}");
    }
    assert!(!w.join("predictions/test").exists());
    let weights = std::fs::read_to_string(w.join("checkpoints/fold-01/weights.json")).unwrap();
    assert!(weights.contains("balanced"), "{weights}");

    let out = tutorgrade(&["ensemble"], w);
    assert!(
        stderr(&out).contains("no test predictions"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn parallel_training_matches_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let heads: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|jobs| {
            let w = tmp.path().join(format!("jobs{jobs}"));
            let out = tutorgrade(
                &[
                    "pipeline",
                    "--corpus",
                    &corpus_arg(),
                    "--k",
                    "3",
                    "--jobs",
                    jobs,
                ],
                &w,
            );
            assert!(out.status.success(), "{}", stderr(&out));
            std::fs::read(w.join("manifest.json")).unwrap()
        })
        .collect();
    assert_eq!(heads[0], heads[1]);
}

#[test]
fn config_file_drives_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"corpus": {:?}, "k": 3, "track": "mistake_location", "max_epochs": 4, "patience": 1}}"#,
            corpus_arg()
        ),
    )
    .unwrap();
    let w = tmp.path().join("work");
    let out = tutorgrade(&["pipeline", "--config", cfg.to_str().unwrap()], &w);
    assert!(out.status.success(), "{}", stderr(&out));
    let train_cfg = std::fs::read_to_string(w.join("checkpoints/train_config.json")).unwrap();
    assert!(train_cfg.contains("\"max_epochs\": 4"), "{train_cfg}");
    assert!(train_cfg.contains("manual:0.8,2.2,0.9"), "{train_cfg}");
    let log = std::fs::read_to_string(w.join("checkpoints/fold-01/train_log.csv")).unwrap();
    assert!(log.lines().count() <= 5);
}
