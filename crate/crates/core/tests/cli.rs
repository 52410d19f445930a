mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use chronofuse::cli::{run, Exit, ARCHIVE_FILE, STORE_FILE};
use tempfile::TempDir;

struct Outcome {
    code: Exit,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str], env_config: Option<&Path>) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("chronofuse").chain(args.iter().copied());
    let code = run(argv, env_config.map(Path::to_path_buf), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ingests the fixture corpus into a fresh directory.
fn ingested() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let lex = common::fixture("lexicon.txt");
    let [a, b] = [
        common::fixture("corpus/report_a.txt"),
        common::fixture("corpus/report_b.csv"),
    ];
    let o = cli(
        &["ingest", "--lexicon", s(&lex), "--out", s(dir.path()), s(&a), s(&b)],
        None,
    );
    assert_eq!(o.code, Exit::Success, "{}", o.stderr);
    let out = dir.path().to_path_buf();
    (dir, out)
}

#[test]
fn ingest_two_reports_writes_both_ids() {
    let (_dir, out) = ingested();
    let archive = std::fs::read_to_string(out.join(ARCHIVE_FILE)).unwrap();
    assert!(archive.contains("\treport_a\t") && archive.contains("\treport_b\t"));
    assert!(out.join(STORE_FILE).is_file());
}

#[test]
fn commands_are_idempotent() {
    let (_d1, a) = ingested();
    let (_d2, b) = ingested();
    for f in [ARCHIVE_FILE, STORE_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    for out in [&a, &b] {
        let o = cli(
            &["render", s(&out.join(STORE_FILE)), "--kind", "radial", "--out", s(out)],
            None,
        );
        assert_eq!(o.code, Exit::Success);
    }
    assert_eq!(
        std::fs::read(a.join("radial-monitor.svg")).unwrap(),
        std::fs::read(b.join("radial-monitor.svg")).unwrap()
    );
}

#[test]
fn ingest_without_paths_is_a_usage_error() {
    let o = cli(&["ingest", "--lexicon", s(&common::fixture("lexicon.txt"))], None);
    assert_eq!(o.code, Exit::Error);
    assert!(o.stderr.contains("Usage"));
}

#[test]
fn report_without_timestamps_aborts_ingest() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("undated.txt");
    std::fs::write(&bad, "Glucose 101 mg/dL\n").unwrap();
    let out = dir.path().join("out");
    let a = common::fixture("corpus/report_a.txt");
    let lex = common::fixture("lexicon.txt");
    let o = cli(
        &["ingest", "--lexicon", s(&lex), "--out", s(&out), s(&a), s(&bad)],
        None,
    );
    assert_eq!(o.code, Exit::Error);
    assert!(o.stderr.contains("NoTimestampInDocument"), "{}", o.stderr);
    assert!(!out.join(ARCHIVE_FILE).exists());
}

#[test]
fn render_line_on_monitor() {
    let (_dir, out) = ingested();
    let o = cli(
        &[
            "render",
            s(&out.join(ARCHIVE_FILE)),
            "--kind",
            "line",
            "--device",
            "monitor",
            "--out",
            s(&out),
        ],
        None,
    );
    assert_eq!(o.code, Exit::Success, "{}{}", o.stdout, o.stderr);
    let diag = std::fs::read_to_string(out.join("line-monitor.diagnostics.txt")).unwrap();
    assert!(diag.ends_with("verdict: pass\n"));
    roxmltree::Document::parse(&std::fs::read_to_string(out.join("line-monitor.svg")).unwrap()).unwrap();
}

#[test]
fn radial_over_two_slices_is_rejected() {
    let (_dir, out) = ingested();
    let o = cli(
        &[
            "render",
            s(&out.join(STORE_FILE)),
            "--kind",
            "radial",
            "--from",
            "2021-01-04",
            "--to",
            "2021-01-17",
            "--out",
            s(&out),
        ],
        None,
    );
    assert_eq!(o.code, Exit::Error);
    assert!(o.stderr.contains("TooFewSlices"));
}

#[test]
fn phone_text_bottoming_out_fails_the_gate() {
    let (_dir, out) = ingested();
    let conf = out.join("small-phone.conf");
    std::fs::write(&conf, "phone.width = 480\nphone.height = 360\n").unwrap();
    let o = cli(
        &[
            "render",
            s(&out.join(STORE_FILE)),
            "--device",
            "phone",
            "--config",
            s(&conf),
            "--out",
            s(&out),
        ],
        None,
    );
    assert_eq!(o.code, Exit::GateFailed, "{}{}", o.stdout, o.stderr);
    assert!(o.stdout.contains("min_text_px: 8: 10: fail"));
    assert!(o.stdout.contains("verdict: fail: unreadable text"));
    assert!(out.join("line-phone.svg").is_file());
}

#[test]
fn check_covers_every_device() {
    let (_dir, out) = ingested();
    let o = cli(&["check", s(&out.join(STORE_FILE)), "--kind", "radial-bar"], None);
    assert_eq!(o.code, Exit::Success);
    for d in ["monitor", "tablet", "phone"] {
        assert!(o.stdout.contains(&format!("device: {d}\n")));
    }
    assert_eq!(o.stdout.matches("verdict: pass").count(), 3);
}

const FEATURES: [&str; 5] = [
    "Multivariate data accommodation",
    "Higher time series graph",
    "Device transparency",
    "Implementation details",
    "Dynamic data accumulation",
];

#[test]
fn report_on_fixture_is_all_yes() {
    let (_dir, out) = ingested();
    let o = cli(&["report", s(&out.join(STORE_FILE))], None);
    assert_eq!(o.code, Exit::Success, "{}", o.stdout);
    for f in FEATURES {
        assert!(o.stdout.contains(&format!("{f}: Yes")), "{f}\n{}", o.stdout);
    }
    assert!(o.stdout.contains("  aggregator = mean"));
}

#[test]
fn single_metric_store_is_not_multivariate() {
    let dir = TempDir::new().unwrap();
    let lex = dir.path().join("lex.txt");
    std::fs::write(&lex, "Systolic BP | SBP | mmHg | 90..120\n").unwrap();
    let a = common::fixture("corpus/report_a.txt");
    let o = cli(&["ingest", "--lexicon", s(&lex), "--out", s(dir.path()), s(&a)], None);
    assert_eq!(o.code, Exit::Success);
    let o = cli(&["report", s(&dir.path().join(STORE_FILE))], None);
    assert_eq!(o.code, Exit::GateFailed);
    assert!(o.stdout.contains("Multivariate data accommodation: No"));
}

#[test]
fn corrupt_store_is_an_input_error() {
    let (_dir, out) = ingested();
    let store = out.join(STORE_FILE);
    let text = std::fs::read_to_string(&store).unwrap();
    std::fs::write(&store, &text[..text.len() / 2]).unwrap();
    let o = cli(&["report", s(&store)], None);
    assert_eq!(o.code, Exit::Error);
    assert!(o.stderr.contains("MalformedStore"), "{}", o.stderr);
}

#[test]
fn config_precedence() {
    let (_dir, out) = ingested();
    let store = out.join(STORE_FILE);
    let env_conf = out.join("env.conf");
    let flag_conf = out.join("flag.conf");
    std::fs::write(&env_conf, "aggregator = median\nnormalization = min_max\n").unwrap();
    std::fs::write(&flag_conf, "aggregator = last\n").unwrap();

    let o = cli(&["report", s(&store)], Some(&env_conf));
    assert!(o.stdout.contains("  aggregator = median") && o.stdout.contains("  normalization = min_max"));
    // --config replaces the environment file entirely.
    let o = cli(&["report", s(&store), "--config", s(&flag_conf)], Some(&env_conf));
    assert!(o.stdout.contains("  aggregator = last") && o.stdout.contains("  normalization = reference_range"));
    let o = cli(
        &["report", s(&store), "--config", s(&flag_conf), "--granularity", "month"],
        None,
    );
    assert!(o.stdout.contains("  granularity = month"));
}

#[test]
fn config_paths_resolve_relative_to_the_file() {
    let dir = TempDir::new().unwrap();
    std::fs::copy(common::fixture("lexicon.txt"), dir.path().join("lex.txt")).unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "lexicon = lex.txt\nout = build\n").unwrap();
    let a = common::fixture("corpus/report_a.txt");
    let o = cli(&["ingest", "--config", s(&conf), s(&a)], None);
    assert_eq!(o.code, Exit::Success, "{}", o.stderr);
    assert!(dir.path().join("build").join(ARCHIVE_FILE).is_file());
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "granularity = fortnight\n").unwrap();
    let o = cli(&["report", "whatever", "--config", s(&conf)], None);
    assert_eq!(o.code, Exit::Error);
    assert!(o.stderr.contains("bad.conf:1"));
}

#[test]
fn binary_exit_codes_and_env_fallback() {
    let bin = env!("CARGO_BIN_EXE_chronofuse");
    let (_dir, out) = ingested();
    let store = out.join(STORE_FILE);
    let status = |cmd: &mut Command| cmd.output().unwrap().status.code();
    assert_eq!(status(Command::new(bin).args(["report", s(&store)])), Some(0));
    assert_eq!(status(Command::new(bin).arg("ingest")), Some(2));
    assert_eq!(status(Command::new(bin).arg("frobnicate")), Some(2));
    assert_eq!(
        status(Command::new(bin).args(["report", "/nonexistent/store"])),
        Some(2)
    );
    let conf = out.join("tiny.conf");
    std::fs::write(&conf, "phone.width = 480\nphone.height = 360\n").unwrap();
    let mut gated = Command::new(bin);
    gated
        .args(["render", s(&store), "--device", "phone", "--out", s(&out)])
        .env("CHRONOFUSE_CONFIG", &conf);
    assert_eq!(status(&mut gated), Some(1));
}
