mod common;

use std::fs;

use common::{coimg, error_report, stdout, write_corpus};

#[test]
fn empty_root_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = coimg(["scan".as_ref(), dir.path().as_os_str(), "--out".as_ref(), dir.path().join("m.json").as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    let report = error_report(&out);
    assert_eq!(report["error"], "EmptyDataset");
    assert_eq!(report["exit_code"], 2);
}

#[test]
fn missing_root_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = coimg(["plan".as_ref(), "--input".as_ref(), missing.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["error"], "NotADirectory");
}

#[test]
fn k_above_smallest_class_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("a", 2), ("b", 5)], 8, 8);
    let out = coimg(["plan".as_ref(), "--input".as_ref(), dir.path().as_os_str(), "--seed".as_ref(), "1".as_ref()]);
    assert_eq!(out.status.code(), Some(2));
    let report = error_report(&out);
    assert_eq!(report["error"], "DegenerateClass");
    assert!(report["message"].as_str().unwrap().contains('a'));
}

#[test]
fn single_slot_target_is_smallest_class() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("a", 4), ("b", 7), ("c", 5)], 8, 8);
    let out = coimg([
        "plan".as_ref(),
        "--input".as_ref(),
        dir.path().as_os_str(),
        "--rows".as_ref(),
        "1".as_ref(),
        "--seed".as_ref(),
        "3".as_ref(),
        "--explain".as_ref(),
    ]);
    assert!(out.status.success(), "{}", common::stderr(&out));
    assert!(stdout(&out).contains("T = 4 (k = 1"), "{}", stdout(&out));
    assert!(stdout(&out).contains("balanced total = 12"));
}

#[test]
fn bad_policy_and_missing_seed_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("a", 4)], 8, 8);
    let root = dir.path().as_os_str();
    let out = coimg(["plan".as_ref(), "--input".as_ref(), root, "--seed".as_ref(), "1".as_ref(), "--policy".as_ref(), "nearest".as_ref()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["error"], "InvalidPolicy");

    let out = coimg(["plan".as_ref(), "--input".as_ref(), root]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["error"], "InvalidConfig");
}

#[test]
fn stats_prints_exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_corpus(&src, &[("a", 22), ("b", 6)], 8, 8);
    let m = dir.path().join("m.json");
    assert!(coimg(["scan".as_ref(), src.as_os_str(), "--out".as_ref(), m.as_os_str()]).status.success());
    let out = coimg(["stats".as_ref(), "--manifest".as_ref(), m.as_os_str()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains(" 1540 "), "{text}");
    assert!(text.contains(" 20 "), "{text}");
}

#[test]
fn verify_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_corpus(&src, &[("a", 5), ("b", 4)], 8, 8);
    let (m, plan, out_dir) = (dir.path().join("m.json"), dir.path().join("plan.json"), dir.path().join("out"));
    assert!(coimg(["scan".as_ref(), src.as_os_str(), "--out".as_ref(), m.as_os_str()]).status.success());
    let planned = coimg([
        "plan".as_ref(),
        "--manifest".as_ref(),
        m.as_os_str(),
        "--seed".as_ref(),
        "9".as_ref(),
        "--cell-width".as_ref(),
        "16".as_ref(),
        "--cell-height".as_ref(),
        "16".as_ref(),
        "--out".as_ref(),
        plan.as_os_str(),
    ]);
    assert!(planned.status.success(), "{}", common::stderr(&planned));
    let generated = coimg([
        "generate".as_ref(),
        "--plan".as_ref(),
        plan.as_os_str(),
        "--manifest".as_ref(),
        m.as_os_str(),
        "--output".as_ref(),
        out_dir.as_os_str(),
        "--workers".as_ref(),
        "2".as_ref(),
    ]);
    assert!(generated.status.success(), "{}", common::stderr(&generated));

    let ok = coimg(["verify".as_ref(), out_dir.as_os_str()]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("PASS digest-spot-check"));

    let victim = fs::read_dir(out_dir.join("a")).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(victim).unwrap();
    let bad = coimg(["verify".as_ref(), out_dir.as_os_str()]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(stdout(&bad).contains("FAIL files-present"));
    let report = error_report(&bad);
    assert_eq!(report["error"], "VerificationFailed");
    assert!(!report["details"].as_array().unwrap().is_empty());
}

#[test]
fn generate_without_output_root_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("a", 4)], 8, 8);
    let plan = dir.path().join("plan.json");
    let planned = coimg(["plan".as_ref(), "--input".as_ref(), dir.path().as_os_str(), "--seed".as_ref(), "1".as_ref(), "--out".as_ref(), plan.as_os_str()]);
    assert!(planned.status.success());
    let out = coimg(["generate".as_ref(), "--plan".as_ref(), plan.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out)["error"], "InvalidConfig");
}
