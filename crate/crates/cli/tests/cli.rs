use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn viewcount(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewcount"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn synth_counts_and_repeats_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&viewcount(d, &["synth", "--mix", "all:3", "--seed", "7", "-o", "a"]));
    ok(&viewcount(d, &["synth", "--mix", "all:3", "--seed", "7", "-o", "b"]));
    assert_eq!(lines(&d.join("a/labels.csv")).len(), 1 + 21);
    for f in ["series.csv", "series.meta.csv", "labels.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["records"], 21);
}

#[test]
fn fit_single_and_all_models() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&viewcount(d, &["synth", "--mix", "gompertz:2", "--noise", "0", "-o", "c"]));
    ok(&viewcount(d, &["fit", "c/series.csv", "--model", "gompertz", "--curves", "-o", "one"]));
    let fits: serde_json::Value = serde_json::from_slice(&fs::read(d.join("one/fits.json")).unwrap()).unwrap();
    let labels = lines(&d.join("c/labels.csv"));
    for (entry, label) in fits.as_array().unwrap().iter().zip(&labels[1..]) {
        let f = &entry["fits"][0];
        assert_eq!(f["kind"], "gompertz");
        assert!(f["mer"].as_f64().unwrap() < 1e-8);
        let lambda: f64 = label.split(',').nth(4).unwrap().parse().unwrap();
        let fitted = f["params"]["lambda"].as_f64().unwrap();
        assert!((fitted - lambda).abs() / lambda < 1e-6, "{fitted} vs {lambda}");
    }
    assert_eq!(lines(&d.join("one/curves.csv"))[0], "id,model,t,observed,fitted");

    ok(&viewcount(d, &["fit", "c/series.csv", "--model", "all", "-o", "all"]));
    let fits: serde_json::Value = serde_json::from_slice(&fs::read(d.join("all/fits.json")).unwrap()).unwrap();
    for entry in fits.as_array().unwrap() {
        assert_eq!(entry["fits"].as_array().unwrap().len(), 7);
    }
}

#[test]
fn unreadable_input_is_fatal_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = viewcount(d, &["fit", "missing.csv", "-o", "never"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("never").exists());
    fs::write(d.join("empty.csv"), "").unwrap();
    let out = viewcount(d, &["classify", "empty.csv", "-o", "never"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("never").exists());
}

#[test]
fn partial_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut csv = String::from("id,t,y\n");
    for i in 1..=20 {
        csv.push_str(&format!("good,{i},{}\n", 100 * i));
    }
    csv.push_str("bad,1,10\nbad,2,5\nbad,3,20\n");
    fs::write(d.join("mixed.csv"), csv).unwrap();
    let out = viewcount(d, &["classify", "mixed.csv", "-o", "cls"]);
    assert_eq!(out.status.code(), Some(1));
    let rejected = lines(&d.join("cls/rejected.csv"));
    assert!(rejected[1].starts_with("bad,NON_MONOTONE"));
    assert_eq!(lines(&d.join("cls/classification.csv")).len(), 2);
}

#[test]
fn classify_reports_accuracy_and_popularity_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&viewcount(d, &["synth", "--mix", "all:2", "--noise", "0", "-o", "c"]));
    let stdout = ok(&viewcount(d, &[
        "classify", "c/series.csv", "--labels", "c/labels.csv", "--group-by", "popularity", "-o", "cls",
    ]));
    assert!(stdout.contains("accuracy: 14/14 (100.00%)"), "{stdout}");
    let table = lines(&d.join("cls/distribution.csv"));
    assert!(table[0].starts_with("model,"));
    let classes = ["EUP", "VUP", "UP", "NSP", "P", "VP", "EP"];
    assert!(table[0].split(',').skip(1).all(|c| classes.contains(&c)));
    assert_eq!(table.len(), 1 + 8 + 1);

    ok(&viewcount(d, &["report", "cls/classification.json", "--group-by", "popularity", "-o", "rep"]));
    assert_eq!(
        fs::read(d.join("rep/distribution.csv")).unwrap(),
        fs::read(d.join("cls/distribution.csv")).unwrap()
    );
}

#[test]
fn predict_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&viewcount(d, &["synth", "--mix", "all:2", "--noise", "0", "-o", "c"]));
    let stdout = ok(&viewcount(d, &["predict", "c/series.csv", "--scenario", "halflife", "-o", "h"]));
    assert!(stdout.contains("all: n=14 hard 1.0000 (100.0% bounded) soft 1.0000 (100.0% bounded)"), "{stdout}");

    ok(&viewcount(d, &["synth", "--mix", "all:2", "--noise", "0.02", "-o", "n"]));
    ok(&viewcount(d, &["predict", "n/series.csv", "--scenario", "window7", "-o", "w"]));
    assert_eq!(
        lines(&d.join("w/aggregate.csv"))[0],
        "model,count,distribution_pct,hard_mean,hard_variance,hard_bounded_pct,soft_mean,soft_variance,soft_bounded_pct"
    );
    ok(&viewcount(d, &["predict", "n/series.csv", "--scenario", "window7", "--window-mode", "soft", "-o", "s"]));
    assert_eq!(
        lines(&d.join("s/aggregate.csv"))[0],
        "model,count,distribution_pct,soft_mean,soft_variance,soft_bounded_pct"
    );

    ok(&viewcount(d, &["synth", "--mix", "all:1", "--age", "30", "--n", "30", "-o", "young"]));
    let mut csv = fs::read_to_string(d.join("young/series.csv")).unwrap();
    csv.push_str(&fs::read_to_string(d.join("c/series.csv")).unwrap().replace("syn-", "old-").replacen("id,t,y\n", "", 1));
    fs::write(d.join("both.csv"), csv).unwrap();
    let out = viewcount(d, &["predict", "both.csv", "--scenario", "fixed50", "-o", "f"]);
    assert_eq!(out.status.code(), Some(1));
    let skipped = lines(&d.join("f/skipped.csv"));
    assert_eq!(skipped.len(), 1 + 7);
    assert!(skipped[1..].iter().all(|l| l.starts_with("syn-") && l.contains("TOO_YOUNG")));
}

#[test]
fn config_file_and_flags_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&viewcount(d, &["synth", "--mix", "negexp:2", "-o", "c"]));
    fs::write(
        d.join("cfg.json"),
        r#"{"classify": {"criteria": {"mer_threshold": 0.1}, "lm": {"multistart": 2}}}"#,
    )
    .unwrap();
    ok(&viewcount(d, &["--config", "cfg.json", "--seed", "9", "classify", "c/series.csv", "--multistart", "3", "-o", "cls"]));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("cls/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["criteria"]["mer_threshold"], 0.1);
    assert_eq!(manifest["config"]["lm"]["multistart"], 3);
    assert_eq!(manifest["seed"], 9);
    let bad = viewcount(d, &["classify", "c/series.csv", "--multistart", "0", "-o", "x"]);
    assert_eq!(bad.status.code(), Some(2));
}
