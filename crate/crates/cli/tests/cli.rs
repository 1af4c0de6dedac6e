use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chanspec"));
    c.env_remove("FORENSICS_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn chanspec")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pngs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    v.sort();
    v
}

/// synth + extract into `dir`, returning the feature CSV path.
fn corpus(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    let csv = dir.join(format!("{name}.csv"));
    ok(&[
        "extract",
        "--manifest",
        s(&out.join("manifest.jsonl")),
        "--out",
        s(&csv),
    ]);
    csv
}

fn accuracy(metrics: &Path) -> f64 {
    let v: Value = serde_json::from_str(&fs::read_to_string(metrics).unwrap()).unwrap();
    v["accuracy"].as_f64().unwrap()
}

#[test]
fn synth_counts_and_repeatability() {
    let t = TempDir::new().unwrap();
    let a = t.path().join("a");
    ok(&[
        "synth",
        "--count",
        "100",
        "--size",
        "64",
        "--seed",
        "7",
        "--out",
        s(&a),
    ]);
    assert_eq!(pngs(&a).len(), 200);
    assert_eq!(
        fs::read_to_string(a.join("manifest.jsonl"))
            .unwrap()
            .lines()
            .count(),
        200
    );

    let b = t.path().join("b");
    ok(&[
        "synth",
        "--count",
        "100",
        "--size",
        "64",
        "--seed",
        "7",
        "--out",
        s(&b),
    ]);
    for (x, y) in pngs(&a).iter().zip(pngs(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(&y).unwrap());
    }
    assert_eq!(
        fs::read(a.join("manifest.jsonl")).unwrap(),
        fs::read(b.join("manifest.jsonl")).unwrap()
    );

    let c = t.path().join("c");
    ok(&[
        "synth",
        "--fake-fraction",
        "0.05",
        "--count",
        "100",
        "--size",
        "16",
        "--out",
        s(&c),
    ]);
    let names = pngs(&c);
    assert_eq!(names.iter().filter(|p| s(p).contains("real_")).count(), 100);
    assert_eq!(names.iter().filter(|p| s(p).contains("fake_")).count(), 5);
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&[
        "synth",
        "--count",
        "2",
        "--size",
        "16",
        "--seed",
        "42",
        "--out",
        s(&a),
    ]);
    let out = bin()
        .args(["synth", "--count", "2", "--size", "16", "--out", s(&b)])
        .env("FORENSICS_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    for (x, y) in pngs(&a).iter().zip(pngs(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(&y).unwrap());
    }
}

#[test]
fn extract_rows_parallel_identity_and_permissive() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    ok(&[
        "synth",
        "--count",
        "2",
        "--fake-fraction",
        "0.34",
        "--size",
        "16",
        "--out",
        s(&d),
    ]);
    let manifest = d.join("manifest.jsonl");
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 3);

    let one = t.path().join("one.csv");
    let eight = t.path().join("eight.csv");
    ok(&[
        "extract",
        "--manifest",
        s(&manifest),
        "--out",
        s(&one),
        "--jobs",
        "1",
    ]);
    ok(&[
        "extract",
        "--manifest",
        s(&manifest),
        "--out",
        s(&eight),
        "--jobs",
        "8",
    ]);
    let text = fs::read_to_string(&one).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("path,label,mean,max,min,icorr_rg,icorr_rb,icorr_gb\n"));
    assert_eq!(fs::read(&one).unwrap(), fs::read(&eight).unwrap());

    fs::remove_file(d.join("real_00001.png")).unwrap();
    let strict = run(&["extract", "--manifest", s(&manifest), "--out", s(&one)]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("real_00001.png"));

    let lenient = ok(&[
        "extract",
        "--manifest",
        s(&manifest),
        "--out",
        s(&one),
        "--permissive",
    ]);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning: skipped real_00001.png"));
    assert_eq!(fs::read_to_string(&one).unwrap().lines().count(), 3);
}

#[test]
fn train_eval_held_out() {
    let t = TempDir::new().unwrap();
    let train = corpus(t.path(), "train", &["--count", "100", "--seed", "1"]);
    let test = corpus(t.path(), "test", &["--count", "100", "--seed", "2"]);
    let (svm, gmm) = (t.path().join("svm.json"), t.path().join("gmm.json"));
    ok(&["train", "svm", "--features", s(&train), "--out", s(&svm)]);
    ok(&["train", "gmm", "--features", s(&train), "--out", s(&gmm)]);

    let doc: Value = serde_json::from_str(&fs::read_to_string(&svm).unwrap()).unwrap();
    assert_eq!(doc["kind"], "svm");
    assert_eq!(doc["provenance"]["config"]["c"], 1.0);
    assert_eq!(
        doc["provenance"]["input_digest"].as_str().unwrap().len(),
        64
    );
    let doc: Value = serde_json::from_str(&fs::read_to_string(&gmm).unwrap()).unwrap();
    assert_eq!(doc["kind"], "gmm");

    let m = t.path().join("m.json");
    let preds = t.path().join("p.csv");
    ok(&[
        "eval",
        "--model",
        s(&svm),
        "--features",
        s(&test),
        "--out",
        s(&m),
        "--predictions",
        s(&preds),
    ]);
    assert!(accuracy(&m) >= 0.95);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 201);
    ok(&[
        "eval",
        "--model",
        s(&gmm),
        "--features",
        s(&test),
        "--out",
        s(&m),
    ]);
    assert!(accuracy(&m) >= 0.85);

    // in-sample sanity
    let stdout = ok(&["eval", "--model", s(&gmm), "--features", s(&train)]).stdout;
    let v: Value = serde_json::from_slice(&stdout).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() >= 0.5);
    let c = &v["counts"];
    let n: u64 = ["tp", "fp", "tn", "fn"]
        .iter()
        .map(|k| c[k].as_u64().unwrap())
        .sum();
    assert_eq!(n, 200);
    assert_eq!(v["positive_class"], "fake");
}

#[test]
fn training_is_repeatable() {
    let t = TempDir::new().unwrap();
    let f = corpus(t.path(), "c", &["--count", "30", "--size", "32"]);
    for kind in ["svm", "gmm"] {
        let (a, b) = (t.path().join("a.json"), t.path().join("b.json"));
        ok(&[
            "train",
            kind,
            "--features",
            s(&f),
            "--out",
            s(&a),
            "--seed",
            "3",
        ]);
        ok(&[
            "train",
            kind,
            "--features",
            s(&f),
            "--out",
            s(&b),
            "--seed",
            "3",
        ]);
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{kind}");
    }
}

#[test]
fn single_class_svm_names_missing_class() {
    let t = TempDir::new().unwrap();
    let f = corpus(
        t.path(),
        "c",
        &["--count", "10", "--size", "16", "--fake-fraction", "0"],
    );
    let out = run(&[
        "train",
        "svm",
        "--features",
        s(&f),
        "--out",
        s(&t.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no fake samples"));
}

#[test]
fn hand_built_single_sv_model() {
    let t = TempDir::new().unwrap();
    let model = t.path().join("m.json");
    fs::write(
        &model,
        r#"{"format_version":1,"kind":"svm","gamma":0.5,"c":1.0,"bias":-0.25,
            "scaling":{"shift":[1,0,0,0,0,0],"scale":[2,1,1,1,1,1]},
            "support_vectors":[[0,0,0,0,0,0]],"dual_coefs":[1.0]}"#,
    )
    .unwrap();
    let xs: [[f64; 6]; 3] = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [9.0; 6],
    ];
    let mut csv = String::from("path,label,mean,max,min,icorr_rg,icorr_rb,icorr_gb\n");
    for (i, x) in xs.iter().enumerate() {
        let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("x{i},0,{}\n", cells.join(",")));
    }
    let feats = t.path().join("f.csv");
    fs::write(&feats, csv).unwrap();
    let preds = t.path().join("p.csv");
    ok(&[
        "eval",
        "--model",
        s(&model),
        "--features",
        s(&feats),
        "--predictions",
        s(&preds),
    ]);

    let text = fs::read_to_string(&preds).unwrap();
    for (x, line) in xs.iter().zip(text.lines().skip(1)) {
        let z0 = (x[0] - 1.0) / 2.0;
        let d2 = z0 * z0 + x[1..].iter().map(|v| v * v).sum::<f64>();
        let expected = (-0.5 * d2).exp() - 0.25;
        let cols: Vec<&str> = line.split(',').collect();
        let got: f64 = cols[2].parse().unwrap();
        assert!((got - expected).abs() < 1e-15, "{line}");
        assert_eq!(cols[1], if expected > 0.0 { "1" } else { "0" });
    }
}

#[test]
fn empty_and_unlabeled_inputs_fail_with_code_2() {
    let t = TempDir::new().unwrap();
    let empty = t.path().join("e.csv");
    fs::write(
        &empty,
        "path,label,mean,max,min,icorr_rg,icorr_rb,icorr_gb\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "gmm",
        "--features",
        s(&empty),
        "--out",
        s(&t.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rows"));

    let model = t.path().join("g.json");
    fs::write(
        &model,
        r#"{"format_version":1,"kind":"gmm","dim":6,"weights":[0.5,0.5],
            "means":[[0,0,0,0,0,0],[1,1,1,1,1,1]],"variances":[[1,1,1,1,1,1],[1,1,1,1,1,1]],
            "real_component":0}"#,
    )
    .unwrap();
    let unlabeled = t.path().join("u.csv");
    fs::write(
        &unlabeled,
        "path,label,mean,max,min,icorr_rg,icorr_rb,icorr_gb\na,,1,1,1,0,0,0\n",
    )
    .unwrap();
    let out = run(&["eval", "--model", s(&model), "--features", s(&unlabeled)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("labeled"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(
        run(&["train", "svm", "--features", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["synth", "--count", "0", "--out", "/tmp/unused"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&[
            "train",
            "svm",
            "--features",
            "x",
            "--out",
            "y",
            "--gamma",
            "-2"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn adapt_self_and_external_tables() {
    let t = TempDir::new().unwrap();
    let f = corpus(
        t.path(),
        "c",
        &["--count", "80", "--size", "32", "--seed", "5"],
    );
    let svm = t.path().join("svm.json");
    let m_eval = t.path().join("eval.json");
    ok(&["train", "svm", "--features", s(&f), "--out", s(&svm)]);
    ok(&[
        "eval",
        "--model",
        s(&svm),
        "--features",
        s(&f),
        "--out",
        s(&m_eval),
    ]);

    let preds = t.path().join("p.csv");
    let m_adapt = t.path().join("adapt.json");
    let exp = t.path().join("exp");
    ok(&[
        "adapt",
        "--source",
        s(&f),
        "--target",
        s(&f),
        "--out",
        s(&preds),
        "--metrics",
        s(&m_adapt),
        "--expectations-out",
        s(&exp),
    ]);
    assert!((accuracy(&m_adapt) - accuracy(&m_eval)).abs() <= 0.02);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 161);

    // feeding the written tables back verbatim reproduces the predictions
    let again = t.path().join("q.csv");
    ok(&[
        "adapt",
        "--source",
        s(&f),
        "--target",
        s(&f),
        "--out",
        s(&again),
        "--source-expectations",
        s(&exp.join("source_expectations.json")),
        "--expectations",
        s(&exp.join("target_expectations.json")),
    ]);
    assert_eq!(fs::read(&preds).unwrap(), fs::read(&again).unwrap());

    let table = exp.join("target_expectations.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&table).unwrap()).unwrap();
    v["features"][4]["m1"] = v["features"][4]["m0"].clone();
    let bad = t.path().join("bad.json");
    fs::write(&bad, v.to_string()).unwrap();
    let out = run(&[
        "adapt",
        "--source",
        s(&f),
        "--target",
        s(&f),
        "--out",
        s(&preds),
        "--expectations",
        s(&bad),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feature icorr_rb"));
}

#[test]
fn spectrum_dump_and_histogram() {
    let t = TempDir::new().unwrap();
    let f = corpus(t.path(), "c", &["--count", "20", "--size", "16"]);
    let spectra = t.path().join("spectra");
    ok(&[
        "spectrum-dump",
        "--image",
        s(&t.path().join("c/real_00000.png")),
        "--out",
        s(&spectra),
    ]);
    for ch in ["r", "g", "b"] {
        let text = fs::read_to_string(spectra.join(format!("spectrum_{ch}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 16);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 16);
    }

    let h = t.path().join("h.csv");
    ok(&[
        "histogram",
        "--features",
        s(&f),
        "--feature",
        "mean",
        "--bins",
        "7",
        "--label",
        "fake",
        "--out",
        s(&h),
    ]);
    let text = fs::read_to_string(&h).unwrap();
    assert!(text.starts_with("bin_left,bin_right,count\n"));
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 20);
    assert_eq!(
        run(&[
            "histogram",
            "--features",
            s(&f),
            "--feature",
            "nope",
            "--out",
            s(&h)
        ])
        .status
        .code(),
        Some(1)
    );
}
