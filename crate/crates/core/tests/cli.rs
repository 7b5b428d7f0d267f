mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TRAIN_CONFIG: &str = r#"{
  "epochs": [{"class": "disc"}, {"class": "face"}],
  "data": {"seed": 17, "hard_negatives": {"face": ["cart"]}}
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classigraph")).args(args).env_remove("CLASSIGRAPH_WORKERS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn train(dir: &Path, name: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{name}.config.json"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let manifest = common::manifest();
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--data", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin(&args)
}

fn test_image() -> String {
    common::corpus().join("test/00000.ppm").to_str().unwrap().to_string()
}

#[test]
fn train_detect_map_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), "m.json", TRAIN_CONFIG, &["--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let model = dir.path().join("m.json");
    assert!(dir.path().join("m.json.report.csv").exists());
    assert!(fs::read_to_string(dir.path().join("m.json.trace.jsonl")).unwrap().lines().count() >= 2);

    let m = model.to_str().unwrap();
    let d = bin(&["detect", "--model", m, "--image", &test_image(), "--class", "face"]);
    assert_eq!(d.status.code(), Some(0));
    let rows: Vec<String> = stdout(&d).lines().map(String::from).collect();
    assert_eq!(rows[0], "class,concept,epoch,score");
    assert!(rows.len() >= 2);
    let score: f64 = rows[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&score));

    let heat = dir.path().join("heat");
    let mp = bin(&["map", "--model", m, "--image", &test_image(), "--concept", "0", "--scale", "0.3", "--out", heat.to_str().unwrap()]);
    assert_eq!(mp.status.code(), Some(0), "{}", String::from_utf8_lossy(&mp.stderr));
    let pgm = classigraph::image::Image::read(&dir.path().join("heat.pgm")).unwrap();
    let csv = fs::read_to_string(dir.path().join("heat.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + pgm.width() * pgm.height());

    let i = bin(&["inspect", "--model", m]);
    assert_eq!(i.status.code(), Some(0));
    let text = stdout(&i);
    assert!(text.starts_with("scope,key,value\n"));
    assert!(text.contains("class:face,classifiers,"));
    assert!(text.contains("training,seed,7"));
}

#[test]
fn zero_epoch_model_has_no_concepts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(train(dir.path(), "z.json", r#"{"epochs": []}"#, &[]).status.code(), Some(0));
    let i = bin(&["inspect", "--model", dir.path().join("z.json").to_str().unwrap()]);
    assert!(stdout(&i).lines().any(|l| l == "graph,concepts,0"));
}

#[test]
fn same_seed_gives_bytewise_identical_models_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a.json", TRAIN_CONFIG, &["--seed", "7", "--workers", "1"]);
    let b = train(dir.path(), "b.json", TRAIN_CONFIG, &["--seed", "7", "--workers", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let (ma, mb) = (fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
    assert!(ma == mb, "models differ between 1 and 4 workers");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["detect", "--model", "x"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["selftest", "--workers", "0"]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(bin(&["inspect", "--model", missing.to_str().unwrap()]).status.code(), Some(3));
    let bad_cfg = train(dir.path(), "x.json", "{ nope", &[]);
    assert_eq!(bad_cfg.status.code(), Some(2));

    assert_eq!(train(dir.path(), "z.json", r#"{"epochs": []}"#, &[]).status.code(), Some(0));
    let z = dir.path().join("z.json");
    let no_class = bin(&["detect", "--model", z.to_str().unwrap(), "--image", &test_image(), "--class", "face"]);
    assert_eq!(no_class.status.code(), Some(3));

    let text = fs::read_to_string(&z).unwrap().replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    fs::write(dir.path().join("v2.json"), text).unwrap();
    assert_eq!(bin(&["inspect", "--model", dir.path().join("v2.json").to_str().unwrap()]).status.code(), Some(3));

    // a concept whose weight is NaN fails validation on load
    assert_eq!(train(dir.path(), "d.json", r#"{"epochs": [{"class": "disc"}]}"#, &[]).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("d.json")).unwrap();
    let at = text.find("\"bias\": \"").unwrap() + "\"bias\": \"".len();
    let end = at + text[at..].find('"').unwrap();
    fs::write(dir.path().join("nan.json"), format!("{}NaN{}", &text[..at], &text[end..])).unwrap();
    let nan = bin(&["inspect", "--model", dir.path().join("nan.json").to_str().unwrap()]);
    assert_eq!(nan.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&nan.stderr).contains("invariant"));
}

#[test]
fn synth_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    fs::write(&cfg, r#"{"splits": [{"name": "train", "face": 3, "cart": 2, "distractor": 1}], "probe": false}"#).unwrap();
    let out = dir.path().join("corpus");
    let s = bin(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(stdout(&s).lines().any(|l| l == "train,face,3"));
    assert!(out.join("manifest.jsonl").exists());

    let t = bin(&["selftest"]);
    assert_eq!(t.status.code(), Some(0));
    let lines: Vec<_> = stdout(&t).lines().map(String::from).collect();
    assert!(lines.len() >= 7 && lines.iter().all(|l| l.starts_with("PASS")));
}
