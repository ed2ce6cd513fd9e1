use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("mshift-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn path(&self, name: &str) -> String {
        self.0.join(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn mshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mshift")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn gen(dir: &Scratch, name: &str, args: &[&str]) -> String {
    let p = dir.path(name);
    let mut full = vec!["gen-example"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--output", &p]);
    let out = mshift(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&p).exists());
    p
}

#[test]
fn validate_example33() {
    let dir = Scratch::new("validate");
    let fam = gen(&dir, "ex.json", &["example33", "--d", "2", "--degree-cap", "6"]);
    let out = mshift(&["validate", &fam, "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["commuting"]["commuting"], Value::Bool(true));
    assert_eq!(v["invertible"]["invertible"], Value::Bool(true));
    assert_eq!(v["normal"], serde_json::json!([false, false]));
}

#[test]
fn malformed_input_exits_two_with_path() {
    let dir = Scratch::new("bad");
    let bad = dir.write("bad.json", r#"{"d": 1, "degree_cap": 1, "fiber_dims": {"default": 1}, "weights": [{"j": 1, "alpha": [0], "matrix": "x"}]}"#);
    let out = mshift(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("weights[0].matrix"), "{err}");
    assert!(err.contains("schema"), "{err}");
}

#[test]
fn missing_weight_names_the_position() {
    let dir = Scratch::new("missing");
    let text = r#"{"d": 2, "degree_cap": 1, "fiber_dims": {"default": 1},
        "weights": [{"j": 1, "alpha": [0, 0], "matrix": [[[1.0, 0.0]]]}]}"#;
    let p = dir.write("m.json", text);
    let out = mshift(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("j=2"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mshift(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mshift(&["moments"]).status.code(), Some(2));
}

#[test]
fn strict_mode_fails_on_a_failing_verdict() {
    let dir = Scratch::new("strict");
    let fam = gen(&dir, "d.json", &["diag", "--d", "1", "--degree-cap", "25"]);
    let lenient = mshift(&["bpe", &fam, "--w", "1"]);
    assert_eq!(lenient.status.code(), Some(0));
    let v = json_of(&lenient);
    assert_eq!(v["bpe"]["classification"], "not_bpe");
    assert_eq!(v["point_spectrum"]["classification"], "in_point_spectrum");
    assert_eq!(mshift(&["bpe", &fam, "--w", "1", "--strict"]).status.code(), Some(1));
}

#[test]
fn moments_report() {
    let dir = Scratch::new("moments");
    let fam = gen(&dir, "d.json", &["diag", "--d", "2", "--degree-cap", "4"]);
    let out = mshift(&["moments", &fam, "--alpha", "2,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let b00 = v["B"][0][0][0].as_f64().unwrap();
    assert!((b00 - 8.0).abs() < 1e-12);
    assert_eq!(mshift(&["moments", &fam, "--alpha", "1,0", "--beta", "0,1"]).status.code(), Some(2));
}

#[test]
fn props_report() {
    let dir = Scratch::new("props");
    let fam = gen(&dir, "ex.json", &["example33", "--degree-cap", "4"]);
    let out = mshift(&["props", &fam, "--samples", "10", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!(v["circular_residual_max"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["wandering_dim"], v["D"]);
}

#[test]
fn kernel_report() {
    let dir = Scratch::new("kernel");
    let fam = gen(&dir, "c.json", &["classical", "--d", "1", "--degree-cap", "40"]);
    let out = mshift(&["kernel", &fam, "--z", "0.5", "--w", "0.5"]);
    let v = json_of(&out);
    let k = v["value"][0][0][0].as_f64().unwrap();
    assert!((k - 4.0 / 3.0).abs() < 1e-10);
}

#[test]
fn grid_csv() {
    let dir = Scratch::new("grid");
    let fam = gen(&dir, "d.json", &["diag", "--d", "1", "--a", "0.5", "--b", "2", "--degree-cap", "30"]);
    let out = mshift(&["bpe", &fam, "--grid-steps", "8", "--grid-max", "1.6", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("w_1_re,w_1_im,classification,S_last,ratio_estimate"));
}

#[test]
fn equivalence_of_a_family_with_itself() {
    let dir = Scratch::new("equiv");
    let a = gen(&dir, "a.json", &["remark34", "--degree-cap", "3"]);
    let b = gen(&dir, "b.json", &["remark34", "--convention", "model", "--degree-cap", "3"]);
    let out = mshift(&["equiv", "--a", &a, "--b", &a, "--verify-intertwine", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["status"], "equivalent");
    let out = mshift(&["equiv", "--a", &a, "--b", &b]);
    assert_eq!(json_of(&out)["status"], "not_equivalent");
}

#[test]
fn embed_and_decompose() {
    let dir = Scratch::new("trees");
    let trees = dir.write(
        "t.json",
        r#"{"degree_cap": 2, "trees": [{"parent": [null, 0, 0, 1, 2]}, {"parent": [null, 0, 1]}]}"#,
    );
    let out = mshift(&["embed-tree", &trees, "--strict"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["commuting"]["commuting"], Value::Bool(true));

    let single = dir.write("s.json", r#"{"degree_cap": 2, "trees": [{"parent": [null, 0, 0, 1, 2]}]}"#);
    let fam = dir.path("f.json");
    let out = mshift(&["embed-tree", &single]);
    let family = json_of(&out)["family"].to_string();
    std::fs::write(&fam, family).unwrap();
    let one = "[[1.0, 0.0]]";
    let eye2 = "[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]";
    let bases = dir.write(
        "b.json",
        &format!(r#"{{"bases": [[{one}], {eye2}, {eye2}], "partition": [[[0, 1]], [[0], [1]]]}}"#),
    );
    let out = mshift(&["decompose-shift", &fam, &bases, "--strict"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["status"], "forest");
    assert!(v["round_trip_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn output_is_deterministic() {
    let dir = Scratch::new("det");
    let fam = gen(&dir, "ex.json", &["example33", "--degree-cap", "4"]);
    let a = mshift(&["props", &fam, "--seed", "11"]);
    let b = mshift(&["props", &fam, "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
}
