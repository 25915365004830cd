use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/testdata")
        .join(name)
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn idxcost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idxcost"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn labelled_factorial_trace() {
    let src = testdata("corpus/factorial_sum.imp");
    let labelled = idxcost(&["label", path(&src)]);
    assert!(labelled.status.success());
    let file = scratch("factorial_labelled.imp", &stdout(&labelled));
    let out = idxcost(&["run", path(&file), "--store", "n=3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let trace: Vec<&str> = text
        .lines()
        .take_while(|l| !l.starts_with("store:"))
        .collect();
    assert_eq!(
        trace.join(" "),
        "_L0<> _a1<0> _b2<0> _a1<1> _a2<1,0> _b2<1> _a1<2> _a2<2,0> _a2<2,1> _b2<2> _b1<>"
    );
    assert!(text.contains("store: i=3,j=3,n=3,p=2,s=4"));
}

#[test]
fn plain_labelling() {
    let out = idxcost(&[
        "label",
        "--plain",
        path(&testdata("corpus/factorial_sum.imp")),
    ]);
    let text = stdout(&out);
    assert!(text.contains("_a2<>: {"));
    assert!(!text.contains("@i0"));
}

#[test]
fn symbolic_annotation_of_gamma() {
    let out = idxcost(&[
        "annotate",
        path(&testdata("corpus/factorial_sum.imp")),
        "--script",
        path(&testdata("reshape.script")),
        "--symbolic",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let gamma = text.lines().find(|l| l.starts_with("_a2 = ")).unwrap();
    assert_eq!(
        gamma,
        "_a2 = (i0 == 0) ? a : ((i0 % 2 == 1) ? ((i1 == 0) ? b : ((i1 == 1) ? c : ((i1 % 2 == 0) ? d : e))) : \
         ((i1 % 2 == 0) ? f : g))"
    );
}

#[test]
fn transform_matches_golden_listing() {
    let out = idxcost(&[
        "transform",
        path(&testdata("corpus/factorial_sum.imp")),
        "--script",
        path(&testdata("reshape.script")),
    ]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        std::fs::read_to_string(testdata("reshaped.imp")).unwrap()
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-overlap: ok"));
}

#[test]
fn loop_listing() {
    let out = idxcost(&[
        "transform",
        path(&testdata("corpus/factorial_sum.imp")),
        "--list-loops",
    ]);
    assert_eq!(
        stdout(&out),
        "labelBody/seqR/seqR/seqL i0\nlabelBody/seqR/seqR/seqL/whileBody/labelBody/seqR/seqR/seqL i1\n"
    );
}

#[test]
fn annotated_cost_matches_compiled_cost() {
    let src = testdata("corpus/factorial_sum.imp");
    let script = testdata("reshape.script");
    let annotated = idxcost(&["annotate", path(&src), "--script", path(&script)]);
    assert!(annotated.status.success());
    let instrumented = scratch("factorial_annotated.imp", &stdout(&annotated));

    let transformed = idxcost(&["transform", path(&src), "--script", path(&script)]);
    let transformed = scratch("factorial_reshaped.imp", &stdout(&transformed));
    let listing = idxcost(&["compile", path(&transformed)]);
    let listing = scratch("factorial_reshaped.vm", &stdout(&listing));

    for n in 0..6 {
        let store = format!("n={n}");
        let vm: Value = serde_json::from_str(&stdout(&idxcost(&[
            "run",
            path(&listing),
            "--store",
            &store,
            "--json",
        ])))
        .unwrap();
        let src: Value = serde_json::from_str(&stdout(&idxcost(&[
            "run",
            path(&instrumented),
            "--instrumented",
            "--store",
            &store,
            "--json",
        ])))
        .unwrap();
        assert_eq!(src["store"]["__cost"], vm["cost"], "n={n}");
        assert_eq!(src["store"]["s"], vm["store"]["s"]);
    }
}

#[test]
fn analysis_reports_costs() {
    let labelled = scratch(
        "loop_labelled.imp",
        "_L0<>: { @i0 while x < 3 do { _a1<i0>: { x := x + 1 } }; _b1<>: skip }",
    );
    let listing = scratch("loop.vm", &stdout(&idxcost(&["compile", path(&labelled)])));
    let out = idxcost(&["analyze", path(&listing), "--json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let labels = v["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 3);
    assert!(labels.iter().all(|l| l["precise"] == Value::Bool(true)));

    let costs = scratch("costs.json", r#"{"assign": 10}"#);
    let out = idxcost(&["analyze", path(&listing), "--costs", path(&costs)]);
    assert!(stdout(&out).contains("_a1<i0> = 13"), "{}", stdout(&out));
}

#[test]
fn exit_codes() {
    let bad = scratch("bad.imp", "while x do");
    assert_eq!(idxcost(&["label", path(&bad)]).status.code(), Some(2));
    assert_eq!(idxcost(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        idxcost(&["run", "/nonexistent/file.imp"]).status.code(),
        Some(2)
    );
    assert_eq!(idxcost(&["verify", "--fuel", "0"]).status.code(), Some(2));

    let plain = scratch("unlabelled.imp", "while x < 3 do { x := x + 1 }");
    let listing = scratch(
        "unlabelled.vm",
        &stdout(&idxcost(&["compile", path(&plain)])),
    );
    assert_eq!(idxcost(&["analyze", path(&listing)]).status.code(), Some(1));

    let spin = scratch("spin.imp", "while 1 do { skip }");
    assert_eq!(
        idxcost(&["run", path(&spin), "--fuel", "50"]).status.code(),
        Some(1)
    );

    let bad_path = scratch("bad.script", "peel seqL\n");
    let src = testdata("corpus/factorial_sum.imp");
    assert_eq!(
        idxcost(&["transform", path(&src), "--script", path(&bad_path)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_is_deterministic_and_passes() {
    let a = idxcost(&["verify", "--seed", "0", "--trials", "100", "--json"]);
    let b = idxcost(&["verify", "--seed", "0", "--trials", "100", "--json"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["passed"], 100);
    assert_eq!(v["failed"], 0);
    assert!(v["first_failure"].is_null());
}
