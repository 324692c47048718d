use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lrc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LRC_FIELD")
        .output()
        .unwrap()
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn construct(dir: &Path, name: &str, method: &str) {
    let out = lrc(
        &[
            "construct",
            "--n",
            "15",
            "--k",
            "9",
            "--r",
            "4",
            "--method",
            method,
            "--seed",
            "1",
            "--out",
            name,
        ],
        dir,
    );
    assert!(out.status.success(), "{}", text(&out));
}

#[test]
fn params_prints_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let out = lrc(&["params", "--n", "15", "--k", "9", "--r", "4"], dir.path());
    assert!(out.status.success());
    assert!(text(&out).contains("n=15 k=9 d=5 r=4"));

    let out = lrc(&["params", "--n", "16", "--k", "9", "--r", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(text(&out).matches("invalid parameters").count(), 1);
}

#[test]
fn verify_passes_then_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    construct(dir.path(), "p", "proposed");
    let out = lrc(
        &[
            "verify",
            "--graph",
            "p/graph.json",
            "--matrix",
            "p/matrix.txt",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out));
    assert!(!text(&out).contains("FAIL"));

    // zero one coefficient of the first global check row
    let matrix = fs::read_to_string(dir.path().join("p/matrix.txt")).unwrap();
    let mut lines: Vec<String> = matrix.lines().map(String::from).collect();
    let h = lines.iter().position(|l| l.starts_with("H ")).unwrap();
    let row = &mut lines[h + 4];
    let col = row.split(' ').position(|s| s != "0000").unwrap();
    let mut cells: Vec<&str> = row.split(' ').collect();
    cells[col] = "0000";
    *row = cells.join(" ");
    fs::write(dir.path().join("bad.txt"), lines.join("\n") + "\n").unwrap();
    let out = lrc(
        &["verify", "--graph", "p/graph.json", "--matrix", "bad.txt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let t = text(&out);
    assert!(
        t.contains("FAIL support") && t.contains(&format!("[(3, {col})]")),
        "{t}"
    );
}

#[test]
fn verify_names_an_uncovered_subset() {
    let dir = tempfile::tempdir().unwrap();
    construct(dir.path(), "p", "proposed");
    let mut graph: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p/graph.json")).unwrap())
            .unwrap();
    // strip the first global check down to its own parity
    let checks = graph["checks"].as_array_mut().unwrap();
    let global = checks.iter_mut().find(|c| c["kind"] == "global").unwrap();
    let keep = global["neighbors"]
        .as_array()
        .unwrap()
        .last()
        .cloned()
        .unwrap();
    global["neighbors"] = serde_json::json!([keep]);
    fs::write(dir.path().join("thin.json"), graph.to_string()).unwrap();
    let out = lrc(
        &["verify", "--graph", "thin.json", "--matrix", "p/matrix.txt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let t = text(&out);
    assert!(
        t.contains("FAIL cover") && t.contains("first: checks"),
        "{t}"
    );
}

#[test]
fn uc_and_compare_report_exact_values() {
    let dir = tempfile::tempdir().unwrap();
    construct(dir.path(), "p", "proposed");
    construct(dir.path(), "b", "baseline");
    let out = lrc(
        &[
            "compare",
            "--a",
            "p/graph.json",
            "--b",
            "b/graph.json",
            "--out",
            "cmp",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out));
    let csv = fs::read_to_string(dir.path().join("cmp/compare.csv")).unwrap();
    assert!(csv.contains("18.2"), "{csv}");

    let out = lrc(
        &["uc", "--graph", "b/graph.json", "--x", "1", "--out", "ub"],
        dir.path(),
    );
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ub/uc.json")).unwrap()).unwrap();
    let report = &json["reports"][0];
    assert_eq!(
        (report["u_bar_num"].as_u64(), report["u_bar_den"].as_u64()),
        (Some(44), Some(9))
    );
}

#[test]
fn codec_round_trip_and_repair() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    construct(d, "p", "proposed");
    let payload: Vec<u8> = (0..3000u32).map(|i| (i * 7 + i / 13) as u8).collect();
    fs::write(d.join("in.bin"), &payload).unwrap();
    let code = ["--graph", "p/graph.json", "--matrix", "p/matrix.txt"];
    let run = |args: &[&str]| {
        let out = lrc(args, d);
        assert!(out.status.success(), "{args:?}: {}", text(&out));
        text(&out)
    };
    run(&[
        &["codec", "encode"],
        &code[..],
        &["--input", "in.bin", "--out", "enc"],
    ]
    .concat());
    run(&[
        "codec",
        "erase",
        "--stripe",
        "enc/stripe.bin",
        "--blocks",
        "2,7,9,12",
        "--out",
        "er",
    ]);
    run(&[
        &["codec", "decode"],
        &code[..],
        &["--stripe", "er/stripe.bin", "--out", "dec"],
    ]
    .concat());
    assert_eq!(fs::read(d.join("dec/data.bin")).unwrap(), payload);
    assert_eq!(
        fs::read(d.join("dec/stripe.bin")).unwrap(),
        fs::read(d.join("enc/stripe.bin")).unwrap()
    );

    let t = run(&[
        &["codec", "repair"],
        &code[..],
        &["--stripe", "enc/stripe.bin", "--node", "7", "--out", "rep"],
    ]
    .concat());
    assert!(t.contains("reading 4 blocks"), "{t}");

    run(&[
        "codec",
        "erase",
        "--stripe",
        "enc/stripe.bin",
        "--blocks",
        "0,1,2,3,4,5",
        "--out",
        "er6",
    ]);
    let out = lrc(
        &[
            &["codec", "decode"],
            &code[..],
            &["--stripe", "er6/stripe.bin", "--out", "dec6"],
        ]
        .concat(),
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("undecodable"));
}

#[test]
fn rerun_reproduces_sim_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    construct(d, "p", "proposed");
    let out = lrc(
        &[
            "sim",
            "workload",
            "--n",
            "15",
            "--k",
            "9",
            "--r",
            "4",
            "--update",
            "0.6",
            "--batch",
            "0.2",
            "--failure",
            "0.2",
            "--stripes",
            "2",
            "--length",
            "80",
            "--seed",
            "3",
            "--out",
            "w",
        ],
        d,
    );
    assert!(out.status.success(), "{}", text(&out));
    let out = lrc(
        &[
            "sim",
            "run",
            "--graph",
            "p/graph.json",
            "--matrix",
            "p/matrix.txt",
            "--trace",
            "w/trace.jsonl",
            "--stripes",
            "2",
            "--out",
            "r",
        ],
        d,
    );
    assert!(out.status.success(), "{}", text(&out));
    let out = lrc(
        &["rerun", "--manifest", "r/manifest.json", "--out", "again"],
        d,
    );
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(
        fs::read(d.join("r/metrics.json")).unwrap(),
        fs::read(d.join("again/metrics.json")).unwrap()
    );

    // a changed input is refused
    fs::write(d.join("w/trace.jsonl"), "").unwrap();
    let out = lrc(
        &["rerun", "--manifest", "r/manifest.json", "--out", "again2"],
        d,
    );
    assert!(!out.status.success());
}
