use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mpe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic records ingested with the slotting they were generated under.
fn synth_quads(dir: &Path, records_per_object: &str) -> PathBuf {
    let raw = dir.join("raw.csv");
    let quads = dir.join("quads.csv");
    ok(&[
        "synth",
        "--records-per-object",
        records_per_object,
        "--objects",
        "6",
        "--n-locations",
        "15",
        "--out",
        p(&raw),
    ]);
    ok(&[
        "ingest",
        "--input",
        p(&raw),
        "--slot-minutes",
        "60",
        "--window",
        "00:00-10:00",
        "--out",
        p(&quads),
    ]);
    quads
}

#[test]
fn ingest_three_records_gives_two_quadruples() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("r.csv");
    fs::write(
        &input,
        "v1,1452000000,L7\nv1,1452000300,L8\nv1,1452000600,L9\n",
    )
    .unwrap();
    let out = dir.path().join("q.csv");
    let stdout = ok(&["ingest", "--input", p(&input), "--out", p(&out)]);
    assert!(stdout.contains("quadruples 2"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with("L7,L8"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("q.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["counts"]["quadruples_written"], 2);
    assert_eq!(sidecar["slotting"]["slot_minutes"], 30);
}

#[test]
fn ingest_is_byte_identical_on_rerun() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.csv");
    ok(&["synth", "--records-per-object", "100", "--out", p(&raw)]);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&[
            "ingest",
            "--input",
            p(&raw),
            "--slot-minutes",
            "60",
            "--window",
            "00:00-10:00",
            "--out",
            p(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn threshold_drops_rare_transitions() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("r.csv");
    let mut rows = String::new();
    for i in 0..31 {
        let t = 1_452_000_000 + i * 7200;
        rows.push_str(&format!("v{i},{t},A\nv{i},{},B\n", t + 60));
    }
    rows.push_str("w,1452000000,A\nw,1452000060,C\n");
    fs::write(&input, rows).unwrap();
    let out = dir.path().join("q.csv");
    ok(&[
        "ingest",
        "--input",
        p(&input),
        "--threshold",
        "30",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 32);
    assert!(!text.contains(",A,C"));
}

#[test]
fn gps_ingest_maps_points_to_cells() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("g.csv");
    fs::write(
        &input,
        "taxi,timestamp,lat,lon\nt1,1452000000,41.15,-8.61\nt1,1452000060,41.16,-8.60\nt1,1452000120,50.0,-8.6\n",
    )
    .unwrap();
    let out = dir.path().join("q.csv");
    let stdout = ok(&[
        "ingest",
        "--input",
        p(&input),
        "--format",
        "gps-csv",
        "--grid",
        "41.1,41.2,-8.7,-8.5,0.01",
        "--out",
        p(&out),
    ]);
    assert!(stdout.contains("skipped points 1"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn train_with_same_seed_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "150");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&[
            "train",
            "--input",
            p(&quads),
            "--models",
            "mpe,mm",
            "--dim",
            "8",
            "--epochs",
            "3",
            "--seed",
            "7",
            "--out",
            p(out),
        ]);
    }
    for name in [
        "mpe.bin",
        "mpe.params.txt",
        "counts.tsv",
        "train.csv",
        "test.csv",
        "config.json",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    // Only the wall-clock column may differ.
    let strip = |d: &Path| -> Vec<String> {
        fs::read_to_string(d.join("mpe.loss.tsv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once('\t').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    let c = dir.path().join("c");
    ok(&[
        "train",
        "--input",
        p(&quads),
        "--dim",
        "8",
        "--epochs",
        "3",
        "--seed",
        "8",
        "--out",
        p(&c),
    ]);
    assert_ne!(
        fs::read(a.join("mpe.bin")).unwrap(),
        fs::read(c.join("mpe.bin")).unwrap()
    );
}

#[test]
fn loss_log_has_one_row_per_epoch() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "100");
    let out = dir.path().join("m");
    ok(&[
        "train",
        "--input",
        p(&quads),
        "--dim",
        "8",
        "--epochs",
        "20",
        "--out",
        p(&out),
    ]);
    let log = fs::read_to_string(out.join("mpe.loss.tsv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[19].split('\t').next(), Some("20"));
}

#[test]
fn mask_flag_selects_variant() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "60");
    let out = dir.path().join("m");
    ok(&[
        "train",
        "--input",
        p(&quads),
        "--mask",
        "plain",
        "--dim",
        "4",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    let params = fs::read_to_string(out.join("mpe-plain.params.txt")).unwrap();
    assert!(params.contains("mask = plain"));
}

#[test]
fn export_time_emits_one_row_per_slot() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "100");
    let out = dir.path().join("m");
    ok(&[
        "train",
        "--input",
        p(&quads),
        "--dim",
        "6",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    let tsv = ok(&[
        "export-embeddings",
        "--model",
        p(&out.join("mpe.bin")),
        "--kind",
        "time",
    ]);
    assert_eq!(tsv.lines().count(), 10);
    for line in tsv.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], "time");
        assert_eq!(fields.len(), 2 + 6);
    }
}

#[test]
fn predict_emits_at_most_k_rows_per_query() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "100");
    let out = dir.path().join("m");
    ok(&[
        "train",
        "--input",
        p(&quads),
        "--models",
        "mpe,bayes",
        "--dim",
        "6",
        "--epochs",
        "2",
        "--out",
        p(&out),
    ]);
    let queries = dir.path().join("queries.csv");
    fs::write(
        &queries,
        "object,time,current\nv0,0,L1\nv1,3,L2\nnobody,1,L3\nv2,4,nowhere\n",
    )
    .unwrap();
    for extra in [
        vec!["--model", p(&out.join("mpe.bin"))],
        vec!["--model", p(&out.join("counts.tsv")), "--baseline", "bayes"],
    ] {
        let mut args = vec!["predict", "--input", p(&queries), "--k", "3"];
        args.extend(extra);
        let tsv = ok(&args);
        let mut per_query = std::collections::BTreeMap::new();
        for line in tsv.lines().skip(1) {
            *per_query
                .entry(line.split('\t').next().unwrap().to_string())
                .or_insert(0) += 1;
        }
        assert_eq!(per_query.len(), 4);
        assert!(per_query.values().all(|&n| n <= 3));
        assert!(tsv.contains("unseen_current"));
    }
}

#[test]
fn evaluate_writes_report_shaped_like_a_results_table() {
    let dir = TempDir::new().unwrap();
    let quads = synth_quads(dir.path(), "80");
    let out = dir.path().join("ev");
    let table = ok(&[
        "evaluate",
        "--input",
        p(&quads),
        "--models",
        "mpe,mm,bayes",
        "--runs",
        "10",
        "--dim",
        "4",
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(table.contains("acc@3") && table.contains("bayes"));
    let report = fs::read_to_string(out.join("report.tsv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(
        lines[0],
        "model\truns\tn_test\tacc@1\tacc@2\tacc@3\tap@1\tap@2\tap@3\tbackoff_queries"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("mpe\t10\t"));
    let runs = fs::read_to_string(out.join("runs.tsv")).unwrap();
    assert_eq!(runs.lines().filter(|l| l.starts_with("mpe\t")).count(), 10);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = TempDir::new().unwrap();
    assert_eq!(mpe(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(
        mpe(&["train", "--input", "x", "--out", "y", "--epochs", "0"])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        mpe(&[
            "ingest",
            "--input",
            p(&missing),
            "--out",
            p(&dir.path().join("o"))
        ])
        .status
        .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "v1,1452000000,L1\nv1,yesterday,L2\n").unwrap();
    let out = mpe(&[
        "ingest",
        "--input",
        p(&bad),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let quads = synth_quads(dir.path(), "60");
    let diverge = mpe(&[
        "train",
        "--input",
        p(&quads),
        "--lr",
        "1e12",
        "--epochs",
        "1",
        "--out",
        p(&dir.path().join("d")),
    ]);
    assert_eq!(diverge.status.code(), Some(3));
}
