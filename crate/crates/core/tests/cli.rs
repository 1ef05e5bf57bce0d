mod common;

use std::process::Command;

use common::{fixture, run_pipeline, PUBLISHED_ASYMMETRY};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_medsent"))
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path(), 9);
    let second = run_pipeline(b.path(), 9);
    assert!(first.contains_key("summary.json") && first.contains_key("asymmetry.tsv"));
    assert_eq!(first, second);
}

#[test]
fn seed_changes_only_random_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = run_pipeline(a.path(), 1);
    let y = run_pipeline(b.path(), 2);
    assert_eq!(x["summary.json"], y["summary.json"]);
    assert_ne!(x["evaluation.json"], y["evaluation.json"]);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().args(["stats", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn module_errors_are_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("preds.jsonl");
    std::fs::write(&bad, "{\"mention_id\":\"x\",\"label\":\"meh\",\"confidence\":0.5}\n").unwrap();
    let mentions = dir.path().join("m.tsv");
    std::fs::write(&mentions, "mention_id\tpost_id\tsubreddit\tauthor\tcreated_utc\tgeneric_name\ttherapy_class\tsurface\tfield\tstart\tend\tsentence_index\nx\tp\ts\ta\t1600000000\tketamine\tNMDA / rapid-acting\tketamine\tbody\t0\t8\t0\n").unwrap();
    let out = bin()
        .args(["ingest-predictions", "--mentions"])
        .arg(&mentions)
        .arg("--predictions")
        .arg(&bad)
        .arg("--output")
        .arg(dir.path().join("l.tsv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["command"], "ingest-predictions");
    assert!(v["error"].as_str().unwrap().contains("invalid label"));
}

#[test]
fn stats_on_published_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.tsv");
    let mut src = String::from("medication\tpositive\tnegative\n");
    for r in PUBLISHED_ASYMMETRY {
        src.push_str(&format!("{}\t{}\t{}\n", r.0, r.1, r.2));
    }
    std::fs::write(&pairs, src).unwrap();
    let out = bin().arg("stats").arg("--pairs").arg(&pairs).output().unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "medication\tpositive\tnegative\tnon_neutral\tp_hat\tci_lower\tci_upper\tp_raw\tp_fdr");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 20);
    for r in PUBLISHED_ASYMMETRY {
        let row = rows.iter().find(|c| c[0] == r.0).unwrap();
        assert_eq!(row[4], format!("{:.3}", r.3), "{}", r.0);
        assert_eq!(row[5], format!("{:.3}", r.4), "{}", r.0);
        assert_eq!(row[6], format!("{:.3}", r.5), "{}", r.0);
    }
    let nefazodone = rows.iter().find(|c| c[0] == "nefazodone").unwrap();
    assert_eq!(nefazodone[7], "1.95e-3");
}

#[test]
fn help_documents_every_subcommand() {
    let out = bin().arg("--help").output().unwrap();
    let help = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "ingest", "filter", "match", "window", "classify-rule", "ingest-predictions", "evaluate", "stats", "report",
        "sample-review", "lexicon-compile", "lexicon-variants", "prompts",
    ] {
        assert!(help.contains(cmd), "{cmd}");
        let sub = bin().args([cmd, "--help"]).output().unwrap();
        assert!(sub.status.success(), "{cmd}");
    }
}

#[test]
fn lexicon_commands() {
    let out = bin().arg("lexicon-compile").output().unwrap();
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["entity_count"], 81);
    assert_eq!(stats["variant_count"], 1027);

    let dir = tempfile::tempdir().unwrap();
    let vocab = dir.path().join("vocab.txt");
    std::fs::write(&vocab, "lithiem\nlitihum\nlithium\nketamine\nlthium\n").unwrap();
    let out = bin().args(["lexicon-variants", "--generic", "lithium", "--vocab"]).arg(&vocab).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "lithiem\nlitihum\nlthium\n");

    let decisions = dir.path().join("decisions.tsv");
    std::fs::write(&decisions, "lithiem\taccept\nlitihum\treject\nlthium\taccept\n").unwrap();
    let merged = dir.path().join("lex.jsonl");
    let audit = dir.path().join("audit.log");
    let status = bin()
        .args(["lexicon-variants", "--generic", "lithium", "--timestamp", "2025-01-01T00:00:00Z", "--vocab"])
        .arg(&vocab)
        .arg("--decisions")
        .arg(&decisions)
        .arg("--output")
        .arg(&merged)
        .arg("--audit-log")
        .arg(&audit)
        .status()
        .unwrap();
    assert!(status.success());
    let log = std::fs::read_to_string(&audit).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.contains("2025-01-01T00:00:00Z\tlithium\tlithiem\taccept"));
    let out = bin().arg("lexicon-compile").arg("--lexicon").arg(&merged).output().unwrap();
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["variant_count"], 1029);
}

#[test]
fn prompt_commands() {
    let out = bin().args(["prompts", "variant", "--generic", "sertraline"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["prompt"].as_str().unwrap().contains("sertraline"));
    assert_eq!(v["decoding"]["temperature"], 0.2);

    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.jsonl");
    std::fs::write(
        &inst,
        "{\"text\":\"Nardil gave me my life back\",\"target_start\":0,\"target_end\":6,\"label\":\"positive\"}\n\
         {\"text\":\"Effexor withdrawal is awful\",\"target_start\":0,\"target_end\":7,\"label\":\"negative\"}\n",
    )
    .unwrap();
    let outp = dir.path().join("prompts.jsonl");
    let st = bin().args(["prompts", "augmentation", "--instances"]).arg(&inst).arg("--output").arg(&outp).status().unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&outp).unwrap();
    assert_eq!(text.lines().count(), 2);
    let total: u64 = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["variants_requested"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 10);
}

#[test]
fn canned_predictions_ingest_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_pipeline(dir.path(), 3);
    let mentions = String::from_utf8(files["mentions.tsv"].clone()).unwrap();
    assert_eq!(mentions.lines().count() - 1, 24);
    let out = bin()
        .arg("ingest-predictions")
        .arg("--mentions")
        .arg(dir.path().join("mentions.tsv"))
        .arg("--predictions")
        .arg(fixture("predictions.jsonl"))
        .arg("--output")
        .arg(dir.path().join("external.tsv"))
        .arg("--report")
        .arg(dir.path().join("external.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("external.json")).unwrap()).unwrap();
    assert_eq!(rep["joined"], 24);
    assert_eq!(rep["missing"].as_array().unwrap().len(), 0);
}
