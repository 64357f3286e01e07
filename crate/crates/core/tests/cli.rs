use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_unibi");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env("UNIBI_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// 1-1 graph that a small model learns within a few dozen epochs.
fn write_config(dir: &Path, epochs: usize) {
    let cfg = format!(
        r#"{{"synthetic": {{"n_entities": 200, "relations": [
            {{"n_heads": 100, "tails_per_head": 1, "n_tails": 100, "heads_per_tail": 1, "copies": 5}}]}},
          "dim": 32, "learning_rate": 0.01, "max_epochs": {epochs}, "eval_every": 5, "out": "run"}}"#
    );
    fs::write(dir.join("cfg.json"), cfg).unwrap();
}

#[test]
fn train_then_eval_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), 50);
    let o = run(dir.path(), &["train", "--config", "cfg.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let valid = out
        .lines()
        .find(|l| l.starts_with("valid,"))
        .expect("valid row");
    let mrr: f64 = valid.split(',').nth(1).unwrap().parse().unwrap();
    assert!(mrr > 0.9, "valid MRR {mrr}");
    assert!(dir.path().join("run/model.ckpt").exists());
    let trace = fs::read_to_string(dir.path().join("run/train_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,loss,valid_mrr"));

    let e1 = run(dir.path(), &["eval", "--config", "cfg.json"]);
    assert!(e1.status.success(), "{}", stderr(&e1));
    let csv1 = fs::read(dir.path().join("run/eval.csv")).unwrap();
    let text = stdout(&e1);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "split,mrr,hits1,hits3,hits10,n_queries");
    assert_eq!(lines.len(), 4);

    let refused = run(dir.path(), &["eval", "--config", "cfg.json"]);
    assert!(!refused.status.success());
    assert!(stderr(&refused).contains("--force"));

    let e2 = run(dir.path(), &["eval", "--config", "cfg.json", "--force"]);
    assert!(e2.status.success());
    assert_eq!(fs::read(dir.path().join("run/eval.csv")).unwrap(), csv1);

    // Same seed, same files.
    let o2 = run(
        dir.path(),
        &["train", "--config", "cfg.json", "--out", "run2"],
    );
    assert!(o2.status.success(), "{}", stderr(&o2));
    for f in ["model.ckpt", "train_trace.csv"] {
        let a = fs::read(dir.path().join("run").join(f)).unwrap();
        let b = fs::read(dir.path().join("run2").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn missing_dataset_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train", "--data-dir", "no/such/dir"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/dir"));
    let o = run(dir.path(), &["stats", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_configuration_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"dimm": 4}"#).unwrap();
    let o = run(dir.path(), &["train", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["train", "--model", "unibi-o3", "--dim", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("divisible"), "{}", stderr(&o));
}

#[test]
fn corrupted_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), 50);
    fs::write(dir.path().join("bad.ckpt"), b"NOTACHECKPOINT-------").unwrap();
    let o = run(
        dir.path(),
        &["eval", "--config", "cfg.json", "--checkpoint", "bad.ckpt"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad checkpoint"));
}

#[test]
fn checkpoint_from_another_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), 1);
    assert!(run(dir.path(), &["train", "--config", "cfg.json"])
        .status
        .success());
    let o = run(
        dir.path(),
        &["eval", "--config", "cfg.json", "--identity-fraction", "0.5"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn verify_stats_identity_and_complexity_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("bound,")).count() >= 3);
    assert!(out.contains("counterexample,orders-2-6,500,500,ok"));

    write_config(dir.path(), 3);
    let o = run(dir.path(), &["stats", "--config", "cfg.json"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("entities,200\nrelations,5\n"));

    let o = run(
        dir.path(),
        &["identity-exp", "--config", "cfg.json", "--dim", "8"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir
        .path()
        .join("run/identity_unibi-o2-ec-on-rc-on.csv")
        .exists());
    assert!(dir
        .path()
        .join("run/identity_unibi-o2-ec-off-rc-off.csv")
        .exists());
    let trace =
        fs::read_to_string(dir.path().join("run/identity_unibi-o2-ec-on-rc-on.csv")).unwrap();
    assert!(trace.starts_with("epoch,delta_identity,error_between_runs\n0,"));
    assert_eq!(trace.lines().count(), 1 + 4);

    assert!(
        run(dir.path(), &["train", "--config", "cfg.json", "--dim", "8"])
            .status
            .success()
    );
    let o = run(
        dir.path(),
        &["complexity-report", "--config", "cfg.json", "--dim", "8"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("relation,delta_r,delta_rprime,hptr,tphr,complexity"));
    assert!(csv.lines().last().unwrap().starts_with("spearman,"));
}
