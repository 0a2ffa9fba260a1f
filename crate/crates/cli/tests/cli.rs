use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taegan::codec::read_csv;
use tempfile::TempDir;

const TINY: &str = "pre_epochs = 1\nmain_epochs = 2\nbatch = 20\nhidden_layers = 1\nhidden_width = 16\nembedding_dim = 8\nnoise_dim = 4\ndropout = 0.0\n";

fn taegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taegan"))
        .args(args)
        .env("TAEGAN_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("colour,size,label\n");
        for i in 0..60 {
            let colour = ["red", "green", "blue"][i % 3];
            let size = 1.0 + (i % 7) as f64 * 0.75 + (i as f64 * 0.37).sin();
            let label = if i % 3 == 0 || size > 4.0 { "yes" } else { "no" };
            csv.push_str(&format!("{colour},{size},{label}\n"));
        }
        std::fs::write(dir.path().join("data.csv"), csv).unwrap();
        std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn fit(&self, out: &str, seed: &str) -> Output {
        taegan(&[
            "fit",
            "--data",
            &self.s("data.csv"),
            "--config",
            &self.s("tiny.toml"),
            "--seed",
            seed,
            "--out",
            &self.s(out),
        ])
    }

    fn sample(&self, model: &str, n: &str, seed: &str, out: &str) -> Output {
        taegan(&["sample", "--model", &self.s(model), "--n", n, "--seed", seed, "--out", &self.s(out)])
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn fit_then_sample_end_to_end() {
    let f = Fixture::new();
    let o = f.fit("m.ckpt", "3");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = taegan_cli::checkpoint::load(f.path("m.ckpt")).unwrap();
    assert_eq!(model.epochs_trained, 3);
    let history = std::fs::read_to_string(f.path("m.ckpt.history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 3 * 3);

    let o = f.sample("m.ckpt", "100", "1", "s.csv");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = read_csv(f.path("s.csv")).unwrap();
    assert_eq!(t.len(), 100);
    assert_eq!(t.header, vec!["colour", "size", "label"]);
    for r in &t.rows {
        assert!(["red", "green", "blue"].contains(&r[0].as_str()));
        assert!(r[1].parse::<f64>().unwrap().is_finite());
        assert!(["yes", "no"].contains(&r[2].as_str()));
    }
}

#[test]
fn fit_and_sample_are_deterministic() {
    let f = Fixture::new();
    assert_eq!(code(&f.fit("a.ckpt", "5")), 0);
    assert_eq!(code(&f.fit("b.ckpt", "5")), 0);
    assert_eq!(read(&f.path("a.ckpt")), read(&f.path("b.ckpt")));
    assert_eq!(code(&f.fit("c.ckpt", "6")), 0);
    assert_ne!(read(&f.path("a.ckpt")), read(&f.path("c.ckpt")));

    assert_eq!(code(&f.sample("a.ckpt", "50", "9", "x.csv")), 0);
    assert_eq!(code(&f.sample("b.ckpt", "50", "9", "y.csv")), 0);
    assert_eq!(read(&f.path("x.csv")), read(&f.path("y.csv")));
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    let o = taegan(&[
        "fit",
        "--data",
        &f.s("data.csv"),
        "--config",
        &f.s("tiny.toml"),
        "--main-epochs",
        "0",
        "--out",
        &f.s("m.ckpt"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(taegan_cli::checkpoint::load(f.path("m.ckpt")).unwrap().epochs_trained, 1);
}

#[test]
fn missing_file_exits_2() {
    let f = Fixture::new();
    let o = taegan(&["fit", "--data", &f.s("nope.csv"), "--out", &f.s("m.ckpt")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
    let o = f.sample("nope.ckpt", "5", "0", "s.csv");
    assert_eq!(code(&o), 2);
    assert_eq!(code(&taegan(&["fit"])), 2);
}

#[test]
fn corrupted_checkpoint_exits_3() {
    let f = Fixture::new();
    assert_eq!(code(&f.fit("m.ckpt", "1")), 0);
    let mut bytes = read(&f.path("m.ckpt"));
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(f.path("bad.ckpt"), bytes).unwrap();
    let o = f.sample("bad.ckpt", "5", "0", "s.csv");
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("checksum mismatch"), "{}", stderr(&o));
    std::fs::write(f.path("junk.ckpt"), b"hello").unwrap();
    assert_eq!(code(&f.sample("junk.ckpt", "5", "0", "s.csv")), 3);
}

#[test]
fn split_uses_remainder_to_first() {
    let f = Fixture::new();
    let mut csv = String::from("id\n");
    for i in 0..10 {
        csv.push_str(&format!("{i}\n"));
    }
    std::fs::write(f.path("ten.csv"), csv).unwrap();
    let out = f.path("parts");
    let o = taegan(&["split", "--data", &f.s("ten.csv"), "--ratio", "1:1:1", "--seed", "4", "--out-dir", &out.display().to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut ids = Vec::new();
    let mut sizes = Vec::new();
    for name in ["train", "val", "test"] {
        let t = read_csv(out.join(format!("ten_{name}.csv"))).unwrap();
        sizes.push(t.len());
        ids.extend(t.rows.into_iter().map(|r| r[0].parse::<usize>().unwrap()));
    }
    assert_eq!(sizes, vec![4, 3, 3]);
    ids.sort_unstable();
    assert_eq!(ids, (0..10).collect::<Vec<_>>());
    assert_eq!(code(&taegan(&["split", "--data", &f.s("ten.csv"), "--ratio", "1:x"])), 2);
}

#[test]
fn evaluate_reports_scores_and_rejects_mismatched_schemas() {
    let f = Fixture::new();
    let dir = f.dir.path().display().to_string();
    assert_eq!(code(&taegan(&["split", "--data", &f.s("data.csv"), "--seed", "2", "--out-dir", &dir])), 0);
    assert_eq!(code(&f.fit("m.ckpt", "1")), 0);
    assert_eq!(code(&f.sample("m.ckpt", "20", "0", "synth.csv")), 0);
    let o = taegan(&[
        "evaluate",
        "--real-train",
        &f.s("data_train.csv"),
        "--real-val",
        &f.s("data_val.csv"),
        "--real-test",
        &f.s("data_test.csv"),
        "--synth",
        &f.s("synth.csv"),
        "--target",
        "label",
        "--out",
        &f.s("report.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.path("report.json")).unwrap()).unwrap();
    let mut scores = Vec::new();
    collect_numbers(&report, &mut scores);
    assert!(!scores.is_empty());
    assert!(scores.iter().all(|v| (0.0..=1.0).contains(v)), "{scores:?}");
    assert!(report["augmentation"].is_object(), "synthetic size equals train size");

    std::fs::write(f.path("other.csv"), "colour,weight,label\nred,1,yes\n").unwrap();
    let o = taegan(&[
        "evaluate",
        "--real-train",
        &f.s("data_train.csv"),
        "--real-val",
        &f.s("data_val.csv"),
        "--real-test",
        &f.s("data_test.csv"),
        "--synth",
        &f.s("other.csv"),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

fn collect_numbers(v: &serde_json::Value, out: &mut Vec<f64>) {
    match v {
        serde_json::Value::Number(n) => out.push(n.as_f64().unwrap()),
        serde_json::Value::Object(m) => m.values().for_each(|x| collect_numbers(x, out)),
        serde_json::Value::Array(a) => a.iter().for_each(|x| collect_numbers(x, out)),
        _ => {}
    }
}

#[test]
fn ablate_writes_one_run_per_flag() {
    let f = Fixture::new();
    let out = f.path("abl");
    let o = taegan(&[
        "ablate",
        "--data",
        &f.s("data.csv"),
        "--config",
        &f.s("tiny.toml"),
        "--out-dir",
        &out.display().to_string(),
        "--only",
        "constant_lr,disable_interaction_loss",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["full", "constant_lr", "disable_interaction_loss"] {
        assert!(out.join(format!("{name}.ckpt")).is_file(), "{name}");
    }
    let cfg = taegan_cli::checkpoint::load(out.join("constant_lr.ckpt")).unwrap().config;
    assert!(cfg.ablation.constant_lr && !cfg.ablation.disable_interaction_loss);
    let o = taegan(&["ablate", "--data", &f.s("data.csv"), "--out-dir", &out.display().to_string(), "--only", "bogus"]);
    assert_eq!(code(&o), 2);
}
