mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::pku_corpus;
use pcrf_seg::NGramLM;
use tempfile::TempDir;

fn pcrf_seg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcrf-seg"))
        .args(args)
        .env_remove("SEG_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// Trained model and LM over the first 200 bundled sentences, plus
    /// 100 raw sentences to segment.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = pku_corpus();
        let train: Vec<String> = corpus[..200].iter().map(|s| s.words().join(" ")).collect();
        let raw: Vec<String> = corpus[200..300].iter().map(|s| s.text()).collect();
        std::fs::write(dir.path().join("train.txt"), train.join("\n") + "\n").unwrap();
        std::fs::write(dir.path().join("raw.txt"), raw.join("\n") + "\n").unwrap();
        let ws = Workspace { dir };
        let out = pcrf_seg(&[
            "train-tagger",
            "--input",
            &ws.s("train.txt"),
            "--output",
            &ws.s("model.tsv"),
            "--epochs",
            "2",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let out = pcrf_seg(&[
            "train-lm",
            "--input",
            &ws.s("train.txt"),
            "--output",
            &ws.s("lm.arpa"),
        ]);
        assert_eq!(code(&out), 0);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, content: impl AsRef<[u8]>) -> String {
        std::fs::write(self.path(name), content).unwrap();
        self.s(name)
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }
}

fn segment(ws: &Workspace, input: &str, output: &str, extra: &[&str]) -> Output {
    let model = ws.s("model.tsv");
    let mut args = vec!["segment", "--model", &model];
    let (i, o) = (ws.s(input), ws.s(output));
    args.extend(["--input", &i, "--output", &o]);
    args.extend_from_slice(extra);
    let lm = ws.s("lm.arpa");
    if extra.contains(&"pcrf") {
        args.extend(["--lm", &lm]);
    }
    pcrf_seg(&args)
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&pcrf_seg(&[])), 64);
    assert_eq!(code(&pcrf_seg(&["no-such-command"])), 64);
    assert_eq!(
        code(&pcrf_seg(&["segment", "--model", "m", "--decoder", "pcrf"])),
        64
    );
    assert_eq!(
        code(&pcrf_seg(&["segment", "--model", "m", "--lambda", "-1"])),
        64
    );
    assert_eq!(
        code(&pcrf_seg(&[
            "train-tagger",
            "--input",
            "a",
            "--output",
            "b",
            "--epochs",
            "0"
        ])),
        64
    );
    assert_eq!(
        code(&pcrf_seg(&[
            "train-lm", "--input", "a", "--output", "b", "--order", "9"
        ])),
        64
    );
    assert_eq!(code(&pcrf_seg(&["--help"])), 0);
    assert_eq!(code(&pcrf_seg(&["--version"])), 0);
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = pcrf_seg(&[
        "train-lm",
        "--input",
        missing.to_str().unwrap(),
        "--output",
        "x",
    ]);
    assert_eq!(code(&out), 2);

    let unique = dir.path().join("unique.txt");
    std::fs::write(&unique, "甲 乙 丙\n丁 戊\n").unwrap();
    let arpa = dir.path().join("u.arpa");
    let out = pcrf_seg(&[
        "train-lm",
        "--input",
        unique.to_str().unwrap(),
        "--output",
        arpa.to_str().unwrap(),
        "--min-count",
        "2",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_count"));
}

#[test]
fn train_lm_writes_loadable_arpa() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    std::fs::write(&corpus, "我 爱 北京\n北京 欢迎 你\n我 爱 你\n").unwrap();
    let arpa = dir.path().join("c.arpa");
    let out = pcrf_seg(&[
        "train-lm",
        "--input",
        corpus.to_str().unwrap(),
        "--output",
        arpa.to_str().unwrap(),
        "--order",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let record: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["ngram_counts"].as_array().unwrap().len(), 3);
    let text = std::fs::read_to_string(&arpa).unwrap();
    for section in ["\\1-grams:", "\\2-grams:", "\\3-grams:"] {
        assert!(text.contains(section));
    }
    let lm = NGramLM::load_arpa(&arpa).unwrap();
    assert!(lm.ppl(&["我", "爱", "北京"]).unwrap().ppl.is_finite());
}

#[test]
fn train_tagger_reports_accuracy_and_is_deterministic() {
    let ws = Workspace::new();
    let out = pcrf_seg(&[
        "train-tagger",
        "--input",
        &ws.s("train.txt"),
        "--output",
        &ws.s("again.tsv"),
        "--epochs",
        "2",
    ]);
    assert_eq!(code(&out), 0);
    let record: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let acc = record["train_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(ws.read("model.tsv"), ws.read("again.tsv"));
}

#[test]
fn segment_output_is_lossless_and_ordered() {
    let ws = Workspace::new();
    let raw = String::from_utf8(ws.read("raw.txt")).unwrap();
    let out = segment(&ws, "raw.txt", "seg.txt", &["--threads", "3"]);
    assert_eq!(code(&out), 0);
    let seg = String::from_utf8(ws.read("seg.txt")).unwrap();
    let raw_lines: Vec<&str> = raw.lines().collect();
    let seg_lines: Vec<&str> = seg.lines().collect();
    assert_eq!(raw_lines.len(), seg_lines.len());
    for (r, s) in raw_lines.iter().zip(&seg_lines) {
        assert_eq!(s.replace(' ', ""), r.replace(' ', ""));
    }
}

#[test]
fn empty_line_maps_to_empty_line() {
    let ws = Workspace::new();
    ws.write("in.txt", "\n中国\n\n");
    let out = segment(&ws, "in.txt", "out.txt", &[]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(ws.read("out.txt")).unwrap();
    let lines: Vec<&str> = text.split('\n').collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "");
    assert_eq!(lines[1].replace(' ', ""), "中国");
    assert_eq!(lines[2], "");
}

#[test]
fn crf_and_pcrf_at_lambda_zero_are_byte_identical() {
    let ws = Workspace::new();
    assert_eq!(
        code(&segment(&ws, "raw.txt", "crf.txt", &["--decoder", "crf"])),
        0
    );
    assert_eq!(
        code(&segment(
            &ws,
            "raw.txt",
            "pcrf.txt",
            &["--decoder", "pcrf", "--lambda", "0"]
        )),
        0
    );
    assert_eq!(ws.read("crf.txt"), ws.read("pcrf.txt"));
}

#[test]
fn corrupt_line_does_not_abort_stream() {
    let ws = Workspace::new();
    let mut input = Vec::new();
    for i in 0..10_000 {
        if i == 4321 {
            input.extend_from_slice(b"\xff\xfe broken \xc3\n");
        } else {
            input.extend_from_slice(format!("第{i}行文字\n").as_bytes());
        }
    }
    ws.write("big.txt", &input);
    let out = segment(&ws, "big.txt", "big.out", &["--threads", "4"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4322"));
    let text = String::from_utf8(ws.read("big.out")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10_000);
    assert_eq!(lines[9999].replace(' ', ""), "第9999行文字");
}

#[test]
fn eval_reports_f1() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.txt");
    let pred = dir.path().join("pred.txt");
    std::fs::write(&gold, "新来 的 吃鸡 主播\n").unwrap();
    std::fs::write(&pred, "新 来 的 吃 鸡主播\n").unwrap();
    let out = pcrf_seg(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let record: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!((record["f1"].as_f64().unwrap() - 0.2222).abs() < 1e-4);
    assert_eq!(record["precision"].as_f64().unwrap(), 0.2);
    assert_eq!(record["recall"].as_f64().unwrap(), 0.25);

    let out = pcrf_seg(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        gold.to_str().unwrap(),
    ]);
    let record: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["f1"].as_f64().unwrap(), 1.0);
}

#[test]
fn eval_misalignment_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.txt");
    let pred = dir.path().join("pred.txt");
    std::fs::write(&gold, "甲 乙\n丙 丁\n").unwrap();
    std::fs::write(&pred, "甲乙\n丙 戊\n").unwrap();
    let out = pcrf_seg(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn bench_prints_one_record_per_grid_point() {
    let ws = Workspace::new();
    let out = pcrf_seg(&[
        "bench",
        "--input",
        &ws.s("raw.txt"),
        "--model",
        &ws.s("model.tsv"),
        "--batch",
        "1,16",
        "--threads",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let records: Vec<serde_json::Value> = text
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    assert_eq!(records.len(), 2);
    for r in &records {
        let kbs =
            r["bytes_processed"].as_f64().unwrap() / 1024.0 / r["wall_seconds"].as_f64().unwrap();
        assert_eq!(r["kb_per_s"].as_f64().unwrap(), kbs);
    }
    assert!(text
        .lines()
        .any(|l| l.starts_with("summary:") && l.contains("68")));
}

fn stats_records(args: &[&str]) -> Vec<serde_json::Value> {
    let out = pcrf_seg(args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stats_and_distance() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    std::fs::write(&a, "我们 的 中华人民共和国\n好\n").unwrap();
    std::fs::write(&b, "他 说\n").unwrap();

    let r = stats_records(&["stats", "--input", p(&a)]);
    assert_eq!(r[0]["sentence_count"], 2);
    assert_eq!(r[0]["word_count"], 4);
    assert_eq!(r[0]["char_count"], 11);
    assert_eq!(r[0]["phrase_count"], 1);

    let r = stats_records(&["stats", "--train", p(&a), "--test", p(&b)]);
    assert_eq!(r[2]["mean_consistency"], 0.0);
    assert_eq!(r[2]["oov_rate"], 1.0);

    let r = stats_records(&["stats", "--train", p(&a), "--test", p(&a)]);
    assert_eq!(r[2]["oov_rate"], 0.0);
}
