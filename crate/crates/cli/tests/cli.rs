use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gmf(args);
    assert!(
        out.status.success(),
        "gmf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SPLIT: &str = "train = [\"S01\", \"S02\"]\ntest = [\"S03\"]\nvalidation_fraction = 0.5\nseed = 0\n";

/// Writes a small corpus and split file, returns (corpus dir, split path).
fn corpus(dir: &Path) -> (PathBuf, PathBuf) {
    corpus_of(dir, "1.2")
}

fn corpus_of(dir: &Path, seconds: &str) -> (PathBuf, PathBuf) {
    let data = dir.join("corpus");
    ok(&["synth-data", "--out", s(&data), "--subjects", "3", "--speeds", "0.8,1.3", "--duration", seconds, "--seed", "4"]);
    let split = dir.join("split.toml");
    std::fs::write(&split, SPLIT).unwrap();
    (data, split)
}

#[test]
fn every_subcommand_documents_its_flags() {
    let cases: [(&str, &[&str]); 7] = [
        ("synth-data", &["--out", "--subjects", "--speeds", "--seed", "[default: 10]"]),
        ("import", &["--raw", "--out", "--map"]),
        ("train", &["--data", "--split", "--config", "--out", "--epochs", "--seed", "--mode"]),
        ("eval", &["--data", "--split", "--model", "--out", "--stride", "[default: 1]"]),
        ("bench", &["--models", "--rounds", "--per-round", "--out", "--seed", "[default: 20]", "[default: 10000]"]),
        ("infer", &["--model", "--stream", "--q"]),
        ("export-curves", &["--model", "--trial", "--out", "--period"]),
    ];
    for (cmd, flags) in cases {
        let out = ok(&[cmd, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}:\n{text}");
        }
    }
    assert!(!gmf(&["train", "--bogus"]).status.success());
}

#[test]
fn synth_train_eval_produces_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, split) = corpus(dir.path());
    assert!(data.join("subjects.csv").exists());
    assert_eq!(std::fs::read_dir(data.join("trials")).unwrap().count(), 6);
    let ckpt = dir.path().join("run/gmf.ckpt");
    ok(&[
        "train", "--data", s(&data), "--split", s(&split), "--out", s(&ckpt), "--epochs", "2", "--repetitions", "1",
        "--batch-size", "16", "--train-stride", "10", "--val-stride", "10", "--seed", "3",
    ]);
    assert!(ckpt.exists());
    let sidecar = std::fs::read_to_string(dir.path().join("run/gmf.ckpt.json")).unwrap();
    assert!(sidecar.contains("\"seed\": 3"));
    let log = std::fs::read_to_string(dir.path().join("run/gmf.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let out = dir.path().join("eval");
    ok(&["eval", "--data", s(&data), "--split", s(&split), "--model", s(&ckpt), "--out", s(&out), "--stride", "5"]);
    for f in ["metrics.json", "metrics.csv", "per_speed.csv", "per_subject.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let speeds = std::fs::read_to_string(out.join("per_speed.csv")).unwrap();
    assert!(speeds.starts_with("speed_mps,rmse,n\n"));
    assert_eq!(speeds.lines().count(), 3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, split) = corpus(dir.path());
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "epochs = 4\nrepetitions = 2\nbatch_size = 16\ntrain_stride = 10\nval_stride = 10\nmode = \"baseline_no_q\"\n").unwrap();
    let ckpt = dir.path().join("b.ckpt");
    ok(&["train", "--data", s(&data), "--split", s(&split), "--config", s(&cfg), "--out", s(&ckpt), "--epochs", "1"]);
    for r in 0..2 {
        let log = std::fs::read_to_string(dir.path().join(format!("b.r{r}.log.csv"))).unwrap();
        assert_eq!(log.lines().count(), 2, "the flag sets one epoch");
        let side = std::fs::read_to_string(dir.path().join(format!("b.r{r}.ckpt.json"))).unwrap();
        assert!(side.contains("baseline_no_q"));
    }
}

#[test]
fn eval_with_missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let (data, split) = corpus(dir.path());
    let missing = dir.path().join("nowhere/model.ckpt");
    let out = gmf(&["eval", "--data", s(&data), "--split", s(&split), "--model", s(&missing), "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&missing)), "{err}");
}

fn gmf_checkpoint(dir: &Path, backbone: &str) -> PathBuf {
    let (data, split) = corpus_of(dir, "4");
    let ckpt = dir.join(format!("{backbone}.ckpt"));
    ok(&[
        "train", "--data", s(&data), "--split", s(&split), "--out", s(&ckpt), "--epochs", "1", "--repetitions", "1",
        "--backbone", backbone, "--batch-size", "32", "--train-stride", "20", "--val-stride", "20",
    ]);
    ckpt
}

fn stream_csv(rows: usize) -> String {
    let mut text = String::from("time_s,hip_angle_l_rad,hip_angle_r_rad\n");
    for i in 0..rows {
        let t = i as f64 / 200.0;
        text.push_str(&format!("{t},{},{}\n", 0.3 * (6.0 * t).sin(), 0.3 * (6.0 * t).cos()));
    }
    text
}

#[test]
fn infer_emits_one_prediction_per_row_after_warm_up() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = gmf_checkpoint(dir.path(), "gru");
    for (rows, expected) in [(99, 0), (150, 51)] {
        let stream = dir.path().join(format!("s{rows}.csv"));
        std::fs::write(&stream, stream_csv(rows)).unwrap();
        let out = ok(&["infer", "--model", s(&ckpt), "--stream", s(&stream), "--q", "m=70,h=1.7"]);
        let text = String::from_utf8_lossy(&out.stdout);
        assert_eq!(text.lines().count() - 1, expected, "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("warm-up"));
    }
}

#[test]
fn export_curves_and_bench_write_their_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = gmf_checkpoint(dir.path(), "gru");
    let trial = std::fs::read_dir(dir.path().join("corpus/trials")).unwrap().next().unwrap().unwrap().path();
    let curves = dir.path().join("curves.csv");
    ok(&[
        "export-curves", "--model", s(&ckpt), "--trial", s(&trial), "--out", s(&curves), "--subjects",
        s(&dir.path().join("corpus/subjects.csv")),
    ]);
    let text = std::fs::read_to_string(&curves).unwrap();
    assert!(text.starts_with("phase_pct,truth_nm_per_kg,pred_nm_per_kg,cycle_id\n"));
    assert_eq!((text.lines().count() - 1) % 101, 0);

    let csv = dir.path().join("lat.csv");
    ok(&[
        "bench", "--models", s(&ckpt), "--backbones", "ffn", "--rounds", "2", "--per-round", "20", "--warmup", "5", "--out",
        s(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("backbone,stage,mean_ms,std_ms,rounds,per_round\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn import_converts_a_mapped_layout() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    std::fs::write(raw.join("people.csv"), "id,kg,m\nP1,70,1.7\n").unwrap();
    let mut rows = String::from("t,hl,hr,mom\n");
    for i in 0..300 {
        let t = i as f64 / 100.0;
        rows.push_str(&format!("{t},{},{},{}\n", 20.0 * t.sin(), 20.0 * t.cos(), 35.0 * t.sin()));
    }
    std::fs::write(raw.join("p1.csv"), rows).unwrap();
    let map = dir.path().join("map.toml");
    std::fs::write(
        &map,
        "angle_scale = 0.017453292519943295\nmoment_per_kg = false\n\
[subjects]\nfile = \"people.csv\"\nid_column = \"id\"\nmass_column = \"kg\"\nheight_column = \"m\"\n\
[columns]\ntime = \"t\"\nangle_l = \"hl\"\nangle_r = \"hr\"\nmoment = \"mom\"\n\
[[trials]]\nsubject = \"P1\"\nspeed_mps = 1.1\nkinematics = \"p1.csv\"\n",
    )
    .unwrap();
    let out = dir.path().join("corpus");
    ok(&["import", "--raw", s(&raw), "--out", s(&out), "--map", s(&map)]);
    let trial = std::fs::read_to_string(out.join("trials/P1_1.10mps.csv")).unwrap();
    assert!(trial.contains("# sample_rate_hz=100"));
    assert!(std::fs::read_to_string(out.join("subjects.csv")).unwrap().contains("P1,70,1.7"));
}
