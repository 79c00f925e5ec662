use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nscr_core::io::{load_bundle, save_checkpoint, Checkpoint, LoadOptions, ModelState, CHECKPOINT_FORMAT_VERSION};
use nscr_core::{HyperParams, Matrix};

fn nscr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nscr"))
        .args(args)
        .env_remove("NSCR_K")
        .env_remove("NSCR_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_bundle(dir: &Path, seed: &str) -> PathBuf {
    let d = dir.join(format!("data{seed}"));
    let out = nscr(&["generate", "--preset", "small", "--seed", seed, "--out", s(&d)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    d
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_bundle(tmp.path(), "7");
    let b = tmp.path().join("again");
    assert_eq!(code(&nscr(&["generate", "--preset", "small", "--seed", "7", "--out", s(&b)])), 0);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=7"));
    assert!(manifest.contains("command=generate"));
}

#[test]
fn zero_bridge_users_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nscr(&["generate", "--bridge-users", "0", "--out", s(&tmp.path().join("d"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(code(&nscr(&["train", "bogus-model"])), 1);
    assert_eq!(code(&nscr(&["frobnicate"])), 1);
    assert_eq!(code(&nscr(&["--help"])), 0);
}

#[test]
fn missing_or_corrupt_data_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = nscr(&["train", "itempop", "--data", s(&missing), "--out", s(&tmp.path().join("m.json"))]);
    assert_eq!(code(&out), 2);

    let d = small_bundle(tmp.path(), "1");
    fs::write(d.join("interactions.tsv"), "user_id\titem_id\ttimestamp\nu0\ti0\tnot-a-number\n").unwrap();
    let out = nscr(&["train", "itempop", "--data", s(&d), "--out", s(&tmp.path().join("m.json"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("interactions.tsv:2"));
}

#[test]
fn train_reruns_reproduce_every_output_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "2");
    for model in ["nscr", "nscr-a", "mf", "sr", "sr-a", "sfm", "sfm-a", "itempop"] {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let dir = tmp.path().join(format!("{model}-{run}"));
            let ck = dir.join("m.json");
            let out = nscr(&["train", model, "--data", s(&d), "--out", s(&ck), "--iterations", "3", "--seed", "4"]);
            assert_eq!(code(&out), 0, "{model}: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push(dir_bytes(&dir));
        }
        assert_eq!(outputs[0], outputs[1], "{model}");
        let names: Vec<_> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["m.json", "m.json.history.tsv", "m.json.manifest"]);
    }
}

#[test]
fn flags_beat_env_beats_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "3");
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "k=6\nlayers=1\nbatch=64\n").unwrap();
    let ck = tmp.path().join("m.json");
    let out = Command::new(env!("CARGO_BIN_EXE_nscr"))
        .args(["train", "nscr", "--data", s(&d), "--out", s(&ck), "--iterations", "1"])
        .args(["--config", s(&conf), "--batch", "32"])
        .env("NSCR_LAYERS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.path().join("m.json.manifest")).unwrap();
    assert!(manifest.contains("\nk=6\n"), "{manifest}");
    assert!(manifest.contains("\nlayers=0\n"), "{manifest}");
    assert!(manifest.contains("\nbatch=32\n"), "{manifest}");
    assert!(manifest.contains("\nlr=0.1\n"), "{manifest}");
}

#[test]
fn non_finite_training_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "4");
    let ck = tmp.path().join("m.json");
    let out = nscr(&["train", "nscr", "--data", s(&d), "--out", s(&ck), "--lr", "1e300", "--iterations", "3"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ck.exists());
}

fn oracle_checkpoint(data_dir: &Path, path: &Path) {
    let data = load_bundle(data_dir, &LoadOptions::default()).unwrap();
    let scores = Matrix::from_fn(data.num_users(), data.num_items(), |u, i| {
        if data.interactions.contains(u, i) {
            1.0
        } else {
            0.0
        }
    });
    let ck = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: "oracle".into(),
        hyperparams: HyperParams::default(),
        config: Default::default(),
        split_seed: 0,
        vocab: data.vocab.clone(),
        bridge_pairs: data.social.bridge_pairs().to_vec(),
        catalog: data.attributes.clone(),
        state: ModelState::Scores { scores },
    };
    save_checkpoint(path, &ck).unwrap();
}

#[test]
fn perfect_oracle_scores_auc_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "5");
    let ck = tmp.path().join("oracle.json");
    oracle_checkpoint(&d, &ck);
    let rep = tmp.path().join("rep");
    let out = nscr(&["evaluate", "--checkpoint", s(&ck), "--data", s(&d), "--out", s(&rep)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = fs::read_to_string(rep.join("report.tsv")).unwrap();
    let mean = tsv.lines().find(|l| l.starts_with("mean\t")).unwrap();
    assert_eq!(mean.split('\t').nth(1), Some("1"));
    assert!(tsv.starts_with("user\tauc\trecall_at_5\n"));
    assert!(fs::read_to_string(rep.join("report.txt")).unwrap().contains("mean"));
}

#[test]
fn compare_reports_t_and_p() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "6");
    let oracle = tmp.path().join("oracle.json");
    oracle_checkpoint(&d, &oracle);
    let pop = tmp.path().join("pop.json");
    assert_eq!(code(&nscr(&["train", "itempop", "--data", s(&d), "--out", s(&pop), "--seed", "0"])), 0);
    let out = nscr(&["evaluate", "--compare", s(&oracle), s(&pop), "--data", s(&d)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model_a\tmodel_b\tusers\tmean_auc_a\tmean_auc_b\tt\tp\tdf"));
    let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let t: f64 = row[5].parse().unwrap();
    let p: f64 = row[6].parse().unwrap();
    assert!(t > 0.0 && (0.0..=1.0).contains(&p), "{row:?}");
}

#[test]
fn sweep_writes_one_row_per_point_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "8");
    let out_a = tmp.path().join("a/layers.tsv");
    let args = |o: &Path| {
        vec![
            "sweep".to_string(), "layers".into(), "--grid".into(), "0,1,2".into(), "--seeds".into(), "0,1".into(),
            "--data".into(), s(&d).into(), "--iterations".into(), "2".into(), "--out".into(), s(o).into(),
        ]
    };
    let run = |o: &Path, jobs: &str| {
        let mut a = args(o);
        a.extend(["--jobs".to_string(), jobs.to_string()]);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        nscr(&a)
    };
    assert_eq!(code(&run(&out_a, "1")), 0);
    let text = fs::read_to_string(&out_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(text.starts_with("layers\tseed\tauc\trecall_at_5\tsocial_auc\n"));

    let out_b = tmp.path().join("b/layers.tsv");
    assert_eq!(code(&run(&out_b, "4")), 0);
    assert_eq!(dir_bytes(out_a.parent().unwrap()), dir_bytes(out_b.parent().unwrap()));

    let empty = nscr(&["sweep", "dropout", "--grid", "", "--data", s(&d), "--out", s(&tmp.path().join("e.tsv"))]);
    assert_eq!(code(&empty), 1);
}

#[test]
fn recommend_ranks_and_validates_user() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "9");
    let ck = tmp.path().join("m.json");
    assert_eq!(code(&nscr(&["train", "nscr", "--data", s(&d), "--out", s(&ck), "--iterations", "2"])), 0);

    let top = nscr(&["recommend", "--checkpoint", s(&ck), "--user", "s12", "--top", "5"]);
    assert_eq!(code(&top), 0);
    let text = stdout(&top);
    assert_eq!(text.lines().count(), 6);
    let scores: Vec<f64> = text.lines().skip(1).map(|l| l.split('\t').nth(2).unwrap().parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(stdout(&nscr(&["recommend", "--checkpoint", s(&ck), "--user", "s12", "--top", "5"])), text);

    let all = nscr(&["recommend", "--checkpoint", s(&ck), "--user", "s12", "--top", "100000"]);
    assert_eq!(stdout(&all).lines().count(), 1 + 30);

    let unknown = nscr(&["recommend", "--checkpoint", s(&ck), "--user", "nobody"]);
    assert_ne!(code(&unknown), 0);
    let err = String::from_utf8_lossy(&unknown.stderr);
    assert!(err.contains("'s0'") && err.contains("'s59'"), "{err}");
}

#[test]
fn baselines_only_recommend_for_bridge_users() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_bundle(tmp.path(), "10");
    let ck = tmp.path().join("mf.json");
    assert_eq!(code(&nscr(&["train", "mf", "--data", s(&d), "--out", s(&ck), "--iterations", "2"])), 0);
    let bridge = fs::read_to_string(d.join("bridge.tsv")).unwrap();
    let bridge_user = bridge.lines().nth(1).unwrap().split('\t').next().unwrap().to_string();
    assert_eq!(code(&nscr(&["recommend", "--checkpoint", s(&ck), "--user", &bridge_user])), 0);
    let social = fs::read_to_string(d.join("social_users.vocab.tsv")).unwrap();
    let other = social
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap())
        .find(|id| !bridge.lines().any(|b| b.starts_with(&format!("{id}\t"))))
        .unwrap();
    assert_ne!(code(&nscr(&["recommend", "--checkpoint", s(&ck), "--user", other])), 0);
}
