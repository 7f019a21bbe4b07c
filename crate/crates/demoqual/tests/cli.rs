use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use demoqual::artifact::{Lineage, Models};
use demoqual::config::RunConfig;
use demoqual::corpus_io::load_corpus;
use demoqual::output::Selection;

const SMALL: &[&str] = &[
    "steps=6",
    "critic_steps=6",
    "batch_size=4",
    "hidden=6",
    "latent_dim=4",
    "critic_hidden=8",
    "per_tier_count=3",
    "num_segments=20",
    "eval_segments_per_tier=16",
    "histogram_bins=5",
    "top_k=6",
];

fn run_bin(args: &[&str], sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demoqual"));
    cmd.args(args);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str], sets: &[&str]) {
    let out = run_bin(args, sets);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// gen -> train -> filter -> eval into `root`.
fn pipeline(root: &Path, sets: &[&str]) {
    let (d, m, f, e) = (root.join("data"), root.join("models"), root.join("filter"), root.join("eval"));
    ok(&["gen", "--out", p(&d)], sets);
    ok(&["train", "--out", p(&m), "--corpus", p(&d.join("known.jsonl"))], sets);
    ok(&["filter", "--out", p(&f), "--models", p(&m), "--corpus", p(&d.join("unknown.jsonl"))], sets);
    ok(
        &[
            "eval",
            "--out",
            p(&e),
            "--models",
            p(&m),
            "--corpus",
            p(&d.join("unknown_labeled.jsonl")),
            "--selection",
            p(&f.join("selection.json")),
        ],
        sets,
    );
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn default_gen_writes_900_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", p(dir.path())], &[]);
    let c = load_corpus(&dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(c.len(), 900);
    let known = load_corpus(&dir.path().join("known.jsonl")).unwrap();
    let unknown = load_corpus(&dir.path().join("unknown.jsonl")).unwrap();
    assert_eq!(known.len() + unknown.len(), 900);
    assert!(unknown.trajectories().iter().all(|t| t.label().is_none()));
}

#[test]
fn invalid_ladder_fails_before_generation() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run_bin(&["gen", "--out", p(&out_dir)], &["tiers=[\"only\"]"]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.join("corpus.jsonl").exists());
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 4\nper_tier_count = 2\nn_demonstrators = 3\n").unwrap();
    ok(&["gen", "--config", p(&cfg), "--seed", "9", "--out", p(dir.path())], &["n_demonstrators=2"]);
    let c = load_corpus(&dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(c.len(), 2 * 3 * 2);
    let text = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(header["run_config"].clone()).unwrap();
    assert_eq!((echoed.seed, echoed.n_demonstrators, echoed.per_tier_count), (9, 2, 2));

    let out = run_bin(&["gen", "--config", p(&dir.path().join("missing.toml")), "--out", p(dir.path())], &[]);
    assert_eq!(code(&out), 4);
    fs::write(&cfg, "seed = \"x\"\n").unwrap();
    let out = run_bin(&["gen", "--config", p(&cfg), "--out", p(dir.path())], &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), SMALL);
    pipeline(b.path(), SMALL);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 14);
    assert_eq!(fa, fb);
}

#[test]
fn zero_steps_still_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let sets: Vec<&str> = SMALL.iter().copied().chain(["steps=0", "critic_steps=0"]).collect();
    pipeline(dir.path(), &sets);
    let sel = Selection::parse(&fs::read_to_string(dir.path().join("filter/selection.json")).unwrap()).unwrap();
    assert_eq!(sel.selected.len(), 6);
    assert!(dir.path().join("eval/histogram.tsv").exists());
}

#[test]
fn ablation_rungs_train() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    ok(&["gen", "--out", p(&d)], SMALL);
    let known = d.join("known.jsonl");
    let rungs: [(&str, &[&str]); 4] = [
        ("pref", &["s1=false", "s2_initial=false", "s2_final=false", "time_warp=false", "position_encoding=false"]),
        ("s1", &["s2_initial=false", "s2_final=false", "time_warp=false", "position_encoding=false"]),
        ("pos", &["s2_initial=false", "s2_final=false", "time_warp=false"]),
        ("s2", &[]),
    ];
    for (name, flags) in rungs {
        let m = dir.path().join(name);
        let sets: Vec<&str> = SMALL.iter().chain(flags).copied().collect();
        ok(&["train", "--out", p(&m), "--corpus", p(&known)], &sets);
        let models = Models::load(&m).unwrap();
        assert_eq!(models.encoder.model.config.segments.position_encoding, name == "pos" || name == "s2");
        assert_eq!(m.join("preference_loss.tsv").exists(), name == "pref");
        assert_eq!(m.join("encoder_loss.tsv").exists(), name != "pref");
    }
}

#[test]
fn lineage_and_integrity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    pipeline(root, SMALL);
    let (d, m, f) = (root.join("data"), root.join("models"), root.join("filter"));

    // a critic from another run no longer matches the encoder
    let other = root.join("other");
    let seeded: Vec<&str> = SMALL.iter().copied().chain(["seed=1"]).collect();
    ok(&["train", "--out", p(&other), "--corpus", p(&d.join("known.jsonl"))], &seeded);
    let mixed = root.join("mixed");
    fs::create_dir(&mixed).unwrap();
    for name in ["encoder.json", "gmm.json"] {
        fs::copy(m.join(name), mixed.join(name)).unwrap();
    }
    fs::copy(other.join("critic.json"), mixed.join("critic.json")).unwrap();
    let out = run_bin(
        &["filter", "--out", p(&root.join("x")), "--models", p(&mixed), "--corpus", p(&d.join("unknown.jsonl"))],
        SMALL,
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lineage"));

    // eval against models the selection was not made with
    let eval = |models: &Path, corpus: &Path| {
        run_bin(
            &[
                "eval",
                "--out",
                p(&root.join("y")),
                "--models",
                p(models),
                "--corpus",
                p(corpus),
                "--selection",
                p(&f.join("selection.json")),
            ],
            SMALL,
        )
    };
    assert_eq!(code(&eval(&other, &d.join("unknown_labeled.jsonl"))), 3);
    assert_eq!(code(&eval(&m, &d.join("known.jsonl"))), 3);

    // edited model weights
    let text = fs::read_to_string(m.join("gmm.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["model"]["components"][0]["mean"] = serde_json::json!(123.0);
    fs::write(mixed.join("gmm.json"), v.to_string()).unwrap();
    fs::copy(m.join("critic.json"), mixed.join("critic.json")).unwrap();
    assert!(Models::load(&mixed).is_err());
}

#[test]
fn filter_rejects_oversized_top_k_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    pipeline(root, SMALL);
    let (d, m) = (root.join("data"), root.join("models"));
    let unknown = load_corpus(&d.join("unknown.jsonl")).unwrap();
    let too_many = format!("top_k={}", unknown.len() + 1);
    let sets: Vec<&str> = SMALL.iter().copied().chain([too_many.as_str()]).collect();
    let run = |corpus: &Path, sets: &[&str]| {
        run_bin(&["filter", "--out", p(&root.join("z")), "--models", p(&m), "--corpus", p(corpus)], sets)
    };
    assert_eq!(code(&run(&d.join("unknown.jsonl"), &sets)), 2);
    assert!(!root.join("z/selection.json").exists());

    let garbage = root.join("garbage.jsonl");
    fs::write(&garbage, "{\"format\":\"demoqual-corpus\"\n").unwrap();
    assert_eq!(code(&run(&garbage, SMALL)), 3);
    assert_eq!(code(&run(&root.join("absent.jsonl"), SMALL)), 4);
}

#[test]
fn oracle_selection_is_all_top_tier() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    pipeline(root, SMALL);
    let labeled = load_corpus(&root.join("data/unknown_labeled.jsonl")).unwrap();
    let made = Selection::parse(&fs::read_to_string(root.join("filter/selection.json")).unwrap()).unwrap();
    let top = labeled.ladder().top();
    let ids: Vec<String> =
        labeled.trajectories().iter().filter(|t| t.label() == Some(top)).map(|t| t.id().to_string()).collect();
    let n = ids.len();
    let oracle = Selection::new(&made.run_config, made.lineage.clone(), ids);
    let path = root.join("oracle.json");
    fs::write(&path, oracle.to_json()).unwrap();
    let e = root.join("oracle_eval");
    ok(
        &[
            "eval",
            "--out",
            p(&e),
            "--models",
            p(&root.join("models")),
            "--corpus",
            p(&root.join("data/unknown_labeled.jsonl")),
            "--selection",
            p(&path),
        ],
        SMALL,
    );
    let table = fs::read_to_string(e.join("confusion.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[1..], [format!("bad\t0\t0"), format!("okay\t0\t0"), format!("good\t{n}\t1")]);

    let empty = Selection::new(&made.run_config, Lineage::new(), vec![]);
    fs::write(&path, empty.to_json()).unwrap();
    let out = run_bin(
        &[
            "eval",
            "--out",
            p(&e),
            "--models",
            p(&root.join("models")),
            "--corpus",
            p(&root.join("data/unknown_labeled.jsonl")),
            "--selection",
            p(&path),
        ],
        SMALL,
    );
    assert_eq!(code(&out), 3);
}
