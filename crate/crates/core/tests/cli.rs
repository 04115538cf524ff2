use std::fs;
use std::path::Path;
use std::process::Command;

use condot::cli::config_hash;
use condot::experiments::bench2d::Bench2dConfig;

fn condot(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_condot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_BENCH: &str = "family = \"two_moons\"\nn_train = 1500\nn_eval = 400\nseed = 3\n";

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "n_train = 100\nepsilon_typo = 0.1\n",
    );
    let out = condot(&["bench2d", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    let out = condot(&["darcy", "simulate", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "neg.toml", "epsilon = -1.0\n");
    let out = condot(&["bench2d", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bench2d_outputs_are_stamped_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_BENCH);
    let hash = config_hash(&toml::from_str::<Bench2dConfig>(SMALL_BENCH).unwrap());
    let mut summaries = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = condot(&["bench2d", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        for name in [
            "dataset.csv",
            "slice0_plugin.csv",
            "slice2_slab.csv",
            "summary.csv",
        ] {
            let text = fs::read_to_string(out_dir.join(name)).unwrap();
            let mut lines = text.lines();
            assert_eq!(
                lines.next().unwrap(),
                format!("# config_sha256={hash} seed=3"),
                "{name}"
            );
            assert!(
                !lines.next().unwrap().starts_with('#'),
                "{name} has a header"
            );
        }
        summaries.push(fs::read_to_string(out_dir.join("summary.csv")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
    assert!(summaries[0]
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("slice,y0,"));
}

#[test]
fn config_hash_tracks_content() {
    let a = Bench2dConfig::default();
    let b = Bench2dConfig {
        seed: 1,
        ..Default::default()
    };
    assert_eq!(config_hash(&a), config_hash(&a.clone()));
    assert_ne!(config_hash(&a), config_hash(&b));
    assert_eq!(config_hash(&a).len(), 64);
}

#[test]
fn darcy_simulate_writes_training_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "darcy.toml",
        "grid = 8\nsensors_per_side = 3\nn_modes = 4\nn_train = 12\n",
    );
    let out_dir = dir.path().join("out");
    let out = condot(&[
        "darcy",
        "simulate",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("training.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config_sha256="));
    // comment, header, one row per pair
    assert_eq!(lines.len(), 2 + 12);
    assert_eq!(lines[2].split(',').count(), 9 + 64);
}
