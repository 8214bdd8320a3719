//! Runs the `jumprl` binary end to end.

use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
seed = 7

[simulate]
market = "hedging-truth"
n_paths = 50

[train-mv-offline]
market = "sp500-mjd"
iterations = 3
episodes_per_iter = 8

[train-mv-online]
market = "sp500-bs"
iterations = 3

[convergence]
n_steps = [2, 4, 8, 16]
n_paths = 4000

[martingale-check]
n_episodes = 500

[price]
market = "hedging-truth"
spots = [90.0, 100.0, 110.0]
taus = [0.25]
"#;

fn jumprl(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_jumprl"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .status()
        .expect("spawn jumprl")
        .code()
        .expect("exit code")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, CONFIG).unwrap();
    for cmd in [
        "simulate",
        "train-mv-offline",
        "train-mv-online",
        "convergence",
        "martingale-check",
        "price",
    ] {
        let one = dir.path().join(format!("{cmd}-1"));
        let three = dir.path().join(format!("{cmd}-3"));
        let a = jumprl(&[cmd, "--threads", "1"], &config, &one);
        let b = jumprl(&[cmd, "--threads", "3"], &config, &three);
        assert!(a <= 1 && a == b, "{cmd}: exit codes {a} and {b}");
        let (fa, fb) = (read_dir_sorted(&one), read_dir_sorted(&three));
        assert!(
            fa.iter().any(|(n, _)| n == "manifest.json"),
            "{cmd}: no manifest"
        );
        assert_eq!(fa, fb, "{cmd}: outputs differ between thread counts");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, CONFIG).unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert_eq!(jumprl(&["simulate", "--seed", seed], &config, &out), 0);
        fs::read(out.join("paths.csv")).unwrap()
    };
    let (a, b, c) = (run("7", "a"), run("8", "b"), run("7", "c"));
    assert_eq!(a, c);
    assert_ne!(a, b);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("c.toml");
    fs::write(&good, CONFIG).unwrap();
    let out = dir.path().join("out");

    assert_eq!(jumprl(&["no-such-command"], &good, &out), 2);
    assert_eq!(
        jumprl(&["price"], &dir.path().join("missing.toml"), &out),
        3
    );

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[price]\nmarket = \"sp500-bs\"\nspots = [-1.0]\n").unwrap();
    assert_eq!(jumprl(&["price"], &bad, &out), 3);
    fs::write(&bad, "[price]\nunknown_key = 1\n").unwrap();
    assert_eq!(jumprl(&["price"], &bad, &out), 3);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(jumprl(&["price"], &good, &blocker.join("sub")), 4);

    fs::write(
        &bad,
        "[martingale-check]\nn_episodes = 500\nq_shift = 0.5\n",
    )
    .unwrap();
    assert_eq!(jumprl(&["martingale-check"], &bad, &out), 1);
}
