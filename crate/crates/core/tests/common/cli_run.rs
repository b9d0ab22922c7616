//! Driving the `ssml` binary from tests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

pub const TINY: &str = "\
dataset = synthetic:12x6x14x14x3
train_classes = 6
filters = 4
inner_steps = 1
eval_inner_steps = 2
tasks_per_step = 2
pretrain_steps = 4
outer_steps = 4
eval_episodes = 5
eval_every = 2
second_order = false
temperature = 1
repeats = 2
";

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn ssml(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_ssml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn workdir(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), config).unwrap();
    dir
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let r = ssml(dir, args);
    assert_eq!(r.code, 0, "{args:?}\n{}\n{}", r.stdout, r.stderr);
    r.stdout
}

/// Every file under `root` with its bytes.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in walk(root) {
        let rel = entry.strip_prefix(root).unwrap().display().to_string();
        files.insert(rel, fs::read(&entry).unwrap());
    }
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

/// Runs every file-writing subcommand twice on the tiny config in fresh
/// directories and lists files whose bytes differ.
pub fn determinism_problems() -> Vec<String> {
    let mut problems = Vec::new();
    let png = {
        let dir = TempDir::new().unwrap();
        let img = ssml::dataset::synthetic_dataset(1, 1, 16, 16, 3, 5).unwrap();
        let path = dir.path().join("in.png");
        img.image(0).save_png(&path).unwrap();
        fs::read(path).unwrap()
    };
    let sweep = format!("{TINY}temperatures = 1,10\n");
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("pretrain", vec!["--config", "run.cfg", "--out", "o", "pretrain"]),
        (
            "train",
            vec!["--config", "run.cfg", "--out", "o", "--set", "init=pretrain", "train"],
        ),
        (
            "relation",
            vec!["--config", "run.cfg", "--out", "o", "--set", "model=relation", "train"],
        ),
        ("compare", vec!["--config", "run.cfg", "--out", "o", "compare"]),
        ("sweep", vec!["--config", "run.cfg", "--out", "o", "sweep-temp"]),
        (
            "preview",
            vec!["--out", "o", "--seed", "3", "augment-preview", "in.png", "--count", "4"],
        ),
    ];
    for (name, args) in runs {
        let snaps: Vec<_> = (0..2)
            .map(|_| {
                let dir = workdir(&sweep);
                fs::write(dir.path().join("in.png"), &png).unwrap();
                ok(dir.path(), &args);
                if args.last() == Some(&"train") {
                    let mut eval = args.clone();
                    *eval.last_mut().unwrap() = "eval";
                    ok(dir.path(), &eval);
                }
                snapshot(&dir.path().join("o"))
            })
            .collect();
        if snaps[0].is_empty() {
            problems.push(format!("{name} wrote nothing"));
        }
        if snaps[0].keys().ne(snaps[1].keys()) {
            problems.push(format!("{name}: different file sets"));
        }
        for (file, bytes) in &snaps[0] {
            if snaps[1].get(file) != Some(bytes) {
                problems.push(format!("{name}: {file} differs between runs"));
            }
        }
    }
    problems
}
