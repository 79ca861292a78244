#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small enough that pretraining takes well under a second.
pub const SMALL: &str = r#"
n_classes = 4
test_per_class = 5
pretrain_per_class = 10
heldout_per_class = 4
clip_seconds = 0.25
max_epochs = 4
min_epochs = 1
target_accuracy = 0.0
embed_dim = 16
token_dim = 16
hidden_dim = 16
steps_per_batch = 2
lr = 0.01
"#;

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        std::fs::write(ws.path("small.toml"), SMALL).unwrap();
        ws
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mcgtta")).current_dir(self.dir.path()).args(args).output().unwrap()
    }

    /// Runs and insists on success.
    pub fn ok(&self, args: &[&str]) -> serde_json::Value {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }

    /// Pretrained model plus labeled and unlabeled copies of the shifted test set.
    pub fn prepared(&self) -> &Self {
        self.ok(&["pretrain", "--config", "small.toml", "--out", "model.bin"]);
        self.ok(&["generate", "--config", "small.toml", "--out", "data"]);
        self.ok(&["generate", "--config", "small.toml", "--out", "blind", "--no-labels"]);
        self
    }

    pub fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// The stderr error line of a failed run.
pub fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("not a JSON error line: {text}"))
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|x| x.unwrap().iter().map(String::from).collect()));
    rows
}
