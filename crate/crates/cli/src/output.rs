//! Staged artifacts: nothing reaches the output directory until a command
//! has finished.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.push((name.into(), body.into()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.0.clone()).collect()
    }

    /// Writes every file to a staging directory next to `out`, then moves
    /// them into place.
    pub fn commit(&self, out: &Path, manifest: &Manifest) -> std::io::Result<()> {
        std::fs::create_dir_all(out)?;
        let staging = out.join(format!(".staging-{}", std::process::id()));
        std::fs::create_dir_all(&staging)?;
        let result = (|| {
            let manifest = toml::to_string(manifest).expect("manifest serializes");
            let all = self.files.iter().map(|(n, b)| (n.as_str(), b.as_slice()));
            let all = all.chain(std::iter::once(("manifest.toml", manifest.as_bytes())));
            for (name, body) in all.clone() {
                std::fs::write(staging.join(name), body)?;
            }
            for (name, _) in all {
                std::fs::rename(staging.join(name), out.join(name))?;
            }
            Ok(())
        })();
        let _ = std::fs::remove_dir_all(&staging);
        result
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trials: usize,
    pub threads: usize,
    pub anderson_cli: String,
    pub anderson_core: String,
    pub created_unix: u64,
    pub files: Vec<String>,
    pub config: toml::Table,
}

impl Manifest {
    pub fn created_now() -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// Row-major plain-text grid of node values, one row per `y` index.
pub fn grid_text(values: &[f64], shape: [usize; 2]) -> String {
    let mut s = String::new();
    for row in values.chunks(shape[0]).take(shape[1]) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Row-major grid of integer labels; `-1` for unlabelled sites.
pub fn label_text(labels: &[Option<usize>], shape: [usize; 2]) -> String {
    let mut s = String::new();
    for row in labels.chunks(shape[0]).take(shape[1]) {
        let line: Vec<String> = row.iter().map(|l| l.map_or("-1".into(), |v| v.to_string())).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Headered CSV from already formatted cells.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    s
}

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}
