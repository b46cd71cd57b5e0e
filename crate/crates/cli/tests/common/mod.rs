//! Fixture files and a runner for the `spatinla` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// Unit-square study window.
pub const WINDOW: &str = r#"{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}"#;
/// A fault trace along the bottom edge.
pub const FAULT: &str = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"name":"f1"},"geometry":{"type":"LineString","coordinates":[[0,0],[1,0]]}}]}"#;
/// A plate boundary along the left edge.
pub const PLATE: &str = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[0,1]]}}]}"#;

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    /// A temp dir holding the window and source files.
    pub fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("window.geojson", WINDOW);
        ws.write("fault.geojson", FAULT);
        ws.write("plate.geojson", PLATE);
        ws
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, text: &str) -> PathBuf {
        let p = self.path(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, text).unwrap();
        p
    }

    pub fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }

    /// Runs the binary from the workspace dir.
    pub fn spatinla(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_spatinla"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    /// Like [`Workspace::spatinla`] but panics with stderr on failure.
    pub fn run(&self, args: &[&str]) -> String {
        let out = self.spatinla(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

/// Shared LGCP sections: inputs, a coarse mesh, the two distance covariates.
pub fn lgcp_header(workflow: &str) -> String {
    format!(
        r#"workflow = "{workflow}"
seed = 11

[input]
window = "window.geojson"
points = "data/points.csv"

[input.sources]
fault = "fault.geojson"
plate = "plate.geojson"

[mesh]
interior_edge = 0.2
exterior_edge = 0.4

[covariates]
D_f = ["fault"]
D_pb = ["plate"]

[criticism]
samples = 500
"#
    )
}

/// An LGCP simulation config; run it with `--out data`.
pub fn lgcp_simulation(intercept: f64, coefficients: &str) -> String {
    lgcp_header("simulate")
        + &format!(
            r#"
[simulate]
kind = "lgcp"
intercept = {intercept}
coefficients = {{ {coefficients} }}
"#
        )
}

/// Relative path to every file under `dir`, sorted.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Parsed CSV rows without the header.
pub fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}
