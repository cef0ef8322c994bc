//! CSV and JSON writers. CSV uses `.` as decimal separator, a header row
//! and newline-terminated rows; numbers use Rust's shortest round-trip
//! formatting, so equal values always produce equal bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ebin_core::dynamics::TimePath;
use ebin_core::field::codec::component_labels;

use crate::AppError;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// `t,point_index,<g components>[,<k components>]`, one row per time and
/// lattice point.
pub fn trajectory_csv(g: &TimePath, k: Option<&TimePath>) -> String {
    let n = g.lattice().dim();
    let mut header = vec!["t".to_string(), "point_index".to_string()];
    header.extend(component_labels("g", n));
    if k.is_some() {
        header.extend(component_labels("k", n));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (j, t) in g.grid().times().enumerate() {
        for p in 0..g.lattice().point_count() {
            write!(out, "{},{p}", num(t)).unwrap();
            for v in g.at(j).at(p).upper() {
                write!(out, ",{}", num(*v)).unwrap();
            }
            if let Some(k) = k {
                for v in k.at(j).at(p).upper() {
                    write!(out, ",{}", num(*v)).unwrap();
                }
            }
            out.push('\n');
        }
    }
    out
}

/// A header row followed by one row per record.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// The output directory and the files written to it, in order.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, AppError> {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<(), AppError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| AppError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
