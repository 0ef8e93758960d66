//! Artifact writers. Every file starts with a `# config <hash>` line so
//! any output can be traced back to the exact resolved configuration
//! that produced it. Numeric cells carry 17 significant digits (enough
//! to round-trip an f64) and files use LF line endings unconditionally.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::model::{Result, RgError};

/// Full-precision cell format: 17 significant digits, scientific.
pub fn sig(x: f64) -> String {
    format!("{x:.16e}")
}

/// Integer cell.
pub fn int(x: i64) -> String {
    x.to_string()
}

/// A CSV artifact under construction.
pub struct Csv {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Csv {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len(), "ragged CSV row");
        self.rows.push(cells);
    }

    pub fn render(&self, config_hash: u64) -> String {
        let mut out = format!("# config {config_hash:016x}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, config_hash: u64) -> Result<()> {
        write_bytes(path, self.render(config_hash).as_bytes())
    }
}

/// Plain-text artifact (summaries, ledgers) with the same traceability
/// header as the CSVs.
pub fn write_text(path: &Path, config_hash: u64, body: &str) -> Result<()> {
    let mut out = format!("# config {config_hash:016x}\n");
    out.push_str(body);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| RgError::Config(format!("create {}: {e}", dir.display())))?;
    }
    let mut f = fs::File::create(path)
        .map_err(|e| RgError::Config(format!("create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| RgError::Config(format!("write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_round_trips_f64() {
        for &x in &[1.0, -0.3333333333333333, 6.6313e-3, 1e-300, std::f64::consts::PI] {
            let s = sig(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(sig(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout_and_lf_only() {
        let mut c = Csv::new(["m2", "chi"]);
        c.push(vec![sig(1e-3), sig(997.2)]);
        c.push(vec![sig(1e-4), sig(9950.1)]);
        let text = c.render(0xdead_beef);
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "# config 00000000deadbeef");
        assert_eq!(lines[1], "m2,chi");
        assert!(lines[2].starts_with("1.0000000000000000e-3,"));
        assert_eq!(lines.last(), Some(&""), "file ends with newline");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn text_artifact_gets_header_and_final_newline() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("note.txt");
        write_text(&p, 7, "hello").unwrap();
        let got = std::fs::read_to_string(&p).unwrap();
        assert_eq!(got, "# config 0000000000000007\nhello\n");
    }
}
