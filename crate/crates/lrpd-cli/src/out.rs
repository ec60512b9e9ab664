//! Output-directory resolution and atomic file writes.

use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LRPD_OUT_DIR";

/// Flag value if given, else `$LRPD_OUT_DIR`, else the current directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Writes through a temp file in the same directory plus rename, so readers
/// never observe a partially written file.
pub fn write_atomic(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, dir.join(name))
}

/// Dense matrix as bare CSV rows, shortest-roundtrip float formatting.
pub fn matrix_csv(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&format!("{}", entry(i, j)));
        }
        s.push('\n');
    }
    s
}

/// One value per line.
pub fn vector_csv(len: usize, entry: impl Fn(usize) -> f64) -> String {
    let mut s = String::new();
    for i in 0..len {
        s.push_str(&format!("{}\n", entry(i)));
    }
    s
}
