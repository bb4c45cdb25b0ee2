//! CSV emission. Every file opens with a config-fingerprint comment so equal
//! settings reproduce byte-identical output.

use std::path::Path;

use anyhow::{Context, Result};

pub fn write_csv(path: &Path, fingerprint: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 64 + 256);
    text.push_str("# ");
    text.push_str(fingerprint);
    text.push('\n');
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}
