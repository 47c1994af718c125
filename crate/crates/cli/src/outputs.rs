//! Output-directory plumbing.
//!
//! Every file a subcommand writes goes through [`OutputDir`], which confines
//! writes to the configured directory: names must be bare file names, so no
//! path in a config or flag can escape it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        assert!(
            !name.is_empty() && !name.contains(['/', '\\']) && name != "..",
            "output names are bare file names"
        );
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> io::Result<()> {
        fs::write(self.path(name), text)
    }
}

/// Assemble a CSV from a pinned header and preformatted rows, LF line ends.
pub fn csv_text(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::with_capacity(4096);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_lf_line_ends_and_trailing_newline() {
        let text = csv_text("a,b", vec!["1,2".to_string(), "3,4".to_string()]);
        assert_eq!(text, "a,b\n1,2\n3,4\n");
    }

    #[test]
    #[should_panic(expected = "bare file names")]
    fn path_separators_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        let _ = out.path("../escape.csv");
    }
}
