//! Output directory with atomic writes and a digest manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Fixed-width scientific notation used by every numeric table.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Tab-separated table built row by row.
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join("\t");
        text.push('\n');
        Table { text, columns: header.len() }
    }

    /// Header preceded by one `#` metadata line.
    pub fn with_meta(meta: &str, header: &[&str]) -> Self {
        let mut t = Table::new(header);
        t.text.insert_str(0, &format!("# {meta}\n"));
        t
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join("\t"));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.to_string(), sha256: hex_digest(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    /// Writes `manifest.txt` last; it lists every file written so far.
    pub fn finish(self, header: &[(&str, String)]) -> io::Result<Vec<FileEntry>> {
        let mut text = String::new();
        for (k, v) in header {
            let _ = writeln!(text, "{k} = {}", v.replace('\n', " "));
        }
        let mut files = self.files;
        files.sort_by(|a, b| a.name.cmp(&b.name));
        for f in &files {
            let _ = writeln!(text, "file = {}\t{}\t{}", f.name, f.sha256, f.bytes);
        }
        write_atomic(&self.dir.join("manifest.txt"), text.as_bytes())?;
        Ok(files)
    }
}
