//! Config echo and all-or-nothing output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Identifies the tool, command and effective configuration of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Echo {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
}

impl Echo {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        Self {
            tool: "voi",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
        }
    }

    pub fn of<T: Serialize>(command: &'static str, config: &T) -> Self {
        Self::new(
            command,
            serde_json::to_value(config).expect("config serializes"),
        )
    }

    /// Header lines for CSV outputs, without the `# ` prefix.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("{} {} {}", self.tool, self.version, self.command),
            format!("config {}", self.config),
        ]
    }

    pub fn write_comments<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for line in self.comment_lines() {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }
}

/// JSON document with the echo under `"echo"` and `body` flattened beside it.
pub fn json_with_echo<T: Serialize>(echo: &Echo, body: &T) -> Vec<u8> {
    let mut doc = serde_json::Map::new();
    doc.insert(
        "echo".into(),
        serde_json::to_value(echo).expect("echo serializes"),
    );
    match serde_json::to_value(body).expect("body serializes") {
        serde_json::Value::Object(map) => doc.extend(map),
        other => {
            doc.insert("result".into(), other);
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&serde_json::Value::Object(doc)).expect("json");
    bytes.push(b'\n');
    bytes
}

/// A fully written temporary file waiting to be renamed into place.
pub struct Staged {
    path: PathBuf,
    tmp: NamedTempFile,
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub fn stage(path: &Path, bytes: &[u8]) -> Result<Staged, CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(write_err(path))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(write_err(path))?;
    tmp.write_all(bytes).map_err(write_err(path))?;
    tmp.flush().map_err(write_err(path))?;
    Ok(Staged {
        path: path.to_path_buf(),
        tmp,
    })
}

/// Renames every staged file into place. Only called once all of them have
/// been written, so a failed computation never leaves outputs behind.
pub fn commit(files: Vec<Staged>) -> Result<Vec<PathBuf>, CliError> {
    files
        .into_iter()
        .map(|s| {
            s.tmp.persist(&s.path).map_err(|e| CliError::Write {
                path: s.path.clone(),
                source: e.error,
            })?;
            Ok(s.path)
        })
        .collect()
}

pub fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let staged = files
        .iter()
        .map(|(p, b)| stage(p, b))
        .collect::<Result<Vec<_>, _>>()?;
    commit(staged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout() {
        #[derive(Serialize)]
        struct Body {
            x: u32,
        }
        let echo = Echo::new("demo", serde_json::json!({"seed": 3}));
        let v: serde_json::Value =
            serde_json::from_slice(&json_with_echo(&echo, &Body { x: 1 })).unwrap();
        assert_eq!(v["echo"]["command"], "demo");
        assert_eq!(v["echo"]["config"]["seed"], 3);
        assert_eq!(v["x"], 1);
    }

    #[test]
    fn staged_files_appear_only_on_commit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.txt");
        let staged = stage(&path, b"hello").unwrap();
        assert!(!path.exists());
        commit(vec![staged]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
    }

    #[test]
    fn comments() {
        let echo = Echo::new("acf", serde_json::json!({"a": 1}));
        let mut buf = Vec::new();
        echo.write_comments(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# voi "));
        assert!(text.contains("# config {\"a\":1}\n"));
    }
}
