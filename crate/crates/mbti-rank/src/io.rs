//! Line-delimited JSON records and the Kaggle CSV layout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mbti_rank_core::parse_type;
use mbti_rank_core::pipeline::{TeacherSample, UserRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}:{line}: {reason}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::FileNotFound(path.to_path_buf())
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn schema(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        IoError::Schema {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IoError::io(path, e))
}

/// Non-blank lines of a file with their one-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Deserializes every non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line).map_err(|e| IoError::schema(path, n, e.to_string()))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| IoError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads `{user_id, posts, label}` records. Labels must be one of the 16
/// codes and every record needs at least one post.
pub fn ingest(path: &Path) -> Result<Vec<UserRecord>, IoError> {
    let records: Vec<UserRecord> = read_jsonl(path)?;
    let lines = read_lines(path)?;
    for (record, (n, _)) in records.iter().zip(&lines) {
        if record.posts.is_empty() {
            return Err(IoError::schema(path, *n, "posts is empty"));
        }
    }
    Ok(records)
}

/// Reads `{user_id, completion}` teacher outputs.
pub fn read_teacher(path: &Path) -> Result<Vec<TeacherSample>, IoError> {
    read_jsonl(path)
}

/// Converts the public Kaggle layout: a CSV with `type` and `posts` columns,
/// posts joined by `|||`. User ids are the one-based data row numbers.
pub fn convert_kaggle_csv(path: &Path) -> Result<Vec<UserRecord>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| IoError::schema(path, 1, format!("missing column {name:?}")))
    };
    let (type_col, posts_col) = (col("type")?, col("posts")?);

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(i + 2, |p| p.line() as usize);
        let label_text = row.get(type_col).unwrap_or_default();
        let label = parse_type(label_text)
            .map_err(|e| IoError::schema(path, line, e.to_string()))?;
        let raw = row.get(posts_col).unwrap_or_default().trim();
        let raw = raw.strip_prefix('\'').unwrap_or(raw);
        let raw = raw.strip_suffix('\'').unwrap_or(raw);
        let posts: Vec<String> = raw
            .split("|||")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(String::from)
            .collect();
        if posts.is_empty() {
            return Err(IoError::schema(path, line, "posts is empty"));
        }
        records.push(UserRecord {
            user_id: (i + 1).to_string(),
            posts,
            label,
        });
    }
    Ok(records)
}
