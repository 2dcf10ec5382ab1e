//! Plain-text table files shared by ensembles, maps, profiles and fit reports.
//!
//! Every file starts with a comment line `# fluxens <kind> v<version>`
//! followed by `key=value` tokens (seed and similar). Further `#` lines may
//! carry more tokens. Then comes a CSV column header and numeric rows. Floats
//! are written as the shortest decimal that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Shortest round-trip decimal for `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `contents` to `path` through a temporary sibling and a rename,
/// creating parent directories as needed.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Builder for the text of a table file.
pub struct TableWriter {
    out: String,
}

impl TableWriter {
    pub fn new(kind: &str, version: u32, meta: &[(&str, String)], columns: &[&str]) -> Self {
        let mut out = format!("# fluxens {kind} v{version}");
        for (k, v) in meta {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        out.push_str(&columns.join(","));
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn numeric_row(&mut self, values: &[f64]) {
        let fields: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.row(&fields);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Parsed table file: header tokens and numeric rows with their line numbers.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    pub fn parse_error(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            reason: reason.into(),
        }
    }

    /// Header value parsed as `T`, if present.
    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.meta.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.parse_error(1, format!("bad header value {key}={v}"))),
        }
    }
}

/// Reads a table of kind `kind` (any version up to `max_version`) whose
/// columns must be exactly `columns`. Non-numeric fields are rejected except
/// `true`/`false`, read as 1 and 0.
pub fn read_table(path: &Path, kind: &str, max_version: u32, columns: &[&str]) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut meta = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    let first = lines.next().map(|(_, l)| l).unwrap_or_default();
    let mut tokens = first.split_whitespace();
    let prefix: Vec<&str> = tokens.by_ref().take(4).collect();
    let version_ok = prefix
        .get(3)
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .is_some_and(|v| (1..=max_version).contains(&v));
    if prefix.len() < 4 || prefix[0] != "#" || prefix[1] != "fluxens" || prefix[2] != kind || !version_ok {
        return Err(perr(1, format!("expected header '# fluxens {kind} v1'")));
    }
    let mut absorb = |tokens: std::str::SplitWhitespace<'_>| {
        for t in tokens {
            if let Some((k, v)) = t.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
    };
    absorb(tokens);
    while let Some((_, l)) = lines.peek() {
        if let Some(rest) = l.strip_prefix('#') {
            absorb(rest.split_whitespace());
            lines.next();
        } else {
            break;
        }
    }
    let body_start = lines.peek().map(|(i, _)| *i).unwrap_or(text.lines().count());
    let body: String = text.lines().skip(body_start).collect::<Vec<_>>().join("\n");

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| perr(body_start + 1, e.to_string()))?
        .clone();
    let found: Vec<&str> = header.iter().collect();
    if found != columns {
        return Err(perr(
            body_start + 1,
            format!("expected columns {}, found {}", columns.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + body_start;
            perr(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + body_start;
        let values = record
            .iter()
            .map(|f| match f {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                _ => f.parse::<f64>().map_err(|_| perr(line, format!("not a number: '{f}'"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    Ok(Table {
        path: path.to_path_buf(),
        meta,
        rows,
    })
}
