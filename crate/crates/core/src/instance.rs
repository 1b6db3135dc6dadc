//! Instance sets and their CSV representation.
//!
//! Files start with optional `# key: value` metadata lines (`split`, `descriptor`),
//! followed by a header row and one instance per line.

use std::fmt::Debug;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn stream_index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Usage(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

/// A per-benchmark context record with a fixed CSV column schema.
pub trait InstanceRecord: Clone + Debug + PartialEq + Send + Sync + 'static {
    fn id(&self) -> &str;

    /// Header for a file holding `instances`. Errors when they cannot share one schema.
    fn csv_header(instances: &[Self]) -> Result<Vec<String>>;

    fn to_csv_row(&self) -> Vec<String>;

    /// Parses one data row. The returned message is wrapped with file and line by the caller.
    fn from_csv_row(header: &[String], row: &[String]) -> std::result::Result<Self, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet<I> {
    pub instances: Vec<I>,
    pub split: Split,
    pub descriptor: String,
}

impl<I: InstanceRecord> InstanceSet<I> {
    pub fn new(instances: Vec<I>, split: Split, descriptor: impl Into<String>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::config("instances", "instance sets must be non-empty"));
        }
        Ok(InstanceSet {
            instances,
            split,
            descriptor: descriptor.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.instances.iter().map(|i| i.id().to_string()).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        if self.instances.is_empty() {
            return Err(Error::config("instances", "instance sets must be non-empty"));
        }
        let mut out = String::new();
        out.push_str(&format!("# split: {}\n", self.split.as_str()));
        if !self.descriptor.is_empty() {
            out.push_str(&format!("# descriptor: {}\n", self.descriptor.replace('\n', " ")));
        }
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        let header = I::csv_header(&self.instances)?;
        let csv_err = |e: csv::Error| Error::Numeric(format!("csv encoding failed: {e}"));
        writer.write_record(&header).map_err(csv_err)?;
        for inst in &self.instances {
            writer.write_record(inst.to_csv_row()).map_err(csv_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Numeric(format!("csv encoding failed: {e}")))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let text = self.to_csv_string()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    /// Parses file contents; `origin` labels error messages.
    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut split = Split::Train;
        let mut descriptor = String::new();
        let mut meta_lines = 0u64;
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            meta_lines += 1;
            if let Some((key, value)) = rest.split_once(':') {
                match key.trim() {
                    "split" => split = value.trim().parse().map_err(|e: Error| parse_err(meta_lines, e.to_string()))?,
                    "descriptor" => descriptor = value.trim().to_string(),
                    _ => {}
                }
            }
        }
        let body: String = text
            .lines()
            .skip(meta_lines as usize)
            .map(|l| format!("{l}\n"))
            .collect();

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(body.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(meta_lines + 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(parse_err(meta_lines + 1, "missing header row".into()));
        }

        let mut instances = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(meta_lines + line, e.to_string())
            })?;
            let line = meta_lines + record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} columns, found {}", header.len(), record.len()),
                ));
            }
            let row: Vec<String> = record.iter().map(str::to_string).collect();
            instances.push(I::from_csv_row(&header, &row).map_err(|m| parse_err(line, m))?);
        }
        if instances.is_empty() {
            return Err(parse_err(meta_lines + 1, "instance file contains no instances".into()));
        }
        Ok(InstanceSet {
            instances,
            split,
            descriptor,
        })
    }
}

/// Column helpers shared by the per-benchmark schemas.
pub(crate) fn parse_field<T: std::str::FromStr>(row: &[String], col: usize, name: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = row.get(col).ok_or_else(|| format!("missing column `{name}`"))?;
    raw.trim()
        .parse()
        .map_err(|e| format!("column `{name}` value `{raw}`: {e}"))
}

pub(crate) fn expect_column(header: &[String], col: usize, name: &str) -> std::result::Result<(), String> {
    match header.get(col) {
        Some(h) if h == name => Ok(()),
        Some(h) => Err(format!("header column {} is `{h}`, expected `{name}`", col + 1)),
        None => Err(format!("header is missing column `{name}`")),
    }
}
