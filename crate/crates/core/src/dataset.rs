//! Dataset and query-log file formats.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

/// One utterance/query pair, in the column layout of the released files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetExample {
    #[serde(rename = "QuerySetId", deserialize_with = "int_or_string")]
    pub id: i64,
    #[serde(rename = "Title", default)]
    pub title: String,
    #[serde(rename = "Description", default)]
    pub description: Option<String>,
    #[serde(rename = "QueryBody")]
    pub query: String,
}

impl DatasetExample {
    /// Title and description joined with a space, the text a user wrote.
    pub fn utterance(&self) -> String {
        match self.description.as_deref().map(str::trim) {
            Some(d) if !d.is_empty() => format!("{} {}", self.title.trim(), d),
            _ => self.title.trim().to_string(),
        }
    }
}

fn int_or_string<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
    match Value::deserialize(d)? {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| serde::de::Error::custom(format!("QuerySetId {n} is not an integer"))),
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| serde::de::Error::custom(format!("QuerySetId `{s}` is not an integer"))),
        other => Err(serde::de::Error::custom(format!(
            "QuerySetId must be an integer, got {other}"
        ))),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a JSONL dataset file. Blank lines are skipped; any other line that
/// does not decode is an error.
pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetExample>, DatasetError> {
    let name = path.display().to_string();
    parse_jsonl(BufReader::new(open(path)?), &name)
}

pub fn parse_jsonl(reader: impl BufRead, name: &str) -> Result<Vec<DatasetExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let example = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(example);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut out: impl io::Write, rows: &[T]) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a dataset file: JSONL, or for a `.tsv` extension a headerless
/// two-column `utterance<TAB>query` file whose ids are the row numbers.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetExample>, DatasetError> {
    if !path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
    {
        return read_jsonl(path);
    }
    parse_two_column(open(path)?, &path.display().to_string())
}

pub fn parse_two_column(
    reader: impl Read,
    name: &str,
) -> Result<Vec<DatasetExample>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let malformed = |message: String| DatasetError::Malformed {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != 2 {
            return Err(malformed(format!(
                "expected 2 columns, found {}",
                record.len()
            )));
        }
        out.push(DatasetExample {
            id: i as i64,
            title: record[0].to_string(),
            description: None,
            query: record[1].to_string(),
        });
    }
    Ok(out)
}

/// Raw query-log row: one execution of a saved query revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLogEntry {
    /// Position of the row in the log, used to identify it in the audit.
    pub row: usize,
    pub query_set_id: i64,
    pub revision_order: i64,
    pub title: String,
    pub description: Option<String>,
    pub query_body: String,
}

/// A log row that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub row: usize,
    pub reason: String,
}

/// Source column names for each log field. Without a revision column the
/// row order stands in for execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogColumns {
    pub query_set_id: String,
    pub revision_order: Option<String>,
    pub title: String,
    pub description: String,
    pub query_body: String,
}

impl Default for LogColumns {
    fn default() -> Self {
        LogColumns {
            query_set_id: "QuerySetId".into(),
            revision_order: Some("RevisionOrder".into()),
            title: "Title".into(),
            description: "Description".into(),
            query_body: "QueryBody".into(),
        }
    }
}

pub type LogRow = Result<RawLogEntry, MalformedRow>;

fn field_as_string(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn field_as_int(value: Option<&Value>) -> Option<i64> {
    match value? {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

impl LogColumns {
    fn decode(&self, row: usize, record: &serde_json::Map<String, Value>) -> LogRow {
        let bad = |reason: String| MalformedRow { row, reason };
        let query_set_id = field_as_int(record.get(&self.query_set_id))
            .ok_or_else(|| bad(format!("missing or non-integer `{}`", self.query_set_id)))?;
        let revision_order = match &self.revision_order {
            Some(col) if record.contains_key(col) => {
                field_as_int(record.get(col)).ok_or_else(|| bad(format!("non-integer `{col}`")))?
            }
            _ => row as i64,
        };
        let query_body = field_as_string(record.get(&self.query_body))
            .ok_or_else(|| bad(format!("missing `{}`", self.query_body)))?;
        Ok(RawLogEntry {
            row,
            query_set_id,
            revision_order,
            title: field_as_string(record.get(&self.title)).unwrap_or_default(),
            description: field_as_string(record.get(&self.description)),
            query_body,
        })
    }
}

/// Decodes a JSONL log. Undecodable rows come back as [`MalformedRow`]s in
/// place so the caller can audit them.
pub fn parse_log_jsonl(reader: impl Read, columns: &LogColumns) -> io::Result<Vec<LogRow>> {
    let mut rows = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = rows.len();
        rows.push(match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => columns.decode(row, &map),
            Ok(_) => Err(MalformedRow {
                row,
                reason: "not a JSON object".into(),
            }),
            Err(e) => Err(MalformedRow {
                row,
                reason: e.to_string(),
            }),
        });
    }
    Ok(rows)
}

/// Decodes a delimited log with a header row.
pub fn parse_log_delimited(
    reader: impl Read,
    delimiter: u8,
    columns: &LogColumns,
) -> io::Result<Vec<LogRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = reader.headers().map_err(io::Error::other)?.clone();
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        rows.push(match record {
            Ok(record) if record.len() == headers.len() => {
                let map = headers
                    .iter()
                    .zip(record.iter())
                    .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
                    .collect();
                columns.decode(row, &map)
            }
            Ok(record) => Err(MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            }),
            Err(e) => Err(MalformedRow {
                row,
                reason: e.to_string(),
            }),
        });
    }
    Ok(rows)
}

/// Reads a log file, choosing the format from the extension (`.csv`, `.tsv`,
/// otherwise JSONL).
pub fn read_log(path: &Path, columns: &LogColumns) -> Result<Vec<LogRow>, DatasetError> {
    let file = open(path)?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase());
    let result = match ext.as_deref() {
        Some("csv") => parse_log_delimited(file, b',', columns),
        Some("tsv") => parse_log_delimited(file, b'\t', columns),
        _ => parse_log_jsonl(file, columns),
    };
    result.map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"QuerySetId": 7, "Title": "t", "Description": null, "QueryBody": "SELECT 1", "Extra": 3}

{"QuerySetId": "8", "Title": "u", "Description": "d", "QueryBody": "SELECT 2"}
"#;
        let rows = parse_jsonl(text.as_bytes(), "mem").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, 7);
        assert_eq!(rows[1].id, 8);
        assert_eq!(rows[1].utterance(), "u d");
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        assert_eq!(parse_jsonl(&buf[..], "mem").unwrap(), rows);
        assert!(String::from_utf8(buf).unwrap().starts_with(
            r#"{"QuerySetId":7,"Title":"t","Description":null,"QueryBody":"SELECT 1"}"#
        ));
    }

    #[test]
    fn bad_jsonl_line_reports_position() {
        let err = parse_jsonl("{\"QuerySetId\": 1}\n".as_bytes(), "f").unwrap_err();
        assert!(err.to_string().starts_with("f:1:"));
    }

    #[test]
    fn two_column_tsv() {
        let rows = parse_two_column(
            "top users\tSELECT TOP 10 * FROM users\nx\tSELECT 1\n".as_bytes(),
            "g",
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            (rows[1].id, rows[1].title.as_str(), rows[1].query.as_str()),
            (1, "x", "SELECT 1")
        );
        assert!(parse_two_column("only one column\n".as_bytes(), "g").is_err());
    }

    #[test]
    fn log_rows_decode_or_report() {
        let text = "{\"QuerySetId\": 1, \"Title\": \"a\", \"QueryBody\": \"SELECT 1\"}\nnot json\n{\"QuerySetId\": \"x\", \"QueryBody\": \"\"}\n";
        let rows = parse_log_jsonl(text.as_bytes(), &LogColumns::default()).unwrap();
        assert_eq!(rows.len(), 3);
        let first = rows[0].as_ref().unwrap();
        assert_eq!((first.query_set_id, first.revision_order), (1, 0));
        assert_eq!(rows[1].as_ref().unwrap_err().row, 1);
        assert!(rows[2].is_err());
    }

    #[test]
    fn delimited_log_with_custom_columns() {
        let text = "id\trev\tname\tdesc\tsql\n3\t10\tTop users\t\tSELECT 1\n4\t11\tx\n";
        let columns = LogColumns {
            query_set_id: "id".into(),
            revision_order: Some("rev".into()),
            title: "name".into(),
            description: "desc".into(),
            query_body: "sql".into(),
        };
        let rows = parse_log_delimited(text.as_bytes(), b'\t', &columns).unwrap();
        let first = rows[0].as_ref().unwrap();
        assert_eq!((first.query_set_id, first.revision_order), (3, 10));
        assert_eq!(first.title, "Top users");
        assert!(rows[1].is_err());
    }
}
