//! File codecs: CSV matrices and schema-versioned JSON artifacts with
//! base64 little-endian f64 payloads.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Version stamped into every JSON artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::invalid(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid(format!(
            "payload of {} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Row-major matrix payload as stored in JSON artifacts.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixPayload {
    rows: usize,
    cols: usize,
    data: String,
}

/// `#[serde(with = "b64_matrix")]` for `DMatrix<f64>` fields.
pub mod b64_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let row_major: Vec<f64> = m.transpose().iter().copied().collect();
        MatrixPayload {
            rows: m.nrows(),
            cols: m.ncols(),
            data: encode_f64s(&row_major),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let p = MatrixPayload::deserialize(d)?;
        let values = decode_f64s(&p.data).map_err(serde::de::Error::custom)?;
        if values.len() != p.rows * p.cols {
            return Err(serde::de::Error::custom(format!(
                "payload holds {} values, header says {}x{}",
                values.len(),
                p.rows,
                p.cols
            )));
        }
        Ok(DMatrix::from_row_slice(p.rows, p.cols, &values))
    }
}

/// `#[serde(with = "b64_vec")]` for `Vec<f64>` fields.
pub mod b64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode_f64s(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        decode_f64s(&text).map_err(serde::de::Error::custom)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A header row plus numeric records.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn from_matrix(header: Vec<String>, m: &DMatrix<f64>) -> Self {
        CsvTable {
            header,
            rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let cols = self.header.len();
        let flat: Vec<f64> = self.rows.iter().flatten().copied().collect();
        DMatrix::from_row_slice(self.rows.len(), cols, &flat)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Serializes a numeric table: UTF-8, LF endings, header row, 17
/// significant digits.
pub fn csv_string(table: &CsvTable) -> String {
    let mut out = table.header.join(",");
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, table: &CsvTable) -> Result<()> {
    write_text(path, &csv_string(table))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

/// Parses a numeric CSV with a header row; errors carry the 1-based line
/// and column of the offending cell.
pub fn parse_csv(text: &str, origin: &str) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line,
                message: format!("row has {} fields, header has {}", rec.len(), header.len()),
            });
        }
        let mut row = Vec::with_capacity(rec.len());
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line,
                message: format!("column {} ({}): cannot parse {cell:?} as a number", col + 1, header[col]),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
}

/// Pretty JSON with `schema_version` and `kind` fields prepended.
pub fn to_artifact_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema_version: SCHEMA_VERSION,
        kind,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

/// Parses an artifact, refusing a mismatched schema version or kind.
pub fn from_artifact_json<T: DeserializeOwned>(text: &str, kind: &str, origin: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            path: origin.to_string(),
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if header.kind != kind {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: format!("artifact kind is {:?}, expected {kind:?}", header.kind),
        });
    }
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("schema_version");
        obj.remove("kind");
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_artifact<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    write_text(path, &to_artifact_json(kind, body)?)
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_artifact_json(&text, kind, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_row_length_mismatch_reports_line() {
        let text = "a,b\n1,2\n3\n";
        match parse_csv(text, "t.csv") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("1 fields"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line_and_column() {
        let err = parse_csv("a,b\n1,2\n3,x\n", "t.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn schema_version_mismatch_is_refused() {
        let text = r#"{"schema_version": 7, "kind": "thing", "x": 1}"#;
        let err = from_artifact_json::<serde_json::Value>(text, "thing", "a.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains(&SCHEMA_VERSION.to_string()), "{msg}");
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let t = CsvTable {
            header: vec!["a".into(), "b".into()],
            rows: vec![vec![0.1, -2.0]],
        };
        let s = csv_string(&t);
        assert!(!s.contains('\r'));
        assert!(s.starts_with("a,b\n"));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let cols = 4;
            let rows: Vec<Vec<f64>> = values.chunks(cols).filter(|c| c.len() == cols).map(|c| c.to_vec()).collect();
            let t = CsvTable { header: (0..cols).map(|i| format!("c{i}")).collect(), rows };
            let back = parse_csv(&csv_string(&t), "mem").unwrap();
            for (r, s) in t.rows.iter().zip(&back.rows) {
                for (a, b) in r.iter().zip(s) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }

        #[test]
        fn payload_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let back = decode_f64s(&encode_f64s(&values)).unwrap();
            prop_assert_eq!(values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
