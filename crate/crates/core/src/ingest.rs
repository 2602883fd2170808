//! CSV ingestion into [`RawRecord`]s.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::config::ColumnMapping;
use crate::error::{Error, Result};
use crate::model::{Action, CellVerdict, ColumnRole, Phase, RawRecord};

pub const MALFORMED_ROW: &str = "malformed-row";

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<RawRecord>,
    /// One `malformed-row` verdict per quarantined row.
    pub quarantined: Vec<CellVerdict>,
    pub headers: Vec<String>,
}

impl Ingested {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.quarantined.len()
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, mapping, &path.display().to_string())
}

pub fn ingest_reader<R: Read>(reader: R, mapping: &ColumnMapping, source: &str) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .byte_headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let h = String::from_utf8_lossy(h);
            let h = if i == 0 { h.trim_start_matches('\u{feff}') } else { &h };
            h.trim().to_string()
        })
        .collect();

    let missing: Vec<String> = mapping
        .bindings()
        .iter()
        .filter(|b| !headers.iter().any(|h| *h == b.source_header))
        .map(|b| b.source_header.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::HeaderMismatch(missing));
    }

    let roles: Vec<ColumnRole> = headers.iter().map(|h| mapping.role_for(h)).collect();
    let mut out = Ingested {
        headers: headers.clone(),
        ..Ingested::default()
    };

    for (row_index, row) in rdr.byte_records().enumerate() {
        let row = row?;
        if row.len() != headers.len() {
            out.quarantined.push(CellVerdict {
                row_index,
                role: ColumnRole::Other,
                phase: Phase::Screened,
                rule_id: MALFORMED_ROW.into(),
                action: Action::ReviewQueued,
                before: reserialize(&row),
                after: String::new(),
                low_confidence: false,
                note: Some(format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    row.len()
                )),
            });
            continue;
        }

        let mut cells = BTreeMap::new();
        let mut other = Vec::new();
        let mut invalid_utf8 = Vec::new();
        for ((field, header), role) in row.iter().zip(&headers).zip(&roles) {
            let (text, lossy) = match std::str::from_utf8(field) {
                Ok(s) => (s.to_string(), false),
                Err(_) => (String::from_utf8_lossy(field).into_owned(), true),
            };
            if *role == ColumnRole::Other {
                other.push((header.clone(), text));
            } else {
                if lossy {
                    invalid_utf8.push(*role);
                }
                cells.insert(*role, text);
            }
        }
        out.records.push(RawRecord {
            row_index,
            cells,
            other,
            source_file: source.to_string(),
            invalid_utf8,
        });
    }
    Ok(out)
}

fn reserialize(row: &csv::ByteRecord) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let _ = w.write_byte_record(row);
    let bytes = w.into_inner().unwrap_or_default();
    String::from_utf8_lossy(&bytes).trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_column_mapping;

    fn mapping() -> ColumnMapping {
        load_column_mapping("TestDate = Date of Testing\nAge = Age\nSex = Sex\n").unwrap()
    }

    #[test]
    fn three_rows() {
        let csv = "Date of Testing,Age,Sex\n04/1/20,25,M\n2918, 6 months ,F\n43466,,\n";
        let got = ingest_reader(csv.as_bytes(), &mapping(), "t.csv").unwrap();
        assert_eq!(got.records.len(), 3);
        let idx: Vec<_> = got.records.iter().map(|r| r.row_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(got.records[1].cell(ColumnRole::Age), Some(" 6 months "));
        assert_eq!(got.records[2].cell(ColumnRole::Sex), Some(""));
    }

    #[test]
    fn extra_field_quarantined() {
        let csv = "Date of Testing,Age,Sex\n04/1/20,25,M\n04/1/20,25,M,extra\n2918,30,F\n";
        let got = ingest_reader(csv.as_bytes(), &mapping(), "t.csv").unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.quarantined.len(), 1);
        let q = &got.quarantined[0];
        assert_eq!(q.row_index, 1);
        assert_eq!(q.rule_id, MALFORMED_ROW);
        assert_eq!(q.action, Action::ReviewQueued);
        assert_eq!(got.total_rows(), 3);
    }

    #[test]
    fn header_only_is_empty() {
        let got = ingest_reader("Date of Testing,Age,Sex\n".as_bytes(), &mapping(), "t").unwrap();
        assert!(got.records.is_empty() && got.quarantined.is_empty());
    }

    #[test]
    fn header_mismatch() {
        let err = ingest_reader("Date,Age,Sex\n".as_bytes(), &mapping(), "t").unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch(ref m) if m == &["Date of Testing"]));
    }

    #[test]
    fn unmapped_headers_become_other() {
        let csv = "Date of Testing,Age,Sex,Facility\n1,2,3,CHC Khanna\n";
        let got = ingest_reader(csv.as_bytes(), &mapping(), "t").unwrap();
        assert_eq!(got.records[0].other, vec![("Facility".into(), "CHC Khanna".into())]);
    }

    #[test]
    fn invalid_utf8_flagged() {
        let mut bytes = b"Date of Testing,Age,Sex\n04/1/20,".to_vec();
        bytes.extend_from_slice(&[0xff, b'2', b'5']);
        bytes.extend_from_slice(b",M\n");
        let got = ingest_reader(bytes.as_slice(), &mapping(), "t").unwrap();
        assert_eq!(got.records[0].invalid_utf8, vec![ColumnRole::Age]);
        assert_eq!(got.records[0].cell(ColumnRole::Age), Some("\u{fffd}25"));
    }

    #[test]
    fn quoted_fields_preserved() {
        let csv = "Date of Testing,Age,Sex\n\"04 Jan, 2020\",\" 25 \",M\n";
        let got = ingest_reader(csv.as_bytes(), &mapping(), "t").unwrap();
        assert_eq!(got.records[0].cell(ColumnRole::TestDate), Some("04 Jan, 2020"));
        assert_eq!(got.records[0].cell(ColumnRole::Age), Some(" 25 "));
    }
}
