//! Review queue items, their resolutions and the resolutions sidecar.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::address::{gazetteer_match, standardize_address, Gazetteer, LocationDetail, Match};
use crate::date::{iso, parse_manual_date};
use crate::demographics::{extract_age, extract_sex, render_age, Extraction, Sex, SexKeywords};
use crate::error::{Error, Result};
use crate::model::{CellVerdict, ColumnRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "value")]
pub enum Resolution {
    Pending,
    Accepted(String),
    ManualValue(String),
    Deleted,
}

impl Resolution {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Resolution::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub verdict: CellVerdict,
    pub candidates: Vec<String>,
    pub resolution: Resolution,
    /// Why the last resolution attempt was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReviewItem {
    pub fn new(verdict: CellVerdict, candidates: Vec<String>) -> Self {
        ReviewItem {
            verdict,
            candidates,
            resolution: Resolution::Pending,
            error: None,
        }
    }

    pub fn key(&self) -> (usize, ColumnRole) {
        (self.verdict.row_index, self.verdict.role)
    }

    /// Pending to terminal only; a terminal item cannot change again.
    pub fn resolve(&mut self, resolution: Resolution) -> Result<()> {
        if self.resolution.is_terminal() {
            return Err(Error::Config(format!(
                "row {} {} is already resolved",
                self.verdict.row_index, self.verdict.role
            )));
        }
        self.resolution = resolution;
        self.error = None;
        Ok(())
    }

    pub(crate) fn reopen(&mut self, error: impl Into<String>) {
        self.resolution = Resolution::Pending;
        self.error = Some(error.into());
    }

    /// The value a terminal resolution asks for; `None` for Pending/Deleted.
    pub fn requested_value(&self) -> Option<&str> {
        match &self.resolution {
            Resolution::Accepted(v) | Resolution::ManualValue(v) => Some(v),
            _ => None,
        }
    }
}

pub fn write_sidecar<W: Write>(mut out: W, items: &[ReviewItem]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<sidecar>", e))?;
    }
    Ok(())
}

pub fn read_sidecar<R: BufRead>(input: R) -> Result<Vec<ReviewItem>> {
    let mut items = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<sidecar>", e))?;
        if !line.trim().is_empty() {
            items.push(serde_json::from_str(&line)?);
        }
    }
    Ok(items)
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Vec<ReviewItem>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sidecar(std::io::BufReader::new(file))
}

pub fn append_sidecar(path: impl AsRef<Path>, items: &[ReviewItem]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_sidecar(&mut w, items)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Collapses an append-only sidecar to one item per cell. The first terminal
/// record for a cell wins; otherwise the latest pending one is kept.
pub fn merge_sidecar(items: Vec<ReviewItem>) -> Vec<ReviewItem> {
    let mut by_key: BTreeMap<(usize, ColumnRole), ReviewItem> = BTreeMap::new();
    for item in items {
        match by_key.get(&item.key()) {
            Some(existing) if existing.resolution.is_terminal() => {}
            _ => {
                by_key.insert(item.key(), item);
            }
        }
    }
    by_key.into_values().collect()
}

/// A reviewed value after re-validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Validated {
    Date(NaiveDate),
    Age(f64),
    Sex(Sex),
    Location(LocationDetail),
}

impl Validated {
    pub fn canonical(&self) -> String {
        match self {
            Validated::Date(d) => iso(*d),
            Validated::Age(a) => render_age(*a),
            Validated::Sex(s) => s.as_str().to_string(),
            Validated::Location(l) => l.summary(),
        }
    }
}

/// Runs reviewed values through the same parsers as the batch cleaner.
pub struct Validator<'a> {
    pub keywords: &'a SexKeywords,
    pub abbreviations: &'a [(String, String)],
    pub gazetteer: &'a Gazetteer,
}

impl Validator<'_> {
    pub fn check(&self, role: ColumnRole, value: &str) -> std::result::Result<Validated, String> {
        match role {
            r if r.is_date() => parse_manual_date(value)
                .map(Validated::Date)
                .map_err(|e| e.to_string()),
            ColumnRole::Age => match extract_age(value) {
                Extraction::Found(a) => Ok(Validated::Age(a.years)),
                _ => Err(format!("{value:?} is not a valid age")),
            },
            ColumnRole::Sex => match extract_sex(value, self.keywords) {
                Extraction::Found(s) => Ok(Validated::Sex(s.category)),
                _ => Err(format!("{value:?} does not name a sex category")),
            },
            ColumnRole::Address => {
                let text = standardize_address(value, self.abbreviations);
                match gazetteer_match(&text, self.gazetteer).map_err(|e| e.to_string())? {
                    Match::Found(loc) => Ok(Validated::Location(loc)),
                    Match::Ambiguous(_) => Err(format!("{value:?} matches several places")),
                    Match::NotFound => Err(format!("{value:?} is not in the gazetteer")),
                }
            }
            _ => Err(format!("{role} cells can only be deleted")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, Phase};

    fn item(row: usize) -> ReviewItem {
        ReviewItem::new(
            CellVerdict {
                row_index: row,
                role: ColumnRole::TestDate,
                phase: Phase::Diagnosed,
                rule_id: "D10".into(),
                action: Action::ReviewQueued,
                before: "3112019".into(),
                after: String::new(),
                low_confidence: false,
                note: None,
            },
            vec!["2019-11-03".into(), "2019-01-31".into()],
        )
    }

    #[test]
    fn terminal_is_final() {
        let mut i = item(0);
        i.resolve(Resolution::Accepted("2019-11-03".into())).unwrap();
        assert!(i.resolve(Resolution::Deleted).is_err());
        assert_eq!(i.requested_value(), Some("2019-11-03"));
    }

    #[test]
    fn sidecar_round_trip_and_merge() {
        let pending = item(0);
        let mut done = item(0);
        done.resolve(Resolution::ManualValue("03112019".into())).unwrap();
        let mut late = item(0);
        late.resolve(Resolution::Deleted).unwrap();
        let other = item(1);
        let mut buf = Vec::new();
        write_sidecar(&mut buf, &[pending, done.clone(), late, other.clone()]).unwrap();
        let back = read_sidecar(&buf[..]).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(merge_sidecar(back), vec![done, other]);
    }

    #[test]
    fn validator() {
        let g = Gazetteer::bundled();
        let kw = SexKeywords::default();
        let abbr = crate::address::default_abbreviations();
        let v = Validator {
            keywords: &kw,
            abbreviations: &abbr,
            gazetteer: &g,
        };
        assert_eq!(v.check(ColumnRole::TestDate, "2019-11-03").unwrap().canonical(), "2019-11-03");
        assert!(v.check(ColumnRole::TestDate, "31022019").is_err());
        assert_eq!(v.check(ColumnRole::Age, "6 months").unwrap(), Validated::Age(0.5));
        assert_eq!(v.check(ColumnRole::Sex, "F").unwrap(), Validated::Sex(Sex::Female));
        assert!(v.check(ColumnRole::Sex, "child").is_err());
        let loc = v.check(ColumnRole::Address, "Rampur, Nabha, Patiala").unwrap();
        assert_eq!(loc.canonical(), "Rampur, Nabha, Patiala");
        assert!(v.check(ColumnRole::Address, "village rampur").is_err());
        assert!(v.check(ColumnRole::Other, "x").is_err());
    }
}
