//! Shared domain types: column roles, raw and clean records, the surveillance
//! year context and per-cell verdicts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::address::LocationDetail;
use crate::demographics::Sex;
use crate::error::{Error, Result};

/// Semantic role of a source column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColumnRole {
    TestDate,
    ReportDate,
    OpdDate,
    AdmissionDate,
    DischargeDate,
    Age,
    Sex,
    Address,
    Name,
    Contact,
    Other,
}

impl ColumnRole {
    pub const ALL: [ColumnRole; 11] = [
        ColumnRole::TestDate,
        ColumnRole::ReportDate,
        ColumnRole::OpdDate,
        ColumnRole::AdmissionDate,
        ColumnRole::DischargeDate,
        ColumnRole::Age,
        ColumnRole::Sex,
        ColumnRole::Address,
        ColumnRole::Name,
        ColumnRole::Contact,
        ColumnRole::Other,
    ];

    pub const DATES: [ColumnRole; 5] = [
        ColumnRole::TestDate,
        ColumnRole::ReportDate,
        ColumnRole::OpdDate,
        ColumnRole::AdmissionDate,
        ColumnRole::DischargeDate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnRole::TestDate => "TestDate",
            ColumnRole::ReportDate => "ReportDate",
            ColumnRole::OpdDate => "OpdDate",
            ColumnRole::AdmissionDate => "AdmissionDate",
            ColumnRole::DischargeDate => "DischargeDate",
            ColumnRole::Age => "Age",
            ColumnRole::Sex => "Sex",
            ColumnRole::Address => "Address",
            ColumnRole::Name => "Name",
            ColumnRole::Contact => "Contact",
            ColumnRole::Other => "Other",
        }
    }

    pub fn is_date(self) -> bool {
        ColumnRole::DATES.contains(&self)
    }

    pub fn is_identifier(self) -> bool {
        matches!(self, ColumnRole::Name | ColumnRole::Contact)
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ColumnRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown column role {s:?}")))
    }
}

/// One `role = header` assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBinding {
    pub role: ColumnRole,
    pub source_header: String,
}

/// The surveillance year that governs year-sensitive date rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearContext {
    pub year: i32,
    pub serial_min: i64,
    pub serial_max: i64,
    pub plausibility_window_days: i64,
}

pub const DEFAULT_PLAUSIBILITY_WINDOW_DAYS: i64 = 31;

impl YearContext {
    pub fn new(year: i32) -> Result<Self> {
        Self::with_window(year, DEFAULT_PLAUSIBILITY_WINDOW_DAYS)
    }

    pub fn with_window(year: i32, plausibility_window_days: i64) -> Result<Self> {
        if !(1990..=2100).contains(&year) {
            return Err(Error::Config(format!(
                "year {year} is outside the supported range 1990..=2100"
            )));
        }
        if plausibility_window_days < 0 {
            return Err(Error::Config(
                "plausibility window must be non-negative".into(),
            ));
        }
        let first = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        let last = NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year");
        Ok(YearContext {
            year,
            serial_min: crate::date::date_to_serial(first),
            serial_max: crate::date::date_to_serial(last),
            plausibility_window_days,
        })
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, 1, 1).expect("validated year")
    }

    pub fn last_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, 12, 31).expect("validated year")
    }

    /// Whether `date` lies within the year widened by the plausibility window.
    pub fn is_plausible(&self, date: NaiveDate) -> bool {
        let lo = self.first_day() - chrono::Duration::days(self.plausibility_window_days);
        let hi = self.last_day() + chrono::Duration::days(self.plausibility_window_days);
        (lo..=hi).contains(&date)
    }

    pub(crate) fn yyyy(&self) -> String {
        format!("{:04}", self.year)
    }

    pub(crate) fn yy(&self) -> String {
        format!("{:02}", self.year % 100)
    }
}

/// One ingested line-list row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub row_index: usize,
    /// Cells of every mapped non-`Other` role, byte-identical to the source field.
    pub cells: BTreeMap<ColumnRole, String>,
    /// `Other` columns as `(header, value)` in source order.
    pub other: Vec<(String, String)>,
    pub source_file: String,
    /// Roles whose source bytes were not valid UTF-8.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_utf8: Vec<ColumnRole>,
}

impl RawRecord {
    pub fn cell(&self, role: ColumnRole) -> Option<&str> {
        self.cells.get(&role).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Screened,
    Diagnosed,
    Edited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    AutoCorrected,
    ReviewQueued,
    ManuallyCorrected,
    Deleted,
    Unchanged,
    Missing,
}

/// Outcome of screening, diagnosing and editing one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub row_index: usize,
    pub role: ColumnRole,
    pub phase: Phase,
    /// Rule chain, e.g. `D08>D17>D22`.
    pub rule_id: String,
    pub action: Action,
    pub before: String,
    pub after: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CellVerdict {
    /// Checks the structural invariants tying action, rule id and values together.
    pub fn check(&self) -> std::result::Result<(), String> {
        match self.action {
            Action::AutoCorrected if self.after.is_empty() || self.after == self.before => {
                Err("AutoCorrected verdict must change the value".into())
            }
            Action::Deleted if !self.after.is_empty() => {
                Err("Deleted verdict must leave the cell empty".into())
            }
            Action::Unchanged | Action::Missing => Ok(()),
            _ if self.rule_id.is_empty() => Err(format!("{:?} verdict needs a rule id", self.action)),
            _ => Ok(()),
        }
    }

    /// The individual rule ids in the chain.
    pub fn rules(&self) -> impl Iterator<Item = &str> {
        self.rule_id.split('>').filter(|s| !s.is_empty())
    }
}

/// Cell-level result produced by every cleaner before it is bound to a row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub phase: Phase,
    pub rule_id: String,
    pub action: Action,
    pub after: String,
    pub low_confidence: bool,
    pub note: Option<String>,
    /// Ranked suggestions for review-queued cells.
    pub candidates: Vec<String>,
}

impl CellOutcome {
    pub fn missing() -> Self {
        CellOutcome {
            phase: Phase::Screened,
            rule_id: String::new(),
            action: Action::Missing,
            after: String::new(),
            low_confidence: false,
            note: None,
            candidates: Vec::new(),
        }
    }

    pub fn review(rule_id: impl Into<String>, candidates: Vec<String>) -> Self {
        CellOutcome {
            phase: Phase::Diagnosed,
            rule_id: rule_id.into(),
            action: Action::ReviewQueued,
            after: String::new(),
            low_confidence: false,
            note: None,
            candidates,
        }
    }

    pub fn deleted(rule_id: impl Into<String>) -> Self {
        CellOutcome {
            phase: Phase::Edited,
            rule_id: rule_id.into(),
            action: Action::Deleted,
            after: String::new(),
            low_confidence: false,
            note: None,
            candidates: Vec::new(),
        }
    }

    /// A resolved value; `Unchanged` when it equals `before`.
    pub fn resolved(rule_id: impl Into<String>, before: &str, after: impl Into<String>) -> Self {
        let after = after.into();
        let unchanged = after == before;
        CellOutcome {
            phase: if unchanged { Phase::Screened } else { Phase::Edited },
            rule_id: rule_id.into(),
            action: if unchanged {
                Action::Unchanged
            } else {
                Action::AutoCorrected
            },
            after,
            low_confidence: false,
            note: None,
            candidates: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn into_verdict(self, row_index: usize, role: ColumnRole, before: &str) -> CellVerdict {
        CellVerdict {
            row_index,
            role,
            phase: self.phase,
            rule_id: self.rule_id,
            action: self.action,
            before: before.to_string(),
            after: self.after,
            low_confidence: self.low_confidence,
            note: self.note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DateProvenance {
    Parsed,
    Imputed,
    Missing,
}

impl DateProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            DateProvenance::Parsed => "Parsed",
            DateProvenance::Imputed => "Imputed",
            DateProvenance::Missing => "Missing",
        }
    }
}

/// Canonical output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub row_index: usize,
    pub test_date: Option<NaiveDate>,
    pub test_date_provenance: DateProvenance,
    pub age_years: Option<f64>,
    pub sex: Option<Sex>,
    pub location: Option<LocationDetail>,
    pub anon_id: String,
    /// Parsed report, OPD, admission and discharge dates; imputation donors.
    #[serde(default)]
    pub related_dates: BTreeMap<ColumnRole, NaiveDate>,
}

impl CleanRecord {
    pub fn empty(row_index: usize) -> Self {
        CleanRecord {
            row_index,
            test_date: None,
            test_date_provenance: DateProvenance::Missing,
            age_years: None,
            sex: None,
            location: None,
            anon_id: String::new(),
            related_dates: BTreeMap::new(),
        }
    }

    /// Number of analysable fields; never decreases as the pipeline advances.
    pub fn resolved_fields(&self) -> usize {
        usize::from(self.test_date.is_some())
            + usize::from(self.age_years.is_some())
            + usize::from(self.sex.is_some())
            + usize::from(self.location.is_some())
            + self.related_dates.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_names_round_trip() {
        for role in ColumnRole::ALL {
            assert_eq!(role.as_str().parse::<ColumnRole>().unwrap(), role);
        }
        assert!("testdate".parse::<ColumnRole>().is_err());
    }

    #[test]
    fn year_context_serials() {
        let ctx = YearContext::new(2019).unwrap();
        assert_eq!((ctx.serial_min, ctx.serial_max), (43466, 43830));
        let leap = YearContext::new(2016).unwrap();
        assert_eq!(leap.serial_max - leap.serial_min + 1, 366);
        assert!(YearContext::new(1989).is_err());
        assert!(YearContext::new(2101).is_err());
    }

    #[test]
    fn plausibility_window() {
        let ctx = YearContext::new(2019).unwrap();
        assert!(ctx.is_plausible(NaiveDate::from_ymd_opt(2018, 12, 1).unwrap()));
        assert!(!ctx.is_plausible(NaiveDate::from_ymd_opt(2018, 11, 30).unwrap()));
        assert!(ctx.is_plausible(NaiveDate::from_ymd_opt(2020, 1, 31).unwrap()));
        assert!(!ctx.is_plausible(NaiveDate::from_ymd_opt(2020, 2, 1).unwrap()));
    }

    #[test]
    fn verdict_invariants() {
        let ok = CellOutcome::resolved("D20", "2918", "2018-09-02").into_verdict(0, ColumnRole::TestDate, "2918");
        assert_eq!(ok.action, Action::AutoCorrected);
        assert!(ok.check().is_ok());

        let same = CellOutcome::resolved("", "x", "x").into_verdict(0, ColumnRole::Sex, "x");
        assert_eq!(same.action, Action::Unchanged);

        let mut bad = ok.clone();
        bad.after = bad.before.clone();
        assert!(bad.check().is_err());

        let mut del = CellOutcome::deleted("D01").into_verdict(0, ColumnRole::TestDate, "1");
        assert!(del.check().is_ok());
        del.after = "x".into();
        assert!(del.check().is_err());

        let mut anon = CellOutcome::review("", vec![]).into_verdict(0, ColumnRole::Age, "x");
        assert!(anon.check().is_err());
        anon.rule_id = "AGE-RANGE".into();
        assert!(anon.check().is_ok());
    }
}
