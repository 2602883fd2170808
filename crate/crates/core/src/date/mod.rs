//! Date normalization.
//!
//! Raw cells are reduced to a digit token, classified by length and shape,
//! and pushed through the rule cascade in [`rules`] until they resolve to a
//! calendar date, are queued for review, or are deleted.

mod rules;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellOutcome, YearContext};

pub use rules::{catalog, catalog_json, classify_and_apply, DateRuleOutcome, RuleAction, RuleEntry, RuleId};

/// Transforms allowed per cell before the cascade gives up.
pub const MAX_TRANSFORMS: usize = 4;

/// Rule id recorded when non-digit characters were stripped.
pub const STRIP_RULE: &str = "S01";

/// Rule id for an ISO `yyyy-mm-dd` cell outside the plausibility window.
pub const ISO_RULE: &str = "ISO";

/// Spreadsheet serial 61 is 1900-03-01; lower serials carry the 1900 leap-day artifact.
pub const MIN_SERIAL: i64 = 61;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1899, 12, 30).expect("valid epoch")
}

/// A date cell reduced to its digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateToken {
    pub digits: String,
    pub original: String,
    pub month_name_substituted: bool,
}

impl DateToken {
    /// Builds a token from a digit string already in standard form.
    pub fn from_digits(digits: impl Into<String>) -> Self {
        let digits = digits.into();
        DateToken {
            original: digits.clone(),
            digits,
            month_name_substituted: false,
        }
    }

    pub(crate) fn derive(&self, digits: String) -> Self {
        DateToken {
            digits,
            original: self.original.clone(),
            month_name_substituted: self.month_name_substituted,
        }
    }
}

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];

/// Month number for an alphabetic run that is a prefix (at least three letters)
/// of an English month name.
fn month_number(word: &str) -> Option<u32> {
    if word.len() < 3 {
        return None;
    }
    let lower = word.to_ascii_lowercase();
    MONTHS
        .iter()
        .position(|m| m.starts_with(&lower))
        .map(|i| i as u32 + 1)
}

/// Replaces month names with their two-digit number, then drops every
/// non-digit character.
pub fn standardize(raw: &str) -> DateToken {
    let mut digits = String::with_capacity(raw.len());
    let mut substituted = false;
    let mut word = String::new();

    let mut flush = |word: &mut String, digits: &mut String| {
        if let Some(m) = month_number(word) {
            digits.push_str(&format!("{m:02}"));
            substituted = true;
        }
        word.clear();
    };

    for c in raw.chars() {
        if c.is_ascii_alphabetic() {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut digits);
        if c.is_ascii_digit() {
            digits.push(c);
        }
    }
    flush(&mut word, &mut digits);

    DateToken {
        digits,
        original: raw.to_string(),
        month_name_substituted: substituted,
    }
}

pub fn date_to_serial(date: NaiveDate) -> i64 {
    (date - epoch()).num_days()
}

/// Converts a spreadsheet serial (days since 1899-12-30).
pub fn excel_serial_to_date(serial: i64) -> Result<NaiveDate> {
    if serial < MIN_SERIAL {
        return Err(Error::SerialOutOfRange(serial));
    }
    epoch()
        .checked_add_days(chrono::Days::new(serial as u64))
        .ok_or(Error::SerialOutOfRange(serial))
}

/// Serials of 01 Jan and 31 Dec of the context year.
pub fn serial_range(ctx: &YearContext) -> (i64, i64) {
    (ctx.serial_min, ctx.serial_max)
}

/// Parses a canonical eight-digit ddmmyyyy token.
pub fn parse_ddmmyyyy(token: &DateToken) -> Result<NaiveDate> {
    parse_ddmmyyyy_str(&token.digits)
}

pub(crate) fn parse_ddmmyyyy_str(t: &str) -> Result<NaiveDate> {
    if t.len() != 8 || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::CalendarInvalid(t.to_string()));
    }
    let day: u32 = t[0..2].parse().expect("digits");
    let month: u32 = t[2..4].parse().expect("digits");
    let year: i32 = t[4..8].parse().expect("digits");
    NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| Error::CalendarInvalid(t.to_string()))
}

/// Strict `yyyy-mm-dd`.
pub(crate) fn parse_iso(raw: &str) -> Option<NaiveDate> {
    let b = raw.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok()
}

pub fn iso(date: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", date.year(), date.month(), date.day())
}

/// Result of cleaning one date cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DateCleaning {
    pub outcome: CellOutcome,
    pub date: Option<NaiveDate>,
    /// Rule chain as individual ids (includes `S01` when characters were stripped).
    pub chain: Vec<String>,
}

/// Standardize, run the cascade, parse and check plausibility for one cell.
pub fn clean_date_cell(raw: &str, ctx: &YearContext) -> DateCleaning {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return DateCleaning {
            outcome: CellOutcome::missing(),
            date: None,
            chain: Vec::new(),
        };
    }

    if let Some(date) = parse_iso(trimmed) {
        let outcome = if ctx.is_plausible(date) {
            CellOutcome::resolved("", raw, iso(date))
        } else {
            CellOutcome::review(ISO_RULE, vec![iso(date)]).with_note("outside plausibility window")
        };
        let date = (outcome.action != crate::model::Action::ReviewQueued).then_some(date);
        return DateCleaning {
            outcome,
            date,
            chain: Vec::new(),
        };
    }

    let mut token = standardize(raw);
    let mut chain: Vec<String> = Vec::new();
    if token.digits != trimmed {
        chain.push(STRIP_RULE.into());
    }

    let mut transforms = 0;
    let mut low_confidence = false;
    let finish = |chain: Vec<String>, outcome: CellOutcome, date: Option<NaiveDate>| DateCleaning {
        outcome,
        date,
        chain,
    };

    loop {
        let step = classify_and_apply(&token, ctx).expect("standardized token");
        chain.push(step.rule_id.as_str().to_string());
        low_confidence |= step.low_confidence;
        let rule_chain = chain.join(">");

        match step.action {
            RuleAction::Transform => {
                transforms += 1;
                if transforms > MAX_TRANSFORMS {
                    let outcome = CellOutcome::review(rule_chain, Vec::new())
                        .with_note("transform limit reached");
                    return finish(chain, outcome, None);
                }
                token = step.transformed.expect("transform carries a token");
            }
            RuleAction::Delete => {
                let mut outcome = CellOutcome::deleted(rule_chain);
                outcome.low_confidence = low_confidence;
                return finish(chain, outcome, None);
            }
            RuleAction::Review => {
                let candidates: Vec<String> = step.candidates.iter().map(|d| iso(*d)).collect();
                let mut outcome = CellOutcome::review(rule_chain, candidates);
                outcome.low_confidence = low_confidence;
                if let Some(note) = step.note {
                    outcome.note = Some(note);
                }
                return finish(chain, outcome, None);
            }
            RuleAction::ExcelSerial | RuleAction::Accept => {
                let date = step.resolved.expect("terminal rule resolves a date");
                if !ctx.is_plausible(date) {
                    let mut outcome = CellOutcome::review(rule_chain, vec![iso(date)])
                        .with_note("outside plausibility window");
                    outcome.low_confidence = low_confidence;
                    return finish(chain, outcome, None);
                }
                let mut outcome = if chain.len() == 1 && chain[0] == RuleId::D22.as_str() {
                    // already canonical ddmmyyyy; only parsed
                    let mut o = CellOutcome::resolved(rule_chain, raw, iso(date));
                    o.action = crate::model::Action::Unchanged;
                    o.phase = crate::model::Phase::Screened;
                    o
                } else {
                    CellOutcome::resolved(rule_chain, raw, iso(date))
                };
                outcome.low_confidence = low_confidence;
                return finish(chain, outcome, Some(date));
            }
        }
    }
}

/// Validates a reviewer-supplied date: ISO `yyyy-mm-dd` or anything that
/// standardizes to eight ddmmyyyy digits.
pub fn parse_manual_date(value: &str) -> Result<NaiveDate> {
    let v = value.trim();
    if let Some(d) = parse_iso(v) {
        return Ok(d);
    }
    parse_ddmmyyyy(&standardize(v))
}
