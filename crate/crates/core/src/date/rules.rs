//! The date rule cascade.
//!
//! Rules are keyed by length of the digit token and evaluated in id order;
//! the first matching rule fires. `Transform` outcomes are fed back into
//! [`classify_and_apply`] by the caller.

use std::fmt;

use chrono::NaiveDate;
use serde::Serialize;

use super::{excel_serial_to_date, parse_ddmmyyyy_str, DateToken};
use crate::error::{Error, Result};
use crate::model::YearContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RuleId {
    D01,
    D02,
    D03,
    D04,
    D05,
    D06,
    D07,
    D08,
    D09,
    D10,
    D11,
    D12,
    D13,
    D14,
    D15,
    D16,
    D17,
    D18,
    D19,
    D20,
    D21,
    D22,
    /// Six-digit token that no rule claims.
    D99,
}

impl RuleId {
    pub const ALL: [RuleId; 23] = [
        RuleId::D01,
        RuleId::D02,
        RuleId::D03,
        RuleId::D04,
        RuleId::D05,
        RuleId::D06,
        RuleId::D07,
        RuleId::D08,
        RuleId::D09,
        RuleId::D10,
        RuleId::D11,
        RuleId::D12,
        RuleId::D13,
        RuleId::D14,
        RuleId::D15,
        RuleId::D16,
        RuleId::D17,
        RuleId::D18,
        RuleId::D19,
        RuleId::D20,
        RuleId::D21,
        RuleId::D22,
        RuleId::D99,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::D01 => "D01",
            RuleId::D02 => "D02",
            RuleId::D03 => "D03",
            RuleId::D04 => "D04",
            RuleId::D05 => "D05",
            RuleId::D06 => "D06",
            RuleId::D07 => "D07",
            RuleId::D08 => "D08",
            RuleId::D09 => "D09",
            RuleId::D10 => "D10",
            RuleId::D11 => "D11",
            RuleId::D12 => "D12",
            RuleId::D13 => "D13",
            RuleId::D14 => "D14",
            RuleId::D15 => "D15",
            RuleId::D16 => "D16",
            RuleId::D17 => "D17",
            RuleId::D18 => "D18",
            RuleId::D19 => "D19",
            RuleId::D20 => "D20",
            RuleId::D21 => "D21",
            RuleId::D22 => "D22",
            RuleId::D99 => "D99",
        }
    }

    /// Rules whose review candidates are genuinely ambiguous readings.
    pub fn is_ambiguous(self) -> bool {
        matches!(self, RuleId::D10 | RuleId::D11 | RuleId::D15)
    }

    pub fn parse(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RuleAction {
    Transform,
    ExcelSerial,
    Delete,
    Review,
    Accept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DateRuleOutcome {
    pub rule_id: RuleId,
    pub action: RuleAction,
    pub transformed: Option<DateToken>,
    pub resolved: Option<NaiveDate>,
    /// Ranked readings for `Review`.
    pub candidates: Vec<NaiveDate>,
    pub low_confidence: bool,
    pub note: Option<String>,
}

impl DateRuleOutcome {
    fn new(rule_id: RuleId, action: RuleAction) -> Self {
        DateRuleOutcome {
            rule_id,
            action,
            transformed: None,
            resolved: None,
            candidates: Vec::new(),
            low_confidence: false,
            note: None,
        }
    }

    fn transform(rule_id: RuleId, token: &DateToken, digits: String) -> Self {
        let mut o = Self::new(rule_id, RuleAction::Transform);
        o.transformed = Some(token.derive(digits));
        o
    }

    fn review(rule_id: RuleId, candidates: Vec<NaiveDate>) -> Self {
        let mut o = Self::new(rule_id, RuleAction::Review);
        o.candidates = candidates;
        o
    }

    fn flagged(mut self) -> Self {
        self.low_confidence = true;
        self
    }
}

fn num(s: &str) -> u32 {
    s.parse().expect("digit slice")
}

fn ymd(year: i32, month: u32, day: u32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(year, month, day)
}

/// Calendar-valid readings, in rank order, without duplicates.
fn readings(year: i32, parts: &[(u32, u32)]) -> Vec<NaiveDate> {
    let mut out: Vec<NaiveDate> = Vec::new();
    for &(day, month) in parts {
        if let Some(d) = ymd(year, month, day) {
            if !out.contains(&d) {
                out.push(d);
            }
        }
    }
    out
}

/// Two-digit prefixes of every serial in the context year.
fn serial_prefixes(ctx: &YearContext) -> impl Fn(&str) -> bool {
    let lo = ctx.serial_min / 1000;
    let hi = ctx.serial_max / 1000;
    move |prefix: &str| {
        let p: i64 = prefix.parse().expect("digits");
        (lo..=hi).contains(&p)
    }
}

/// Applies the first matching rule to a standardized token.
pub fn classify_and_apply(token: &DateToken, ctx: &YearContext) -> Result<DateRuleOutcome> {
    let t = token.digits.as_str();
    if !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::NotStandardized(t.to_string()));
    }
    let yyyy = ctx.yyyy();
    let yy = ctx.yy();
    let year = ctx.year;

    let out = match t.len() {
        n if n > 8 => DateRuleOutcome::new(RuleId::D01, RuleAction::Delete),

        5 => {
            let value: i64 = t.parse().expect("digits");
            let in_range = (ctx.serial_min..=ctx.serial_max).contains(&value);
            let is_prefix = serial_prefixes(ctx);
            let ends_yy = t.ends_with(&yy);
            if !is_prefix(&t[..2]) && ends_yy {
                DateRuleOutcome::transform(RuleId::D02, token, format!("{}{yyyy}", &t[..3]))
            } else if !in_range && ends_yy {
                DateRuleOutcome::transform(RuleId::D03, token, format!("{}{yyyy}", &t[..3]))
            } else if !in_range {
                DateRuleOutcome::new(RuleId::D04, RuleAction::Delete)
            } else {
                let mut o = DateRuleOutcome::new(RuleId::D05, RuleAction::ExcelSerial);
                o.resolved = Some(excel_serial_to_date(value)?);
                o
            }
        }

        8 => {
            if !t.ends_with(&yyyy) {
                let shared = t[4..]
                    .bytes()
                    .zip(yyyy.bytes())
                    .filter(|(a, b)| a == b)
                    .count();
                let o = DateRuleOutcome::transform(RuleId::D06, token, format!("{}{yyyy}", &t[..4]));
                if shared < 2 {
                    o.flagged()
                } else {
                    o
                }
            } else if num(&t[2..4]) > 12 && num(&t[..2]) <= 12 {
                DateRuleOutcome::transform(
                    RuleId::D07,
                    token,
                    format!("{}{}{}", &t[2..4], &t[..2], &t[4..]),
                )
            } else {
                match parse_ddmmyyyy_str(t) {
                    Ok(d) => {
                        let mut o = DateRuleOutcome::new(RuleId::D22, RuleAction::Accept);
                        o.resolved = Some(d);
                        o
                    }
                    Err(_) => {
                        let mut o = DateRuleOutcome::review(RuleId::D22, Vec::new());
                        o.note = Some("calendar-invalid".into());
                        o
                    }
                }
            }
        }

        7 => {
            let six = &t[..6];
            if t.ends_with('1')
                && !t.ends_with(&yyyy)
                && six.ends_with(&yy)
                && num(&six[2..4]) <= 12
                && num(&six[..2]) <= 31
            {
                DateRuleOutcome::transform(RuleId::D08, token, six.to_string())
            } else if !t.ends_with(&yyyy) {
                DateRuleOutcome::transform(RuleId::D09, token, format!("{}{yyyy}", &t[..3])).flagged()
            } else if ["311", "211", "111"].contains(&&t[..3]) {
                // d-mm (November) first, then dd-m (January)
                let parts = [(num(&t[..1]), num(&t[1..3])), (num(&t[..2]), num(&t[2..3]))];
                DateRuleOutcome::review(RuleId::D10, readings(year, &parts))
            } else if ["10", "20", "30"].contains(&&t[..2]) {
                let parts = [(num(&t[..1]), num(&t[1..3])), (num(&t[..2]), num(&t[2..3]))];
                DateRuleOutcome::review(RuleId::D11, readings(year, &parts))
            } else if t.starts_with('0') {
                DateRuleOutcome::transform(RuleId::D12, token, format!("{}0{}", &t[..2], &t[2..]))
            } else if num(&t[1..3]) <= 12 {
                DateRuleOutcome::transform(RuleId::D13, token, format!("0{t}"))
            } else {
                DateRuleOutcome::transform(RuleId::D14, token, format!("{}0{}", &t[..2], &t[2..]))
            }
        }

        6 => {
            if t.starts_with(&yyyy) {
                // yyyydm first, then yyyymd
                let parts = [(num(&t[4..5]), num(&t[5..6])), (num(&t[5..6]), num(&t[4..5]))];
                DateRuleOutcome::review(RuleId::D15, readings(year, &parts))
            } else if t.ends_with(&yyyy) {
                let parts = [(num(&t[..1]), num(&t[1..2]))];
                DateRuleOutcome::review(RuleId::D15, readings(year, &parts))
            } else if !t.ends_with(&yy) {
                DateRuleOutcome::transform(RuleId::D16, token, format!("{}{yy}", &t[..4]))
            } else if num(&t[2..4]) <= 12 && num(&t[..2]) <= 31 {
                DateRuleOutcome::transform(RuleId::D17, token, format!("{}{yyyy}", &t[..4]))
            } else {
                let mut o = DateRuleOutcome::review(RuleId::D99, Vec::new());
                o.note = Some("no rule matched".into());
                o
            }
        }

        4 => {
            if t == yyyy {
                DateRuleOutcome::review(RuleId::D18, Vec::new())
            } else if !t.ends_with(&yy) {
                DateRuleOutcome::transform(RuleId::D19, token, format!("{t}{yyyy}"))
            } else {
                DateRuleOutcome::transform(
                    RuleId::D20,
                    token,
                    format!("0{}0{}{yyyy}", &t[..1], &t[1..2]),
                )
            }
        }

        _ => DateRuleOutcome::new(RuleId::D21, RuleAction::Delete),
    };
    Ok(out)
}

/// One entry of the machine-readable rule catalog.
#[derive(Debug, Clone, Serialize)]
pub struct RuleEntry {
    pub rule_id: &'static str,
    pub token_length: &'static str,
    pub condition: &'static str,
    pub action: RuleAction,
    pub transform: &'static str,
    /// Short label of the anomaly class the rule was written for.
    pub source_row: &'static str,
    pub ambiguous: bool,
}

pub fn catalog() -> Vec<RuleEntry> {
    use RuleAction::*;
    let e = |rule_id, token_length, condition, action, transform, source_row| RuleEntry {
        rule_id,
        token_length,
        condition,
        action,
        transform,
        source_row,
        ambiguous: RuleId::parse(rule_id).is_some_and(RuleId::is_ambiguous),
    };
    vec![
        e("S01", "any", "cell contains non-digit characters", Transform,
          "replace English month names by their number, drop every other non-digit", "non-digit characters present"),
        e("D01", ">8", "more than eight digits", Delete, "delete", "longer than ddmmyyyy"),
        e("D02", "5", "leading two digits are not a serial prefix of the year and the token ends in yy", Transform,
          "replace trailing yy with yyyy (dmmyy/ddmyy; the source table's dmmmy/ddmmy label is read as a typo)",
          "five digits, not serial-shaped, ends yy"),
        e("D03", "5", "value outside the year's serial range and ends in yy", Transform,
          "replace trailing yy with yyyy", "five digits, outside serial range, ends yy"),
        e("D04", "5", "value outside the year's serial range and does not end in yy", Delete,
          "delete; the original is kept in the audit log", "five digits, outside serial range, other ending"),
        e("D05", "5", "value inside the year's serial range", ExcelSerial,
          "days since 1899-12-30", "spreadsheet serial"),
        e("D06", "8", "does not end in yyyy", Transform,
          "replace last four digits with yyyy; low confidence when fewer than two digits agree positionally",
          "eight digits, wrong year"),
        e("D07", "8", "month field above 12 while day field is at most 12", Transform,
          "swap mmdd to ddmm", "eight digits, mmddyyyy"),
        e("D08", "7", "ends in 1, not in yyyy, and the first six digits form a ddmmyy date of the year", Transform,
          "drop the trailing 1", "seven digits, test-name digit appended"),
        e("D09", "7", "does not end in yyyy", Transform,
          "replace last four digits with yyyy; low confidence", "seven digits, wrong year"),
        e("D10", "7", "starts with 311, 211 or 111 and ends in yyyy", Review,
          "candidates: d-11-yyyy, then dd-01-yyyy", "seven digits, November/January overlap"),
        e("D11", "7", "starts with 10, 20 or 30 and ends in yyyy", Review,
          "candidates: d-0m-yyyy, then dd-m-yyyy", "seven digits, 1st-3rd vs 10th/20th/30th overlap"),
        e("D12", "7", "starts with 0", Transform, "insert 0 at the third position (ddmyyyy)", "seven digits, leading zero"),
        e("D13", "7", "positions 2-3 form a month (at most 12)", Transform,
          "prepend 0 (dmmyyyy)", "seven digits, single-digit day"),
        e("D14", "7", "any other seven-digit token", Transform,
          "insert 0 at the third position (ddmyyyy)", "seven digits, single-digit month"),
        e("D15", "6", "starts or ends with yyyy", Review,
          "candidates: yyyydm, then yyyymd (or dmyyyy)", "six digits containing the full year"),
        e("D16", "6", "does not end in yy", Transform, "replace last two digits with yy", "six digits, wrong year"),
        e("D17", "6", "ends in yy, month at most 12, day at most 31", Transform,
          "replace trailing yy with yyyy", "six digits, ddmmyy"),
        e("D18", "4", "equals yyyy", Review, "manual correction", "four digits, year only"),
        e("D19", "4", "does not end in yy", Transform, "treat as ddmm, append yyyy", "four digits, ddmm"),
        e("D20", "4", "any other four-digit token", Transform,
          "treat as dmyy: zero-pad day and month, expand yy", "four digits, dmyy"),
        e("D21", "0-3", "three or fewer digits", Delete, "delete; the original is kept in the audit log",
          "three or fewer digits"),
        e("D22", "8", "ends in yyyy", Accept, "parse ddmmyyyy; calendar-invalid tokens go to review",
          "canonical ddmmyyyy"),
        e("D99", "6", "six digits ending in yy whose day or month field is out of range", Review,
          "manual correction", "unclassified"),
    ]
}

pub fn catalog_json() -> String {
    serde_json::to_string_pretty(&catalog()).expect("catalog serializes")
}
