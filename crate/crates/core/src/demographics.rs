//! Age and sex extraction, including recovery of values typed into the wrong
//! column.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CellOutcome, ColumnRole, RawRecord};

pub const AGE_MAX_YEARS: f64 = 120.0;
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeUnit {
    Years,
    Months,
    Days,
    Unstated,
}

impl AgeUnit {
    fn scale(self) -> f64 {
        match self {
            AgeUnit::Years | AgeUnit::Unstated => 1.0,
            AgeUnit::Months => 1.0 / 12.0,
            AgeUnit::Days => 1.0 / DAYS_PER_YEAR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeValue {
    pub years: f64,
    pub unit_seen: AgeUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Transgender,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Transgender => "Transgender",
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s {
            "Male" => Some(Sex::Male),
            "Female" => Some(Sex::Female),
            "Transgender" => Some(Sex::Transgender),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexValue {
    pub category: Sex,
    pub matched_keyword: String,
}

/// Keyword table. Categories are tried in field order; a keyword matches
/// when the standardized cell contains it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexKeywords {
    pub female: Vec<String>,
    pub male: Vec<String>,
    pub transgender: Vec<String>,
    /// Keywords with no target category; matching cells go to review.
    pub review: Vec<String>,
}

impl Default for SexKeywords {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        SexKeywords {
            female: words(&["female", "f"]),
            male: words(&["male", "m"]),
            transgender: words(&["transgender", "tg"]),
            review: words(&["child"]),
        }
    }
}

impl SexKeywords {
    fn categories(&self) -> [(Option<Sex>, &[String]); 4] {
        [
            (Some(Sex::Female), &self.female),
            (Some(Sex::Male), &self.male),
            (Some(Sex::Transgender), &self.transgender),
            (None, &self.review),
        ]
    }

    fn is_keyword(&self, word: &str) -> bool {
        self.categories()
            .iter()
            .any(|(_, ws)| ws.iter().any(|w| w == word))
    }
}

/// Result of a single-cell extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Extraction<T> {
    Found(T),
    Review(&'static str),
    Missing,
}

impl<T> Extraction<T> {
    pub fn found(self) -> Option<T> {
        match self {
            Extraction::Found(v) => Some(v),
            _ => None,
        }
    }
}

pub const AGE_RULE: &str = "AGE";
pub const AGE_UNIT_RULE: &str = "AGE-UNIT";
pub const AGE_RANGE_RULE: &str = "AGE-RANGE";
pub const AGE_NODIGIT_RULE: &str = "AGE-NODIGIT";
pub const AGE_RECOVER_RULE: &str = "AGE-RECOVER";
pub const SEX_RULE: &str = "SEX";
pub const SEX_UNMAPPED_RULE: &str = "SEX-UNMAPPED";
pub const SEX_NOKEYWORD_RULE: &str = "SEX-NOKEYWORD";
pub const SEX_RECOVER_RULE: &str = "SEX-RECOVER";

fn unit_for(word: &str, adjacent: bool) -> Option<AgeUnit> {
    match word {
        "y" | "yr" | "yrs" | "year" | "years" | "yo" => Some(AgeUnit::Years),
        "mo" | "mos" | "mon" | "mons" | "mth" | "mths" | "month" | "months" => Some(AgeUnit::Months),
        "m" if adjacent => Some(AgeUnit::Months),
        "d" | "day" | "days" => Some(AgeUnit::Days),
        _ => None,
    }
}

#[derive(Debug)]
struct AgeScan {
    pairs: Vec<(f64, Option<AgeUnit>)>,
    /// Letter runs that were not consumed as units.
    leftover: Vec<String>,
}

fn scan_age(raw: &str) -> AgeScan {
    let chars: Vec<char> = raw.chars().collect();
    let mut pairs = Vec::new();
    let mut leftover = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let number: String = chars[start..i].iter().collect();
            let value: f64 = number.parse().unwrap_or(f64::NAN);

            let mut j = i;
            while j < chars.len() && chars[j] == ' ' {
                j += 1;
            }
            let adjacent = j == i;
            let wstart = j;
            while j < chars.len() && chars[j].is_ascii_alphabetic() {
                j += 1;
            }
            let word: String = chars[wstart..j].iter().collect::<String>().to_ascii_lowercase();
            match unit_for(&word, adjacent) {
                Some(unit) => {
                    pairs.push((value, Some(unit)));
                    i = j;
                }
                None => pairs.push((value, None)),
            }
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            leftover.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            i += 1;
        }
    }
    AgeScan { pairs, leftover }
}

fn age_from_pairs(pairs: &[(f64, Option<AgeUnit>)]) -> Option<AgeValue> {
    let (first, first_unit) = *pairs.first()?;
    if pairs.iter().any(|(_, u)| u.is_some()) {
        let years = pairs
            .iter()
            .filter_map(|(v, u)| u.map(|u| v * u.scale()))
            .sum();
        let unit_seen = pairs.iter().find_map(|(_, u)| *u).expect("some unit");
        Some(AgeValue { years, unit_seen })
    } else {
        Some(AgeValue {
            years: first * first_unit.unwrap_or(AgeUnit::Unstated).scale(),
            unit_seen: AgeUnit::Unstated,
        })
    }
}

fn in_range(years: f64) -> bool {
    (0.0..=AGE_MAX_YEARS).contains(&years)
}

/// Extracts an age in years from free text.
pub fn extract_age(raw: &str) -> Extraction<AgeValue> {
    if raw.trim().is_empty() {
        return Extraction::Missing;
    }
    let scan = scan_age(raw);
    match age_from_pairs(&scan.pairs) {
        None => Extraction::Review(AGE_NODIGIT_RULE),
        Some(age) if !in_range(age.years) => Extraction::Review(AGE_RANGE_RULE),
        Some(age) => Extraction::Found(age),
    }
}

/// Canonical text form of an age; parses back to the same number.
pub fn render_age(years: f64) -> String {
    format!("{years}")
}

pub fn age_outcome(raw: &str) -> (CellOutcome, Option<AgeValue>) {
    match extract_age(raw) {
        Extraction::Missing => (CellOutcome::missing(), None),
        Extraction::Review(rule) => (CellOutcome::review(rule, Vec::new()), None),
        Extraction::Found(age) => {
            let rule = if age.unit_seen == AgeUnit::Unstated {
                AGE_RULE
            } else {
                AGE_UNIT_RULE
            };
            (CellOutcome::resolved(rule, raw, render_age(age.years)), Some(age))
        }
    }
}

/// Lowercase letters only; digits, punctuation and whitespace removed.
fn standardize_sex(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn extract_sex(raw: &str, keywords: &SexKeywords) -> Extraction<SexValue> {
    let token = standardize_sex(raw);
    if token.is_empty() {
        return if raw.trim().is_empty() {
            Extraction::Missing
        } else {
            Extraction::Review(SEX_NOKEYWORD_RULE)
        };
    }
    for (category, words) in keywords.categories() {
        // full-word matches take precedence so "male" is not read through its "m"
        let hit = words
            .iter()
            .find(|w| **w == token)
            .or_else(|| words.iter().find(|w| token.contains(w.as_str())));
        if let Some(word) = hit {
            return match category {
                Some(category) => Extraction::Found(SexValue {
                    category,
                    matched_keyword: word.clone(),
                }),
                None => Extraction::Review(SEX_UNMAPPED_RULE),
            };
        }
    }
    Extraction::Review(SEX_NOKEYWORD_RULE)
}

pub fn sex_outcome(raw: &str, keywords: &SexKeywords) -> (CellOutcome, Option<SexValue>) {
    match extract_sex(raw, keywords) {
        Extraction::Missing => (CellOutcome::missing(), None),
        Extraction::Review(rule) => (CellOutcome::review(rule, Vec::new()), None),
        Extraction::Found(v) => (
            CellOutcome::resolved(SEX_RULE, raw, v.category.as_str()),
            Some(v),
        ),
    }
}

/// Age from a cell that holds nothing but an age, optionally with a sex keyword.
fn strict_age(cell: &str, keywords: &SexKeywords) -> Option<AgeValue> {
    let scan = scan_age(cell);
    if scan.pairs.is_empty() {
        return None;
    }
    if scan.pairs.len() > 1 && scan.pairs.iter().any(|(_, u)| u.is_none()) {
        return None;
    }
    if !scan.leftover.iter().all(|w| keywords.is_keyword(w)) || scan.leftover.len() > 1 {
        return None;
    }
    age_from_pairs(&scan.pairs).filter(|a| in_range(a.years))
}

/// Sex from a cell whose letters spell exactly one keyword. In a cell with
/// digits, age units are skipped first so "5m" is an age, not a sex.
fn strict_sex(cell: &str, keywords: &SexKeywords) -> Option<SexValue> {
    let token = if cell.chars().any(|c| c.is_ascii_digit()) {
        match scan_age(cell).leftover.as_slice() {
            [word] => standardize_sex(word),
            _ => return None,
        }
    } else {
        standardize_sex(cell)
    };
    if token.is_empty() {
        return None;
    }
    keywords
        .categories()
        .iter()
        .find_map(|(category, words)| {
            let category = (*category)?;
            words.iter().find(|w| **w == token).map(|w| SexValue {
                category,
                matched_keyword: w.clone(),
            })
        })
}

/// A value recovered from another column of the same row.
#[derive(Debug, Clone, PartialEq)]
pub enum Recovered {
    Age(AgeValue),
    Sex(SexValue),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub value: Recovered,
    pub source_column: String,
    pub outcome: CellOutcome,
}

/// Searches the paired demographic column, then `Other` columns, for a value
/// belonging to `missing_role`. Cells are only read, never consumed.
pub fn recover_misplaced(
    record: &RawRecord,
    missing_role: ColumnRole,
    keywords: &SexKeywords,
    headers: &dyn Fn(ColumnRole) -> String,
) -> Option<Recovery> {
    let paired = match missing_role {
        ColumnRole::Age => ColumnRole::Sex,
        ColumnRole::Sex => ColumnRole::Age,
        _ => return None,
    };
    let before = record.cell(missing_role).unwrap_or("");

    let phase1 = record
        .cell(paired)
        .map(|c| (headers(paired), c))
        .into_iter();
    let phase2 = record.other.iter().map(|(h, c)| (h.clone(), c.as_str()));

    for (column, cell) in phase1.chain(phase2) {
        let found = match missing_role {
            ColumnRole::Age => strict_age(cell, keywords).map(|a| {
                let after = render_age(a.years);
                (Recovered::Age(a), AGE_RECOVER_RULE, after)
            }),
            _ => strict_sex(cell, keywords).map(|s| {
                let after = s.category.as_str().to_string();
                (Recovered::Sex(s), SEX_RECOVER_RULE, after)
            }),
        };
        if let Some((value, rule, after)) = found {
            let mut outcome = CellOutcome::resolved(rule, before, after);
            outcome.note = Some(format!("recovered from column {column:?}"));
            return Some(Recovery {
                value,
                source_column: column,
                outcome,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn age(raw: &str) -> Option<f64> {
        extract_age(raw).found().map(|a| a.years)
    }

    fn sex(raw: &str) -> Extraction<Sex> {
        match extract_sex(raw, &SexKeywords::default()) {
            Extraction::Found(v) => Extraction::Found(v.category),
            Extraction::Review(r) => Extraction::Review(r),
            Extraction::Missing => Extraction::Missing,
        }
    }

    #[test]
    fn age_examples() {
        assert_eq!(extract_age("25").found().unwrap(), AgeValue { years: 25.0, unit_seen: AgeUnit::Unstated });
        let six = extract_age("6 months").found().unwrap();
        assert_eq!(six.years, 0.5);
        assert_eq!(six.unit_seen, AgeUnit::Months);
        assert_eq!(extract_age("135"), Extraction::Review(AGE_RANGE_RULE));
        assert_eq!(extract_age("  "), Extraction::Missing);
        assert_eq!(extract_age("adult"), Extraction::Review(AGE_NODIGIT_RULE));
    }

    #[test]
    fn age_units() {
        assert_eq!(age("25 yrs"), Some(25.0));
        assert_eq!(age("25Y"), Some(25.0));
        assert_eq!(age("6m"), Some(0.5));
        assert_eq!(age("6 mo"), Some(0.5));
        assert_eq!(age("73 days"), Some(73.0 / DAYS_PER_YEAR));
        assert_eq!(age("2 yrs 6 months"), Some(2.5));
        assert_eq!(age("1.5"), Some(1.5));
        // a spaced "m" is a sex marker, not months
        assert_eq!(age("34 M"), Some(34.0));
        assert_eq!(age("34/M"), Some(34.0));
        assert_eq!(age("120"), Some(120.0));
        assert_eq!(age("0"), Some(0.0));
    }

    #[test]
    fn age_outcomes() {
        let (o, _) = age_outcome("25");
        assert_eq!(o.action, crate::model::Action::Unchanged);
        let (o, _) = age_outcome("6 months");
        assert_eq!((o.action, o.after.as_str()), (crate::model::Action::AutoCorrected, "0.5"));
    }

    #[test]
    fn sex_examples() {
        assert_eq!(sex("FEMALE"), Extraction::Found(Sex::Female));
        assert_eq!(sex("M/22"), Extraction::Found(Sex::Male));
        assert_eq!(sex("child"), Extraction::Review(SEX_UNMAPPED_RULE));
        assert_eq!(sex("Male"), Extraction::Found(Sex::Male));
        assert_eq!(sex("f"), Extraction::Found(Sex::Female));
        assert_eq!(sex("TG"), Extraction::Found(Sex::Transgender));
        assert_eq!(sex("Transgender"), Extraction::Found(Sex::Transgender));
        assert_eq!(sex(""), Extraction::Missing);
        assert_eq!(sex("22"), Extraction::Review(SEX_NOKEYWORD_RULE));
        assert_eq!(sex("xyz"), Extraction::Review(SEX_NOKEYWORD_RULE));
    }

    fn record(cells: &[(ColumnRole, &str)], other: &[(&str, &str)]) -> RawRecord {
        RawRecord {
            row_index: 0,
            cells: cells.iter().map(|(r, c)| (*r, c.to_string())).collect::<BTreeMap<_, _>>(),
            other: other.iter().map(|(h, c)| (h.to_string(), c.to_string())).collect(),
            source_file: "t".into(),
            invalid_utf8: vec![],
        }
    }

    fn header(role: ColumnRole) -> String {
        role.as_str().to_string()
    }

    #[test]
    fn age_recovered_from_sex_column() {
        let kw = SexKeywords::default();
        let rec = record(&[(ColumnRole::Age, ""), (ColumnRole::Sex, "34/M")], &[]);
        let got = recover_misplaced(&rec, ColumnRole::Age, &kw, &header).unwrap();
        assert_eq!(got.source_column, "Sex");
        assert!(matches!(got.value, Recovered::Age(a) if a.years == 34.0));
        assert_eq!(got.outcome.after, "34");
        // the shared cell still yields sex
        assert_eq!(sex(rec.cell(ColumnRole::Sex).unwrap()), Extraction::Found(Sex::Male));
    }

    #[test]
    fn nothing_to_recover() {
        let kw = SexKeywords::default();
        let rec = record(&[(ColumnRole::Age, ""), (ColumnRole::Sex, "")], &[("Remarks", "")]);
        assert!(recover_misplaced(&rec, ColumnRole::Age, &kw, &header).is_none());
        assert!(recover_misplaced(&rec, ColumnRole::Sex, &kw, &header).is_none());
    }

    #[test]
    fn sex_recovered_from_other_column() {
        let kw = SexKeywords::default();
        let rec = record(
            &[(ColumnRole::Age, "40"), (ColumnRole::Sex, "")],
            &[("Test Type", "NS1 IgM"), ("Remarks", "female")],
        );
        let got = recover_misplaced(&rec, ColumnRole::Sex, &kw, &header).unwrap();
        assert_eq!(got.source_column, "Remarks");
        assert!(matches!(got.value, Recovered::Sex(ref s) if s.category == Sex::Female));
        assert!(got.outcome.note.unwrap().contains("Remarks"));
    }

    #[test]
    fn sex_recovered_from_age_cell() {
        let kw = SexKeywords::default();
        for (age, want) in [("6 Yr M", Sex::Male), ("7Y F", Sex::Female), ("34 M", Sex::Male)] {
            let rec = record(&[(ColumnRole::Age, age), (ColumnRole::Sex, "")], &[]);
            let got = recover_misplaced(&rec, ColumnRole::Sex, &kw, &header).unwrap();
            assert!(matches!(got.value, Recovered::Sex(ref s) if s.category == want), "{age}");
        }
        // "m" glued to the digits is a month unit, so the remark wins.
        let rec = record(&[(ColumnRole::Age, "5m"), (ColumnRole::Sex, "")], &[("Remarks", "F")]);
        let got = recover_misplaced(&rec, ColumnRole::Sex, &kw, &header).unwrap();
        assert_eq!(got.source_column, "Remarks");
        assert!(matches!(got.value, Recovered::Sex(ref s) if s.category == Sex::Female));
    }

    #[test]
    fn test_names_are_not_ages() {
        let kw = SexKeywords::default();
        let rec = record(&[(ColumnRole::Age, "")], &[("Test Type", "NS1"), ("Lab", "ELISA 2")]);
        assert!(recover_misplaced(&rec, ColumnRole::Age, &kw, &header).is_none());
    }
}
