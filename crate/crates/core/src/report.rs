//! Audit log, per-rule counters and the extraction summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imputer::OffsetStats;
use crate::model::{Action, CellVerdict, CleanRecord, ColumnRole, DateProvenance};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounter {
    pub screened: u64,
    pub auto: u64,
    pub manual: u64,
    pub deleted: u64,
    pub unchanged: u64,
    pub pending: u64,
}

impl RuleCounter {
    fn record(&mut self, action: Action) {
        let bucket = match action {
            Action::AutoCorrected => &mut self.auto,
            Action::ManuallyCorrected => &mut self.manual,
            Action::Deleted => &mut self.deleted,
            Action::Unchanged => &mut self.unchanged,
            Action::ReviewQueued => &mut self.pending,
            Action::Missing => return,
        };
        *bucket += 1;
        self.screened += 1;
    }

    fn add(&mut self, other: &RuleCounter) {
        self.screened += other.screened;
        self.auto += other.auto;
        self.manual += other.manual;
        self.deleted += other.deleted;
        self.unchanged += other.unchanged;
        self.pending += other.pending;
    }

    /// Every screened cell ended in exactly one bucket.
    pub fn is_balanced(&self) -> bool {
        self.screened == self.auto + self.manual + self.deleted + self.unchanged + self.pending
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub total: u64,
    pub extracted: u64,
    pub imputed: u64,
    pub missing: u64,
    /// (extracted + imputed) / total, one decimal.
    pub percent_extracted: f64,
    /// extracted / total, one decimal.
    pub percent_parsed_only: f64,
}

fn percent(n: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (n as f64 * 1000.0 / total as f64).round() / 10.0
}

impl VariableSummary {
    fn new(total: u64, extracted: u64, imputed: u64) -> Self {
        VariableSummary {
            total,
            extracted,
            imputed,
            missing: total - extracted - imputed,
            percent_extracted: percent(extracted + imputed, total),
            percent_parsed_only: percent(extracted, total),
        }
    }
}

/// Verdicts of a run in `(row_index, role)` order plus derived tallies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditLog {
    pub verdicts: Vec<CellVerdict>,
    pub rule_counters: BTreeMap<String, RuleCounter>,
    pub per_variable_summary: BTreeMap<ColumnRole, VariableSummary>,
    pub offsets: Option<OffsetStats>,
    pub year: i32,
    pub records: u64,
    pub quarantined: u64,
}

impl AuditLog {
    pub fn new(
        year: i32,
        mut verdicts: Vec<CellVerdict>,
        records: &[CleanRecord],
        roles: &[ColumnRole],
        offsets: Option<OffsetStats>,
    ) -> Self {
        verdicts.sort_by_key(|v| (v.row_index, v.role));
        let mut log = AuditLog {
            verdicts,
            year,
            offsets,
            ..AuditLog::default()
        };
        log.refresh(records, roles);
        log
    }

    /// Recomputes counters and summaries after verdicts or records changed.
    pub fn refresh(&mut self, records: &[CleanRecord], roles: &[ColumnRole]) {
        self.rule_counters = count_rules(&self.verdicts);
        self.per_variable_summary = summarize_variables(records, roles);
        self.records = records.len() as u64;
        self.quarantined = self
            .verdicts
            .iter()
            .filter(|v| v.role == ColumnRole::Other)
            .count() as u64;
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for v in &self.verdicts {
            serde_json::to_writer(&mut out, v)?;
            out.write_all(b"\n").map_err(|e| crate::error::Error::io("<audit>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<CellVerdict>> {
        let mut out = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| crate::error::Error::io("<audit>", e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

pub fn count_rules(verdicts: &[CellVerdict]) -> BTreeMap<String, RuleCounter> {
    let mut counters: BTreeMap<String, RuleCounter> = BTreeMap::new();
    for v in verdicts {
        for rule in v.rules() {
            counters.entry(rule.to_string()).or_default().record(v.action);
        }
    }
    counters
}

/// Extraction tallies for the analysable variables among `roles`.
pub fn summarize_variables(records: &[CleanRecord], roles: &[ColumnRole]) -> BTreeMap<ColumnRole, VariableSummary> {
    let total = records.len() as u64;
    let mut out = BTreeMap::new();
    for &role in roles {
        let count = |f: &dyn Fn(&CleanRecord) -> bool| records.iter().filter(|r| f(r)).count() as u64;
        let summary = match role {
            ColumnRole::TestDate => VariableSummary::new(
                total,
                count(&|r| r.test_date.is_some() && r.test_date_provenance == DateProvenance::Parsed),
                count(&|r| r.test_date.is_some() && r.test_date_provenance == DateProvenance::Imputed),
                ),
            r if r.is_date() => VariableSummary::new(total, count(&|x| x.related_dates.contains_key(&r)), 0),
            ColumnRole::Age => VariableSummary::new(total, count(&|r| r.age_years.is_some()), 0),
            ColumnRole::Sex => VariableSummary::new(total, count(&|r| r.sex.is_some()), 0),
            ColumnRole::Address => VariableSummary::new(total, count(&|r| r.location.is_some()), 0),
            _ => continue,
        };
        out.insert(role, summary);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// Cells that went through at least one rule.
    pub screened: u64,
    pub auto: u64,
    pub deleted: u64,
    pub unchanged: u64,
    pub manual: u64,
    pub pending: u64,
    /// (auto + deleted + unchanged) / screened.
    pub percent_automated: f64,
    /// (manual + pending) / screened.
    pub percent_review: f64,
}

/// Machine-readable summary of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub year: i32,
    pub records: u64,
    pub quarantined_rows: u64,
    pub variables: BTreeMap<String, VariableSummary>,
    /// Date-cleaning cells only.
    pub date_totals: Totals,
    pub rules: BTreeMap<String, RuleCounter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<OffsetStats>,
}

pub fn summarize(audit: &AuditLog) -> Report {
    let mut t = RuleCounter::default();
    for v in audit.verdicts.iter().filter(|v| v.role.is_date() && !v.rule_id.is_empty()) {
        t.record(v.action);
    }
    let automated = t.auto + t.deleted + t.unchanged;
    Report {
        year: audit.year,
        records: audit.records,
        quarantined_rows: audit.quarantined,
        variables: audit
            .per_variable_summary
            .iter()
            .map(|(r, s)| (r.as_str().to_string(), *s))
            .collect(),
        date_totals: Totals {
            screened: t.screened,
            auto: t.auto,
            deleted: t.deleted,
            unchanged: t.unchanged,
            manual: t.manual,
            pending: t.pending,
            percent_automated: percent2(automated, t.screened),
            percent_review: percent2(t.manual + t.pending, t.screened),
        },
        rules: audit.rule_counters.clone(),
        offsets: audit.offsets.clone(),
    }
}

fn percent2(n: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (n as f64 * 10000.0 / total as f64).round() / 100.0
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Batch {}: {} records, {} quarantined rows", self.year, self.records, self.quarantined_rows);
        s.push('\n');
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>9} {:>8} {:>8} {:>9} {:>9}",
            "variable", "total", "extracted", "imputed", "missing", "parsed%", "total%"
        );
        for (name, v) in &self.variables {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>9} {:>8} {:>8} {:>9.1} {:>9.1}",
                name, v.total, v.extracted, v.imputed, v.missing, v.percent_parsed_only, v.percent_extracted
            );
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
            "rule", "screened", "auto", "manual", "deleted", "unchanged", "pending"
        );
        for (rule, c) in &self.rules {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
                rule, c.screened, c.auto, c.manual, c.deleted, c.unchanged, c.pending
            );
        }
        let t = &self.date_totals;
        s.push('\n');
        let _ = writeln!(
            s,
            "date cells: {} screened, {} automated ({:.2}%), {} manual or pending ({:.2}%)",
            t.screened,
            t.auto + t.deleted + t.unchanged,
            t.percent_automated,
            t.manual + t.pending,
            t.percent_review
        );
        if let Some(o) = &self.offsets {
            let fmt = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |m| format!("{m:.2}"));
            let _ = writeln!(
                s,
                "offsets: admission->test {} days (n={}), test->discharge {} days (n={}), {} anomalies",
                fmt(o.mean_admission_to_test),
                o.n_admission_pairs,
                fmt(o.mean_test_to_discharge),
                o.n_discharge_pairs,
                o.anomalies
            );
        }
        s
    }
}

/// Sum of all per-rule counters.
pub fn counter_total(counters: &BTreeMap<String, RuleCounter>) -> RuleCounter {
    let mut t = RuleCounter::default();
    for c in counters.values() {
        t.add(c);
    }
    t
}

pub const CLEAN_HEADERS: [&str; 10] = [
    "anon_id",
    "test_date",
    "date_provenance",
    "age_years",
    "sex",
    "district",
    "block",
    "settlement",
    "lat",
    "lon",
];

/// Writes the analysis-ready dataset.
pub fn write_clean_csv<W: Write>(records: &[CleanRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLEAN_HEADERS)?;
    let opt = |s: Option<&String>| s.cloned().unwrap_or_default();
    for r in records {
        let loc = r.location.as_ref();
        w.write_record([
            r.anon_id.clone(),
            r.test_date.map(crate::date::iso).unwrap_or_default(),
            r.test_date_provenance.as_str().to_string(),
            r.age_years.map(|a| a.to_string()).unwrap_or_default(),
            r.sex.map(|s| s.as_str().to_string()).unwrap_or_default(),
            opt(loc.and_then(|l| l.district.as_ref())),
            opt(loc.and_then(|l| l.block.as_ref())),
            opt(loc.and_then(|l| l.settlement.as_ref())),
            loc.and_then(|l| l.latitude).map(|v| v.to_string()).unwrap_or_default(),
            loc.and_then(|l| l.longitude).map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| crate::error::Error::io("<clean csv>", e))
}
