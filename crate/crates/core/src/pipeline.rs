//! Batch orchestration: identifiers, dates, demographics and addresses per
//! record, then batch offsets, imputation and pseudonyms.

use std::collections::HashMap;

use crate::address::{clean_address_cell, geocode, Gazetteer, GeocodeStatus, Geocoder, GEOCODE_RETRY_RULE};
use crate::anonymizer::{pseudonymize, strip_identifiers, AnonConfig};
use crate::config::CleanConfig;
use crate::date::{clean_date_cell, iso};
use crate::demographics::{age_outcome, recover_misplaced, sex_outcome, Recovered};
use crate::error::{Error, Result};
use crate::exec::{ExecMode, Executor};
use crate::imputer::{compute_offsets, impute_test_date};
use crate::ingest::{Ingested, MALFORMED_ROW};
use crate::model::{Action, CellOutcome, CellVerdict, CleanRecord, ColumnRole, DateProvenance, Phase, RawRecord, YearContext};
use crate::report::AuditLog;
use crate::review::{Resolution, ReviewItem, Validated, Validator};

pub const INVALID_UTF8_RULE: &str = "invalid-utf8";

/// Loaded collaborators shared by every record.
pub struct Resources {
    pub gazetteer: Gazetteer,
    pub geocoder: Geocoder,
    pub anon: AnonConfig,
    pub exec: ExecMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<CleanRecord>,
    pub audit: AuditLog,
    pub review: Vec<ReviewItem>,
}

struct RecordResult {
    clean: CleanRecord,
    verdicts: Vec<CellVerdict>,
    review: Vec<ReviewItem>,
}

fn push(out: &mut RecordResult, raw: &RawRecord, role: ColumnRole, before: &str, outcome: CellOutcome) {
    let outcome = if raw.invalid_utf8.contains(&role) {
        CellOutcome::review(INVALID_UTF8_RULE, Vec::new()).with_note("source bytes were not valid UTF-8")
    } else {
        outcome
    };
    let candidates = outcome.candidates.clone();
    let verdict = outcome.into_verdict(raw.row_index, role, before);
    if verdict.action == Action::ReviewQueued {
        out.review.push(ReviewItem::new(verdict.clone(), candidates));
    }
    out.verdicts.push(verdict);
}

fn process_record(original: &RawRecord, ctx: &YearContext, config: &CleanConfig, res: &Resources) -> Result<RecordResult> {
    let (raw, id_verdicts) = strip_identifiers(original);
    let mut out = RecordResult {
        clean: CleanRecord::empty(raw.row_index),
        verdicts: id_verdicts,
        review: Vec::new(),
    };
    let utf8_ok = |role: ColumnRole| !raw.invalid_utf8.contains(&role);

    for role in ColumnRole::DATES {
        let Some(cell) = raw.cell(role) else { continue };
        let cleaned = clean_date_cell(cell, ctx);
        if let Some(date) = cleaned.date.filter(|_| utf8_ok(role)) {
            if role == ColumnRole::TestDate {
                out.clean.test_date = Some(date);
                out.clean.test_date_provenance = DateProvenance::Parsed;
            } else {
                out.clean.related_dates.insert(role, date);
            }
        }
        push(&mut out, &raw, role, cell, cleaned.outcome);
    }

    let keywords = &config.sex_keywords;
    let header = |role: ColumnRole| config.mapping.header_for(role).unwrap_or(role.as_str()).to_string();

    if let Some(cell) = raw.cell(ColumnRole::Age) {
        let (mut outcome, mut value) = age_outcome(cell);
        if value.is_none() && utf8_ok(ColumnRole::Age) {
            if let Some(rec) = recover_misplaced(&raw, ColumnRole::Age, keywords, &header) {
                outcome = chain_recovery(outcome, rec.outcome);
                if let Recovered::Age(a) = rec.value {
                    value = Some(a);
                }
            }
        }
        if utf8_ok(ColumnRole::Age) {
            out.clean.age_years = value.map(|a| a.years);
        }
        push(&mut out, &raw, ColumnRole::Age, cell, outcome);
    }

    if let Some(cell) = raw.cell(ColumnRole::Sex) {
        let (mut outcome, mut value) = sex_outcome(cell, keywords);
        if value.is_none() && utf8_ok(ColumnRole::Sex) {
            if let Some(rec) = recover_misplaced(&raw, ColumnRole::Sex, keywords, &header) {
                outcome = chain_recovery(outcome, rec.outcome);
                if let Recovered::Sex(s) = rec.value {
                    value = Some(s);
                }
            }
        }
        if utf8_ok(ColumnRole::Sex) {
            out.clean.sex = value.map(|s| s.category);
        }
        push(&mut out, &raw, ColumnRole::Sex, cell, outcome);
    }

    if let Some(cell) = raw.cell(ColumnRole::Address) {
        let cleaned = clean_address_cell(cell, &res.gazetteer, &config.abbreviations)?;
        let mut outcome = cleaned.outcome;
        if let Some(loc) = cleaned.location.filter(|_| utf8_ok(ColumnRole::Address)) {
            let (loc, status) = geocode(&loc, &res.geocoder)?;
            match status {
                GeocodeStatus::Retry(msg) => {
                    let candidates = vec![loc.summary()];
                    let rule = format!("{}>{GEOCODE_RETRY_RULE}", outcome.rule_id);
                    outcome = CellOutcome::review(rule, candidates).with_note(format!("geocoding to retry: {msg}"));
                }
                GeocodeStatus::Malformed(msg) => outcome.note = Some(format!("geocoding failed: {msg}")),
                GeocodeStatus::NotFound => outcome.note = Some("geocoder has no coordinates".into()),
                _ => {}
            }
            out.clean.location = Some(loc);
        }
        push(&mut out, &raw, ColumnRole::Address, &cleaned.text, outcome);
    }
    Ok(out)
}

/// A recovered value keeps the rule that flagged the original cell.
fn chain_recovery(original: CellOutcome, mut recovered: CellOutcome) -> CellOutcome {
    if !original.rule_id.is_empty() {
        recovered.rule_id = format!("{}>{}", original.rule_id, recovered.rule_id);
    }
    recovered
}

fn check_config(config: &CleanConfig, res: &Resources) -> Result<()> {
    config.validate()?;
    config.mapping.require_demographics()?;
    if config.mapping.has(ColumnRole::Address) && res.gazetteer.is_empty() {
        return Err(Error::Config("Address is mapped but the gazetteer is empty".into()));
    }
    Ok(())
}

pub fn run_pipeline(ingested: &Ingested, ctx: &YearContext, config: &CleanConfig, res: &Resources) -> Result<PipelineOutput> {
    check_config(config, res)?;
    let exec = Executor::new(res.exec)?;

    let stage1: Vec<RecordResult> = exec
        .map(&ingested.records, |r| process_record(r, ctx, config, res))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(stage1.len());
    let mut verdicts: Vec<CellVerdict> = ingested.quarantined.clone();
    let mut review: Vec<ReviewItem> = ingested
        .quarantined
        .iter()
        .map(|v| ReviewItem::new(v.clone(), Vec::new()))
        .collect();
    for r in stage1 {
        records.push(r.clean);
        verdicts.extend(r.verdicts);
        review.extend(r.review);
    }

    let impute = config.impute && config.mapping.has(ColumnRole::TestDate);
    let offsets = impute.then(|| compute_offsets(&records, ctx.year));
    if let Some(stats) = &offsets {
        let slots: HashMap<usize, usize> = verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role == ColumnRole::TestDate)
            .map(|(i, v)| (v.row_index, i))
            .collect();
        let imputations = exec.map(&records, |r| {
            let slot = slots[&r.row_index];
            let eligible = r.test_date.is_none() && matches!(verdicts[slot].action, Action::Missing | Action::Deleted);
            eligible.then(|| impute_test_date(r, stats, ctx))
        });
        for (rec, imp) in records.iter_mut().zip(imputations) {
            let Some(imp) = imp else { continue };
            let v = &mut verdicts[slots[&rec.row_index]];
            if imp.outcome.action == Action::Missing {
                continue;
            }
            if v.action == Action::Deleted {
                // The deletion stays on record; the estimate only fills the output.
                if let Some(date) = imp.date {
                    v.note = Some(format!("test date estimated by {} as {}", imp.outcome.rule_id, iso(date)));
                    rec.test_date = Some(date);
                    rec.test_date_provenance = DateProvenance::Imputed;
                }
                continue;
            }
            let candidates = imp.outcome.candidates.clone();
            *v = imp.outcome.into_verdict(rec.row_index, ColumnRole::TestDate, &v.before);
            if let Some(date) = imp.date {
                rec.test_date = Some(date);
                rec.test_date_provenance = DateProvenance::Imputed;
            } else if v.action == Action::ReviewQueued {
                review.push(ReviewItem::new(v.clone(), candidates));
            }
        }
    }

    let ids = exec
        .map(&ingested.records, |r| pseudonymize(r, &res.anon))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for (rec, id) in records.iter_mut().zip(ids) {
        rec.anon_id = id;
    }

    review.sort_by_key(ReviewItem::key);
    let roles = config.mapping.cell_roles();
    let audit = AuditLog::new(ctx.year, verdicts, &records, &roles, offsets);
    Ok(PipelineOutput { records, audit, review })
}

/// Outcome counts of [`apply_resolutions`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Applied {
    pub corrected: usize,
    pub deleted: usize,
    pub reopened: usize,
    /// Resolutions whose cell no longer matches this run.
    pub stale: usize,
    pub still_pending: usize,
}

/// Applies terminal resolutions to a pipeline run. Values are re-validated;
/// a value that fails reopens its item with the error attached.
pub fn apply_resolutions(
    output: &mut PipelineOutput,
    resolutions: &[ReviewItem],
    config: &CleanConfig,
    res: &Resources,
) -> Result<Applied> {
    let validator = Validator {
        keywords: &config.sex_keywords,
        abbreviations: &config.abbreviations,
        gazetteer: &res.gazetteer,
    };
    let by_key: HashMap<_, _> = resolutions
        .iter()
        .filter(|r| r.resolution.is_terminal())
        .map(|r| (r.key(), r))
        .collect();
    let record_pos: HashMap<usize, usize> = output
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.row_index, i))
        .collect();
    let verdict_pos: HashMap<(usize, ColumnRole), usize> = output
        .audit
        .verdicts
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.row_index, v.role), i))
        .collect();

    let mut applied = Applied::default();
    for item in output.review.iter_mut().filter(|i| !i.resolution.is_terminal()) {
        let Some(res_item) = by_key.get(&item.key()) else {
            applied.still_pending += 1;
            continue;
        };
        if res_item.verdict.before != item.verdict.before || res_item.verdict.rule_id != item.verdict.rule_id {
            applied.stale += 1;
            applied.still_pending += 1;
            continue;
        }
        let (row, role) = item.key();
        let vi = verdict_pos[&(row, role)];

        let validated = match &res_item.resolution {
            Resolution::Deleted => None,
            _ if role == ColumnRole::Other => {
                item.reopen(format!("a {MALFORMED_ROW} can only be deleted"));
                applied.reopened += 1;
                continue;
            }
            r => {
                let value = res_item.requested_value().unwrap_or_default();
                match validator.check(role, value) {
                    Ok(v) => Some((v, matches!(r, Resolution::Accepted(_)))),
                    Err(e) => {
                        item.reopen(e);
                        applied.reopened += 1;
                        continue;
                    }
                }
            }
        };
        item.resolve(res_item.resolution.clone())?;

        let verdict = &mut output.audit.verdicts[vi];
        verdict.phase = Phase::Edited;
        let record = record_pos.get(&row).map(|&i| &mut output.records[i]);
        match validated {
            None => {
                verdict.action = Action::Deleted;
                verdict.after.clear();
                verdict.note = Some("deleted in review".into());
                if let Some(rec) = record {
                    clear_field(rec, role);
                }
                applied.deleted += 1;
            }
            Some((value, accepted)) => {
                verdict.action = Action::ManuallyCorrected;
                verdict.after = value.canonical();
                verdict.note = Some(if accepted { "candidate accepted in review" } else { "value entered in review" }.into());
                if let Some(rec) = record {
                    set_field(rec, role, value, &res.geocoder)?;
                }
                applied.corrected += 1;
            }
        }
    }
    let roles = config.mapping.cell_roles();
    output.audit.refresh(&output.records, &roles);
    Ok(applied)
}

fn clear_field(rec: &mut CleanRecord, role: ColumnRole) {
    match role {
        ColumnRole::TestDate => {
            rec.test_date = None;
            rec.test_date_provenance = DateProvenance::Missing;
        }
        r if r.is_date() => {
            rec.related_dates.remove(&r);
        }
        ColumnRole::Age => rec.age_years = None,
        ColumnRole::Sex => rec.sex = None,
        ColumnRole::Address => rec.location = None,
        _ => {}
    }
}

fn set_field(rec: &mut CleanRecord, role: ColumnRole, value: Validated, geocoder: &Geocoder) -> Result<()> {
    match value {
        Validated::Date(d) if role == ColumnRole::TestDate => {
            rec.test_date = Some(d);
            rec.test_date_provenance = DateProvenance::Parsed;
        }
        Validated::Date(d) => {
            rec.related_dates.insert(role, d);
        }
        Validated::Age(a) => rec.age_years = Some(a),
        Validated::Sex(s) => rec.sex = Some(s),
        Validated::Location(loc) => rec.location = Some(geocode(&loc, geocoder)?.0),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizer::HashCost;
    use crate::config::CleanConfig;
    use crate::ingest::ingest_reader;

    const CONFIG: &str = "TestDate = Test Date\nAdmissionDate = Admission\nAge = Age\nSex = Sex\nAddress = Address\nName = Name\nContact = Phone\n";

    fn resources() -> Resources {
        Resources {
            gazetteer: Gazetteer::bundled(),
            geocoder: Geocoder::disabled(),
            anon: AnonConfig::new("0123456789abcdef", HashCost::default(), 16, "batch-2019").unwrap(),
            exec: ExecMode::Sequential,
        }
    }

    fn run(csv: &str) -> PipelineOutput {
        let cfg = CleanConfig::parse(CONFIG).unwrap();
        let ing = ingest_reader(csv.as_bytes(), &cfg.mapping, "t.csv").unwrap();
        run_pipeline(&ing, &YearContext::new(2019).unwrap(), &cfg, &resources()).unwrap()
    }

    const HEADER: &str = "Name,Phone,Test Date,Admission,Age,Sex,Address\n";

    #[test]
    fn empty_batch() {
        let out = run(HEADER);
        assert!(out.records.is_empty());
        assert!(out.audit.verdicts.is_empty());
        assert!(out.review.is_empty());
    }

    #[test]
    fn clean_record() {
        let out = run(&format!("{HEADER}Ram Lal,9876543210,2019-10-03,2019-10-01,34,M,\"VPO Khanna, Distt Ludhiana\"\n"));
        assert_eq!(out.records.len(), 1);
        assert!(out.review.is_empty());
        assert_eq!(out.audit.verdicts.len(), 7);
        assert!(out.audit.verdicts.iter().all(|v| matches!(v.action, Action::Unchanged | Action::AutoCorrected | Action::Deleted)));
        let r = &out.records[0];
        assert_eq!(r.test_date.map(iso).as_deref(), Some("2019-10-03"));
        assert_eq!(r.sex, Some(crate::demographics::Sex::Male));
        assert_eq!(r.location.as_ref().and_then(|l| l.settlement.as_deref()), Some("Khanna"));
        assert_eq!(r.anon_id.len(), 16);
        let log = serde_json::to_string(&out.audit.verdicts).unwrap();
        assert!(!log.contains("Ram Lal") && !log.contains("9876543210"));
    }

    #[test]
    fn ambiguous_date_queued_then_resolved() {
        let mut out = run(&format!("{HEADER}A,1,3112019,,34,M,Khanna\n"));
        assert_eq!(out.review.len(), 1);
        assert_eq!(out.review[0].candidates, vec!["2019-11-03", "2019-01-31"]);
        let cfg = CleanConfig::parse(CONFIG).unwrap();
        let mut res_item = out.review[0].clone();
        res_item.resolve(Resolution::Accepted("2019-11-03".into())).unwrap();
        let applied = apply_resolutions(&mut out, &[res_item], &cfg, &resources()).unwrap();
        assert_eq!(applied.corrected, 1);
        assert_eq!(out.records[0].test_date.map(iso).as_deref(), Some("2019-11-03"));
        assert_eq!(out.audit.rule_counters["D10"].manual, 1);
    }

    #[test]
    fn invalid_manual_value_reopens() {
        let mut out = run(&format!("{HEADER}A,1,3112019,,34,M,Khanna\n"));
        let cfg = CleanConfig::parse(CONFIG).unwrap();
        let mut bad = out.review[0].clone();
        bad.resolve(Resolution::ManualValue("31022019".into())).unwrap();
        let applied = apply_resolutions(&mut out, &[bad], &cfg, &resources()).unwrap();
        assert_eq!(applied.reopened, 1);
        assert_eq!(out.review[0].resolution, Resolution::Pending);
        assert!(out.review[0].error.is_some());
        assert_eq!(out.records[0].test_date, None);
    }

    #[test]
    fn deleted_resolution() {
        let mut out = run(&format!("{HEADER}A,1,3112019,,34,M,Khanna\n"));
        let cfg = CleanConfig::parse(CONFIG).unwrap();
        let mut del = out.review[0].clone();
        del.resolve(Resolution::Deleted).unwrap();
        apply_resolutions(&mut out, &[del], &cfg, &resources()).unwrap();
        assert_eq!(out.audit.rule_counters["D10"].deleted, 1);
        assert_eq!(out.records[0].test_date_provenance, DateProvenance::Missing);
    }

    #[test]
    fn imputation_from_admission() {
        let out = run(&format!(
            "{HEADER}A,1,2019-10-03,2019-10-01,34,M,Khanna\nB,2,2019-10-05,2019-10-03,30,F,Khanna\nC,3,,2019-10-10,20,F,Khanna\n"
        ));
        let r = &out.records[2];
        assert_eq!(r.test_date.map(iso).as_deref(), Some("2019-10-12"));
        assert_eq!(r.test_date_provenance, DateProvenance::Imputed);
        let v = out.audit.verdicts.iter().find(|v| v.row_index == 2 && v.role == ColumnRole::TestDate).unwrap();
        assert_eq!(v.rule_id, "IMP-ADM");
        let s = out.audit.per_variable_summary[&ColumnRole::TestDate];
        assert_eq!((s.extracted, s.imputed), (2, 1));
    }

    #[test]
    fn misplaced_age_recovered() {
        let out = run(&format!("{HEADER}A,1,2019-10-03,,,34/M,Khanna\n"));
        let r = &out.records[0];
        assert_eq!(r.age_years, Some(34.0));
        assert_eq!(r.sex, Some(crate::demographics::Sex::Male));
    }

    #[test]
    fn malformed_rows_only_deletable() {
        let mut out = run(&format!("{HEADER}A,1,2019-10-03,,34,M,Khanna,extra\n"));
        assert_eq!(out.review.len(), 1);
        assert_eq!(out.review[0].verdict.rule_id, MALFORMED_ROW);
        let cfg = CleanConfig::parse(CONFIG).unwrap();
        let mut acc = out.review[0].clone();
        acc.resolve(Resolution::ManualValue("x".into())).unwrap();
        assert_eq!(apply_resolutions(&mut out, &[acc], &cfg, &resources()).unwrap().reopened, 1);
    }
}
