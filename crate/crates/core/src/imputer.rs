//! Missing test dates estimated from admission/OPD or discharge dates plus the
//! batch's mean offsets.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::date::iso;
use crate::model::{CellOutcome, CleanRecord, ColumnRole, DateProvenance, YearContext};

pub const IMPUTE_ADMISSION_RULE: &str = "IMP-ADM";
pub const IMPUTE_OPD_RULE: &str = "IMP-OPD";
pub const IMPUTE_DISCHARGE_RULE: &str = "IMP-DIS";

/// Day differences below this are treated as data errors and skipped.
pub const MIN_OFFSET_DAYS: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub year: i32,
    pub mean_admission_to_test: Option<f64>,
    pub mean_test_to_discharge: Option<f64>,
    pub n_admission_pairs: usize,
    pub n_discharge_pairs: usize,
    pub anomalies: usize,
}

impl OffsetStats {
    pub fn empty(year: i32) -> Self {
        OffsetStats {
            year,
            mean_admission_to_test: None,
            mean_test_to_discharge: None,
            n_admission_pairs: 0,
            n_discharge_pairs: 0,
            anomalies: 0,
        }
    }
}

/// Admission date, falling back to the OPD date.
fn admission_donor(record: &CleanRecord) -> Option<(ColumnRole, NaiveDate)> {
    [ColumnRole::AdmissionDate, ColumnRole::OpdDate]
        .into_iter()
        .find_map(|r| record.related_dates.get(&r).map(|d| (r, *d)))
}

pub fn compute_offsets(records: &[CleanRecord], year: i32) -> OffsetStats {
    let mut stats = OffsetStats::empty(year);
    let (mut adm_sum, mut dis_sum) = (0i64, 0i64);
    for r in records {
        let Some(test) = r.test_date.filter(|_| r.test_date_provenance == DateProvenance::Parsed) else {
            continue;
        };
        if let Some((_, adm)) = admission_donor(r) {
            let diff = (test - adm).num_days();
            if diff < MIN_OFFSET_DAYS {
                stats.anomalies += 1;
            } else {
                adm_sum += diff;
                stats.n_admission_pairs += 1;
            }
        }
        if let Some(dis) = r.related_dates.get(&ColumnRole::DischargeDate) {
            let diff = (*dis - test).num_days();
            if diff < MIN_OFFSET_DAYS {
                stats.anomalies += 1;
            } else {
                dis_sum += diff;
                stats.n_discharge_pairs += 1;
            }
        }
    }
    if stats.n_admission_pairs > 0 {
        stats.mean_admission_to_test = Some(adm_sum as f64 / stats.n_admission_pairs as f64);
    }
    if stats.n_discharge_pairs > 0 {
        stats.mean_test_to_discharge = Some(dis_sum as f64 / stats.n_discharge_pairs as f64);
    }
    stats
}

/// Half-up rounding to whole days.
pub fn round_days(mean: f64) -> i64 {
    (mean + 0.5).floor() as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub outcome: CellOutcome,
    pub date: Option<NaiveDate>,
}

/// Estimates a missing test date. A record that already has a test date is
/// returned untouched with an `Unchanged` outcome.
pub fn impute_test_date(record: &CleanRecord, stats: &OffsetStats, ctx: &YearContext) -> Imputation {
    if let Some(d) = record.test_date {
        let s = iso(d);
        return Imputation {
            outcome: CellOutcome::resolved("", &s, s.clone()),
            date: Some(d),
        };
    }
    let from_admission = admission_donor(record).and_then(|(role, d)| {
        let mean = stats.mean_admission_to_test?;
        let rule = if role == ColumnRole::AdmissionDate {
            IMPUTE_ADMISSION_RULE
        } else {
            IMPUTE_OPD_RULE
        };
        Some((rule, d + Duration::days(round_days(mean))))
    });
    let candidate = from_admission.or_else(|| {
        let d = record.related_dates.get(&ColumnRole::DischargeDate)?;
        let mean = stats.mean_test_to_discharge?;
        Some((IMPUTE_DISCHARGE_RULE, *d - Duration::days(round_days(mean))))
    });

    match candidate {
        None => Imputation {
            outcome: CellOutcome::missing(),
            date: None,
        },
        Some((rule, date)) if ctx.is_plausible(date) => Imputation {
            outcome: CellOutcome::resolved(rule, "", iso(date)),
            date: Some(date),
        },
        Some((rule, date)) => Imputation {
            outcome: CellOutcome::review(rule, vec![iso(date)])
                .with_note("imputed date outside the plausibility window"),
            date: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn rec(test: Option<&str>, adm: Option<&str>, dis: Option<&str>) -> CleanRecord {
        let mut r = CleanRecord::empty(0);
        if let Some(t) = test {
            r.test_date = Some(d(t));
            r.test_date_provenance = DateProvenance::Parsed;
        }
        if let Some(a) = adm {
            r.related_dates.insert(ColumnRole::AdmissionDate, d(a));
        }
        if let Some(x) = dis {
            r.related_dates.insert(ColumnRole::DischargeDate, d(x));
        }
        r
    }

    #[test]
    fn mean_of_pairs() {
        let rs = [
            rec(Some("2019-10-03"), Some("2019-10-01"), None),
            rec(Some("2019-10-05"), Some("2019-10-01"), None),
        ];
        let s = compute_offsets(&rs, 2019);
        assert_eq!(s.mean_admission_to_test, Some(3.0));
        assert_eq!(s.n_admission_pairs, 2);
        assert_eq!(s.mean_test_to_discharge, None);
    }

    #[test]
    fn no_pairs() {
        let s = compute_offsets(&[rec(Some("2019-10-03"), None, None)], 2019);
        assert_eq!(s, OffsetStats::empty(2019));
    }

    #[test]
    fn negative_outlier_excluded() {
        let rs = [
            rec(Some("2019-10-03"), Some("2019-10-01"), None),
            rec(Some("2019-10-01"), Some("2019-10-31"), None),
            // -1 day is tolerated
            rec(Some("2019-10-01"), Some("2019-10-02"), None),
        ];
        let s = compute_offsets(&rs, 2019);
        assert_eq!(s.n_admission_pairs, 2);
        assert_eq!(s.mean_admission_to_test, Some(0.5));
        assert_eq!(s.anomalies, 1);
    }

    #[test]
    fn imputed_records_do_not_feed_offsets() {
        let mut r = rec(Some("2019-10-20"), Some("2019-10-01"), None);
        r.test_date_provenance = DateProvenance::Imputed;
        assert_eq!(compute_offsets(&[r], 2019).n_admission_pairs, 0);
    }

    #[test]
    fn impute_examples() {
        let ctx = YearContext::new(2019).unwrap();
        let mut stats = OffsetStats::empty(2019);
        stats.mean_admission_to_test = Some(2.0);
        stats.mean_test_to_discharge = Some(4.0);

        let got = impute_test_date(&rec(None, Some("2019-10-01"), Some("2019-10-30")), &stats, &ctx);
        assert_eq!(got.date, Some(d("2019-10-03")));
        assert_eq!(got.outcome.rule_id, IMPUTE_ADMISSION_RULE);
        assert_eq!(got.outcome.action, Action::AutoCorrected);

        let got = impute_test_date(&rec(None, None, Some("2019-10-10")), &stats, &ctx);
        assert_eq!(got.date, Some(d("2019-10-06")));
        assert_eq!(got.outcome.rule_id, IMPUTE_DISCHARGE_RULE);

        let got = impute_test_date(&rec(None, None, None), &stats, &ctx);
        assert_eq!(got.date, None);
        assert_eq!(got.outcome.action, Action::Missing);
    }

    #[test]
    fn opd_is_a_fallback_donor() {
        let ctx = YearContext::new(2019).unwrap();
        let mut stats = OffsetStats::empty(2019);
        stats.mean_admission_to_test = Some(2.5);
        let mut r = rec(None, None, None);
        r.related_dates.insert(ColumnRole::OpdDate, d("2019-10-01"));
        let got = impute_test_date(&r, &stats, &ctx);
        assert_eq!(got.outcome.rule_id, IMPUTE_OPD_RULE);
        assert_eq!(got.date, Some(d("2019-10-04")));
    }

    #[test]
    fn parsed_dates_never_overwritten() {
        let ctx = YearContext::new(2019).unwrap();
        let mut stats = OffsetStats::empty(2019);
        stats.mean_admission_to_test = Some(2.0);
        let got = impute_test_date(&rec(Some("2019-05-05"), Some("2019-10-01"), None), &stats, &ctx);
        assert_eq!(got.date, Some(d("2019-05-05")));
        assert_eq!(got.outcome.action, Action::Unchanged);
    }

    #[test]
    fn implausible_imputation_goes_to_review() {
        let ctx = YearContext::new(2019).unwrap();
        let mut stats = OffsetStats::empty(2019);
        stats.mean_admission_to_test = Some(90.0);
        let got = impute_test_date(&rec(None, Some("2019-12-20"), None), &stats, &ctx);
        assert_eq!(got.date, None);
        assert_eq!(got.outcome.action, Action::ReviewQueued);
        assert_eq!(got.outcome.candidates, vec!["2020-03-19".to_string()]);
    }

    #[test]
    fn half_up() {
        assert_eq!(round_days(2.5), 3);
        assert_eq!(round_days(2.49), 2);
        assert_eq!(round_days(-0.5), 0);
    }
}
