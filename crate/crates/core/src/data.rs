//! Visit records and the validated long-format dataset.
//!
//! A [`LongitudinalDataset`] holds one row per subject-visit, grouped
//! contiguously by subject and sorted by `(subject_id, visit_index)`.
//! Every subject has a baseline (`visit_index == 1`, zero years since
//! baseline). Subject-level covariates are carried from the baseline row to
//! every later visit.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::error::{Error, Result};

const DAYS_PER_YEAR: f64 = 365.25;
const AGE_IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub subject_id: String,
    /// 1 = baseline.
    pub visit_index: u32,
    pub years_since_baseline: f64,
    pub age_at_visit: f64,
    /// 0 = healthy control, 1 = schizophrenia.
    pub dx: u8,
    pub educ: f64,
    pub gender: f64,
    /// Single numeric regressor; simulated data uses a 0/1 Hispanic/Latino indicator.
    pub race_lat: f64,
    pub outcome: f64,
}

impl VisitRecord {
    /// Age at the baseline visit implied by this row.
    pub fn baseline_age(&self) -> f64 {
        self.age_at_visit - self.years_since_baseline
    }
}

/// A visit row keyed by elapsed days instead of visit number.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub subject_id: String,
    pub days_since_baseline: i64,
    pub age_at_visit: f64,
    pub dx: u8,
    pub educ: f64,
    pub gender: f64,
    pub race_lat: f64,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    records: Vec<VisitRecord>,
    subjects: Vec<Range<usize>>,
    max_visits: u32,
    excluded: Vec<String>,
}

impl LongitudinalDataset {
    pub fn records(&self) -> &[VisitRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest visit index present (J).
    pub fn max_visits(&self) -> u32 {
        self.max_visits
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Row ranges, one per subject, in dataset order.
    pub fn subject_ranges(&self) -> &[Range<usize>] {
        &self.subjects
    }

    /// Iterate over the rows of each subject.
    pub fn subjects(&self) -> impl Iterator<Item = &[VisitRecord]> + '_ {
        self.subjects.iter().map(move |r| &self.records[r.clone()])
    }

    /// Subjects dropped during validation because they had no baseline visit.
    pub fn excluded_subjects(&self) -> &[String] {
        &self.excluded
    }

    pub fn into_records(self) -> Vec<VisitRecord> {
        self.records
    }
}

/// Validate and normalize raw visit rows.
///
/// Subjects without a baseline visit are dropped and listed in
/// [`LongitudinalDataset::excluded_subjects`]. Covariates (`dx`, `educ`,
/// `gender`, `race_lat`) of later visits are overwritten with the subject's
/// baseline values.
pub fn validate_dataset(records: Vec<VisitRecord>) -> Result<LongitudinalDataset> {
    if records.is_empty() {
        return Err(Error::Empty("no visit records".into()));
    }

    let mut by_subject: BTreeMap<String, Vec<VisitRecord>> = BTreeMap::new();
    for rec in records {
        if rec.visit_index < 1 {
            return Err(Error::InvalidRecord {
                subject: rec.subject_id,
                visit: rec.visit_index,
                reason: "visit_index must be >= 1".into(),
            });
        }
        let fields = [
            rec.years_since_baseline,
            rec.age_at_visit,
            rec.educ,
            rec.gender,
            rec.race_lat,
            rec.outcome,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                subject: rec.subject_id,
                visit: rec.visit_index,
                reason: "non-finite numeric field".into(),
            });
        }
        if rec.dx > 1 {
            return Err(Error::InvalidRecord {
                subject: rec.subject_id,
                visit: rec.visit_index,
                reason: format!("dx must be 0 or 1, got {}", rec.dx),
            });
        }
        by_subject.entry(rec.subject_id.clone()).or_default().push(rec);
    }

    let mut out = Vec::new();
    let mut subjects = Vec::new();
    let mut excluded = Vec::new();
    let mut max_visits = 0;

    for (subject, mut rows) in by_subject {
        rows.sort_by_key(|r| r.visit_index);
        for pair in rows.windows(2) {
            if pair[0].visit_index == pair[1].visit_index {
                return Err(Error::DuplicateVisit {
                    subject,
                    visit: pair[1].visit_index,
                });
            }
        }
        if rows[0].visit_index != 1 {
            excluded.push(subject);
            continue;
        }
        for pair in rows.windows(2) {
            if pair[1].years_since_baseline <= pair[0].years_since_baseline {
                return Err(Error::NonMonotoneTime {
                    subject,
                    visit: pair[1].visit_index,
                });
            }
        }

        let base = rows[0].clone();
        if base.years_since_baseline != 0.0 {
            return Err(Error::InvalidRecord {
                subject,
                visit: 1,
                reason: format!(
                    "baseline years_since_baseline must be 0, got {}",
                    base.years_since_baseline
                ),
            });
        }
        let age1 = base.age_at_visit;
        for r in rows.iter_mut() {
            let drift = (r.baseline_age() - age1).abs();
            if drift > AGE_IDENTITY_TOL * age1.abs().max(1.0) {
                return Err(Error::InvalidRecord {
                    subject,
                    visit: r.visit_index,
                    reason: format!(
                        "age_at_visit {} != baseline age {} + years {}",
                        r.age_at_visit, age1, r.years_since_baseline
                    ),
                });
            }
            r.dx = base.dx;
            r.educ = base.educ;
            r.gender = base.gender;
            r.race_lat = base.race_lat;
        }

        max_visits = max_visits.max(rows.last().map_or(1, |r| r.visit_index));
        let start = out.len();
        out.extend(rows);
        subjects.push(start..out.len());
    }

    if out.is_empty() {
        return Err(Error::Empty(format!(
            "no subjects left after excluding {} without a baseline visit",
            excluded.len()
        )));
    }

    Ok(LongitudinalDataset {
        records: out,
        subjects,
        max_visits,
        excluded,
    })
}

/// Convert day-based rows into visit rows.
///
/// Visits are numbered by time order within each subject. A subject whose
/// earliest row is not at day 0 has no baseline; its visits are numbered from
/// 2 so that [`validate_dataset`] excludes it. Age at each later visit is
/// recomputed as the earliest row's age plus elapsed years.
pub fn derive_timing(records: Vec<DayRecord>) -> Result<Vec<VisitRecord>> {
    let mut by_subject: BTreeMap<String, Vec<DayRecord>> = BTreeMap::new();
    for rec in records {
        if rec.days_since_baseline < 0 {
            return Err(Error::NegativeDays {
                subject: rec.subject_id,
                days: rec.days_since_baseline,
            });
        }
        by_subject.entry(rec.subject_id.clone()).or_default().push(rec);
    }

    let mut out = Vec::new();
    for (_, mut rows) in by_subject {
        rows.sort_by_key(|r| r.days_since_baseline);
        let first = if rows[0].days_since_baseline == 0 { 1 } else { 2 };
        let age0 = rows[0].age_at_visit;
        let day0 = rows[0].days_since_baseline;
        for (k, r) in rows.into_iter().enumerate() {
            let years = r.days_since_baseline as f64 / DAYS_PER_YEAR;
            out.push(VisitRecord {
                subject_id: r.subject_id,
                visit_index: first + k as u32,
                years_since_baseline: years,
                age_at_visit: age0 + years - day0 as f64 / DAYS_PER_YEAR,
                dx: r.dx,
                educ: r.educ,
                gender: r.gender,
                race_lat: r.race_lat,
                outcome: r.outcome,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, visit: u32, t: f64) -> VisitRecord {
        VisitRecord {
            subject_id: id.into(),
            visit_index: visit,
            years_since_baseline: t,
            age_at_visit: 30.0 + t,
            dx: 0,
            educ: 12.0,
            gender: 1.0,
            race_lat: 0.0,
            outcome: 0.5,
        }
    }

    fn day(id: &str, days: i64) -> DayRecord {
        DayRecord {
            subject_id: id.into(),
            days_since_baseline: days,
            age_at_visit: 40.0,
            dx: 1,
            educ: 12.0,
            gender: 0.0,
            race_lat: 1.0,
            outcome: 0.0,
        }
    }

    #[test]
    fn well_formed_input() {
        let ds = validate_dataset(vec![
            rec("B", 2, 1.0),
            rec("A", 1, 0.0),
            rec("B", 1, 0.0),
            rec("A", 2, 1.0),
        ])
        .unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.max_visits(), 2);
        assert_eq!(ds.n_subjects(), 2);
        let keys: Vec<_> = ds
            .records()
            .iter()
            .map(|r| (r.subject_id.as_str(), r.visit_index))
            .collect();
        assert_eq!(keys, [("A", 1), ("A", 2), ("B", 1), ("B", 2)]);
        assert!(ds.excluded_subjects().is_empty());
    }

    #[test]
    fn subject_without_baseline_is_dropped() {
        let ds = validate_dataset(vec![
            rec("A", 2, 1.0),
            rec("A", 3, 2.0),
            rec("B", 1, 0.0),
        ])
        .unwrap();
        assert_eq!(ds.excluded_subjects(), ["A".to_string()]);
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn duplicate_visit_names_key() {
        let err = validate_dataset(vec![rec("B", 1, 0.0), rec("B", 2, 1.0), rec("B", 2, 1.0)])
            .unwrap_err();
        match err {
            Error::DuplicateVisit { subject, visit } => {
                assert_eq!(subject, "B");
                assert_eq!(visit, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_time_rejected() {
        let err = validate_dataset(vec![rec("A", 1, 0.0), rec("A", 2, 2.0), rec("A", 3, 1.5)])
            .unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTime { visit: 3, .. }));
    }

    #[test]
    fn empty_after_exclusion_is_error() {
        assert!(matches!(validate_dataset(vec![rec("A", 2, 1.0)]), Err(Error::Empty(_))));
        assert!(matches!(validate_dataset(vec![]), Err(Error::Empty(_))));
    }

    #[test]
    fn age_identity_enforced() {
        let mut bad = rec("A", 2, 1.0);
        bad.age_at_visit += 0.5;
        assert!(validate_dataset(vec![rec("A", 1, 0.0), bad]).is_err());
    }

    #[test]
    fn covariates_carried_from_baseline() {
        let mut later = rec("A", 2, 1.0);
        later.educ = 99.0;
        later.dx = 1;
        let ds = validate_dataset(vec![rec("A", 1, 0.0), later]).unwrap();
        assert_eq!(ds.records()[1].educ, 12.0);
        assert_eq!(ds.records()[1].dx, 0);
    }

    #[test]
    fn gaps_allowed() {
        let ds = validate_dataset(vec![rec("A", 1, 0.0), rec("A", 3, 2.0)]).unwrap();
        assert_eq!(ds.max_visits(), 3);
    }

    #[test]
    fn idempotent() {
        let ds = validate_dataset(vec![
            rec("B", 2, 1.0),
            rec("A", 1, 0.0),
            rec("B", 1, 0.0),
            rec("C", 2, 1.0),
        ])
        .unwrap();
        let again = validate_dataset(ds.records().to_vec()).unwrap();
        assert_eq!(again.records(), ds.records());
        assert!(again.excluded_subjects().is_empty());
    }

    #[test]
    fn derive_timing_units_and_order() {
        let out = derive_timing(vec![day("A", 740), day("A", 0), day("A", 360)]).unwrap();
        let idx: Vec<u32> = out.iter().map(|r| r.visit_index).collect();
        assert_eq!(idx, [1, 2, 3]);
        assert_eq!(out[0].years_since_baseline, 0.0);
        // 360 / 365.25 and 740 / 365.25 by hand
        assert!((out[1].years_since_baseline - 0.985_626_283_367_556_5).abs() < 1e-12);
        assert!((out[2].years_since_baseline - 2.026_009_582_477_754_8).abs() < 1e-12);

        let one_year = derive_timing(vec![day("B", 0), day("B", 365)]).unwrap();
        assert!((one_year[1].years_since_baseline - 365.0 / 365.25).abs() < 1e-15);
    }

    #[test]
    fn derive_timing_rejects_negative_days() {
        let err = derive_timing(vec![day("A", 0), day("A", -3)]).unwrap_err();
        assert!(matches!(err, Error::NegativeDays { days: -3, .. }));
    }

    #[test]
    fn derive_timing_without_day_zero_leads_to_exclusion() {
        let mut rows = derive_timing(vec![day("A", 10), day("A", 400)]).unwrap();
        assert_eq!(rows[0].visit_index, 2);
        rows.extend(derive_timing(vec![day("B", 0)]).unwrap());
        let ds = validate_dataset(rows).unwrap();
        assert_eq!(ds.excluded_subjects(), ["A".to_string()]);
    }
}
