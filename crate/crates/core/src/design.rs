//! Design matrices for the mean-model family and the aligned first-reassessment
//! practice-effect estimator.
//!
//! Column order is fixed: intercept, age terms, `dx_bin`, `dx_bin:t`,
//! covariates, practice-effect terms, practice-effect interactions.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::data::{LongitudinalDataset, VisitRecord};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";
pub const AGE_VISIT: &str = "age_visit";
pub const DX: &str = "dx_bin";
pub const DX_TIME: &str = "dx_bin:t";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeCoding {
    Linear,
    /// Dummy-coded age bands `[origin + w(k-1), origin + wk)`, the last band
    /// closed on the right. Band 1 is the reference level.
    Binned {
        width_years: f64,
        origin: f64,
        n_bands: u32,
    },
}

impl AgeCoding {
    pub const fn binned() -> Self {
        AgeCoding::Binned {
            width_years: 5.0,
            origin: 25.0,
            n_bands: 6,
        }
    }

    /// 1-based band of `age`, or `None` outside every band.
    pub fn band_of(&self, age: f64) -> Option<u32> {
        match *self {
            AgeCoding::Linear => None,
            AgeCoding::Binned {
                width_years,
                origin,
                n_bands,
            } => {
                let upper = origin + width_years * n_bands as f64;
                if age < origin || age > upper {
                    return None;
                }
                let k = ((age - origin) / width_years).floor() as u32 + 1;
                Some(k.min(n_bands))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeCoding {
    /// `prac{m}` = 1 when the visit is the m-th reassessment (level coding).
    VisitDummy,
    /// `prac{m}plus` = 1 when at least m reassessments precede this visit
    /// (increment coding).
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariate {
    Educ,
    Gender,
    RaceLat,
}

impl Covariate {
    pub fn label(self) -> &'static str {
        match self {
            Covariate::Educ => "educ",
            Covariate::Gender => "gen",
            Covariate::RaceLat => "race_lat",
        }
    }

    pub fn value(self, r: &VisitRecord) -> f64 {
        match self {
            Covariate::Educ => r.educ,
            Covariate::Gender => r.gender,
            Covariate::RaceLat => r.race_lat,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "educ" => Some(Covariate::Educ),
            "gen" | "gender" => Some(Covariate::Gender),
            "race_lat" => Some(Covariate::RaceLat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub age_coding: AgeCoding,
    pub include_pe: bool,
    pub pe_coding: PeCoding,
    /// K: reassessments beyond the K-th share the last indicator.
    pub pe_max_level: u32,
    pub pe_by_dx: bool,
    pub pe_by_age: bool,
    pub covariates: Vec<Covariate>,
    pub dx_time_interaction: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::no_pe()
    }
}

impl ModelSpec {
    pub fn no_pe() -> Self {
        Self {
            age_coding: AgeCoding::Linear,
            include_pe: false,
            pe_coding: PeCoding::VisitDummy,
            pe_max_level: 5,
            pe_by_dx: false,
            pe_by_age: false,
            covariates: vec![Covariate::Educ, Covariate::Gender, Covariate::RaceLat],
            dx_time_interaction: true,
        }
    }

    pub fn with_pe() -> Self {
        Self {
            include_pe: true,
            ..Self::no_pe()
        }
    }

    pub fn pe_by_dx() -> Self {
        Self {
            pe_by_dx: true,
            ..Self::with_pe()
        }
    }

    pub fn pe_by_age() -> Self {
        Self {
            pe_by_age: true,
            ..Self::with_pe()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.pe_by_dx || self.pe_by_age) && !self.include_pe {
            return Err(Error::InvalidSpec(
                "practice-effect interactions require include_pe".into(),
            ));
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if self.covariates[..i].contains(c) {
                return Err(Error::InvalidSpec(format!("covariate {} listed twice", c.label())));
            }
        }
        if self.include_pe && self.pe_max_level < 1 {
            return Err(Error::InvalidSpec("pe_max_level must be >= 1".into()));
        }
        if (self.pe_by_dx || self.pe_by_age) && self.pe_max_level < 2 {
            return Err(Error::InvalidSpec(
                "practice-effect interactions need pe_max_level >= 2".into(),
            ));
        }
        if let AgeCoding::Binned {
            width_years,
            n_bands,
            ..
        } = self.age_coding
        {
            if !(width_years > 0.0) || n_bands < 2 {
                return Err(Error::InvalidSpec(
                    "binned age needs width > 0 and at least 2 bands".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reassessment level (1..=K) of a visit, 0 at baseline.
    pub fn pe_level(&self, visit_index: u32) -> u32 {
        visit_index.saturating_sub(1).min(self.pe_max_level)
    }

    /// Label of the practice-effect column for level `m`.
    pub fn pe_label(&self, m: u32) -> String {
        match self.pe_coding {
            PeCoding::VisitDummy => format!("prac{m}"),
            PeCoding::Cumulative => format!("prac{m}plus"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub column_labels: Vec<String>,
    pub rows: DMatrix<f64>,
    pub response: DVector<f64>,
    pub cluster_ids: Vec<String>,
    clusters: Vec<Range<usize>>,
}

impl DesignMatrix {
    /// Assemble a design from raw parts. Rows of a cluster must be contiguous.
    pub fn new(
        column_labels: Vec<String>,
        rows: DMatrix<f64>,
        response: DVector<f64>,
        cluster_ids: Vec<String>,
    ) -> Result<Self> {
        if rows.ncols() != column_labels.len()
            || rows.nrows() != response.len()
            || rows.nrows() != cluster_ids.len()
        {
            return Err(Error::InvalidSpec("design dimensions do not agree".into()));
        }
        let mut clusters: Vec<Range<usize>> = Vec::new();
        for (i, id) in cluster_ids.iter().enumerate() {
            match clusters.last_mut() {
                Some(r) if cluster_ids[r.start] == *id => r.end = i + 1,
                _ => clusters.push(i..i + 1),
            }
        }
        let mut seen = std::collections::HashSet::new();
        for r in &clusters {
            if !seen.insert(&cluster_ids[r.start]) {
                return Err(Error::InvalidSpec(format!(
                    "rows of cluster {} are not contiguous",
                    cluster_ids[r.start]
                )));
            }
        }
        Ok(Self {
            column_labels,
            rows,
            response,
            cluster_ids,
            clusters,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn clusters(&self) -> &[Range<usize>] {
        &self.clusters
    }

    pub fn column(&self, label: &str) -> Option<usize> {
        self.column_labels.iter().position(|l| l == label)
    }

    /// Fail with the offending labels if any column is linearly dependent on
    /// earlier ones.
    pub fn check_rank(&self) -> Result<()> {
        let dep = crate::linalg::dependent_columns(&self.rows, 1e-9);
        if dep.is_empty() {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                columns: dep.iter().map(|&j| self.column_labels[j].clone()).collect(),
            })
        }
    }

    /// True for columns that are constant within every cluster.
    pub fn between_cluster_columns(&self) -> Vec<bool> {
        (0..self.n_cols())
            .map(|j| {
                self.clusters.iter().all(|r| {
                    let first = self.rows[(r.start, j)];
                    r.clone().all(|i| self.rows[(i, j)] == first)
                })
            })
            .collect()
    }
}

pub fn build_design(dataset: &LongitudinalDataset, spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let records = dataset.records();

    let bands: Vec<u32> = match spec.age_coding {
        AgeCoding::Linear => Vec::new(),
        AgeCoding::Binned { n_bands, .. } => {
            let mut present = vec![false; n_bands as usize + 1];
            for r in records {
                let band = spec.age_coding.band_of(r.age_at_visit).ok_or_else(|| {
                    Error::AgeOutOfBands {
                        subject: r.subject_id.clone(),
                        visit: r.visit_index,
                        age: r.age_at_visit,
                    }
                })?;
                present[band as usize] = true;
            }
            (2..=n_bands).filter(|&k| present[k as usize]).collect()
        }
    };

    let mut labels: Vec<String> = vec![INTERCEPT.into()];
    match spec.age_coding {
        AgeCoding::Linear => labels.push(AGE_VISIT.into()),
        AgeCoding::Binned { .. } => {
            labels.extend(bands.iter().map(|k| format!("age_band_kband{k}")))
        }
    }
    labels.push(DX.into());
    if spec.dx_time_interaction {
        labels.push(DX_TIME.into());
    }
    labels.extend(spec.covariates.iter().map(|c| c.label().to_string()));
    let levels = if spec.include_pe { spec.pe_max_level } else { 0 };
    for m in 1..=levels {
        labels.push(spec.pe_label(m));
    }
    // Interactions stop one level short of the pooled top level, which
    // keeps dx_bin:t identifiable when visits are evenly spaced.
    let inter = levels.saturating_sub(1);
    if spec.pe_by_dx {
        for m in 1..=inter {
            labels.push(format!("{}:{DX}", spec.pe_label(m)));
        }
    }
    if spec.pe_by_age {
        for m in 1..=inter {
            labels.push(format!("{}:{AGE_VISIT}", spec.pe_label(m)));
        }
    }

    let n = records.len();
    let p = labels.len();
    let mut x = DMatrix::zeros(n, p);
    let mut pe = vec![0.0; levels as usize];
    for (i, r) in records.iter().enumerate() {
        let dx = r.dx as f64;
        let mut col = 0;
        let mut put = |v: f64| {
            x[(i, col)] = v;
            col += 1;
        };
        put(1.0);
        match spec.age_coding {
            AgeCoding::Linear => put(r.age_at_visit),
            AgeCoding::Binned { .. } => {
                let band = spec.age_coding.band_of(r.age_at_visit).unwrap_or(0);
                for &k in &bands {
                    put(if band == k { 1.0 } else { 0.0 });
                }
            }
        }
        put(dx);
        if spec.dx_time_interaction {
            put(r.years_since_baseline * dx);
        }
        for c in &spec.covariates {
            put(c.value(r));
        }
        pe_indicators(spec, r.visit_index, &mut pe);
        for &v in &pe {
            put(v);
        }
        if spec.pe_by_dx {
            for &v in &pe[..inter as usize] {
                put(v * dx);
            }
        }
        if spec.pe_by_age {
            for &v in &pe[..inter as usize] {
                put(v * r.age_at_visit);
            }
        }
    }

    let y = DVector::from_iterator(n, records.iter().map(|r| r.outcome));
    let ids = records.iter().map(|r| r.subject_id.clone()).collect();
    DesignMatrix::new(labels, x, y, ids)
}

/// Fill `out` (length K) with the practice-effect indicators of a visit.
pub fn pe_indicators(spec: &ModelSpec, visit_index: u32, out: &mut [f64]) {
    let level = spec.pe_level(visit_index) as usize;
    for (m, slot) in out.iter_mut().enumerate() {
        let m = m + 1;
        *slot = match spec.pe_coding {
            PeCoding::VisitDummy => (level == m) as u8 as f64,
            PeCoding::Cumulative => (level >= m) as u8 as f64,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPeRow {
    pub bin_lower: f64,
    pub bin_upper: f64,
    /// `None` when either the baseline or the first-reassessment group is empty.
    pub pe_estimate: Option<f64>,
    pub n_reassess: usize,
    pub n_baseline: usize,
}

/// First-reassessment practice effect by age bin: mean outcome at visit 2
/// minus mean outcome at visit 1 among rows whose age at visit falls in the
/// same bin.
///
/// Bins are `[lo, lo + width)` aligned to multiples of `age_bin_width` and
/// cover every age seen at visits 1 and 2.
pub fn aligned_pe_estimate(
    dataset: &LongitudinalDataset,
    age_bin_width: f64,
) -> Result<Vec<AlignedPeRow>> {
    if !(age_bin_width > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "age bin width must be positive, got {age_bin_width}"
        )));
    }
    let rows: Vec<&VisitRecord> = dataset
        .records()
        .iter()
        .filter(|r| r.visit_index <= 2)
        .collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let bin = |age: f64| (age / age_bin_width).floor() as i64;
    let lo = rows.iter().map(|r| bin(r.age_at_visit)).min().unwrap_or(0);
    let hi = rows.iter().map(|r| bin(r.age_at_visit)).max().unwrap_or(0);

    let n_bins = (hi - lo + 1) as usize;
    let mut sums = vec![[0.0f64; 2]; n_bins];
    let mut counts = vec![[0usize; 2]; n_bins];
    for r in rows {
        let b = (bin(r.age_at_visit) - lo) as usize;
        let g = (r.visit_index - 1) as usize;
        sums[b][g] += r.outcome;
        counts[b][g] += 1;
    }

    Ok((0..n_bins)
        .map(|b| {
            let [n1, n2] = counts[b];
            let pe_estimate =
                (n1 > 0 && n2 > 0).then(|| sums[b][1] / n2 as f64 - sums[b][0] / n1 as f64);
            let lower = (lo + b as i64) as f64 * age_bin_width;
            AlignedPeRow {
                bin_lower: lower,
                bin_upper: lower + age_bin_width,
                pe_estimate,
                n_reassess: n2,
                n_baseline: n1,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;

    fn subject(id: &str, age1: f64, dx: u8, visits: &[u32], y: impl Fn(u32) -> f64) -> Vec<VisitRecord> {
        visits
            .iter()
            .map(|&j| VisitRecord {
                subject_id: id.into(),
                visit_index: j,
                years_since_baseline: (j - 1) as f64,
                age_at_visit: age1 + (j - 1) as f64,
                dx,
                educ: 12.0 + age1 / 10.0,
                gender: (age1 as u32 % 2) as f64,
                race_lat: dx as f64,
                outcome: y(j),
            })
            .collect()
    }

    fn six_visit_data() -> LongitudinalDataset {
        let mut recs = Vec::new();
        for (s, age) in [25.0, 30.0, 35.0, 40.0, 45.0].iter().enumerate() {
            for dx in 0..2u8 {
                let id = format!("S{s}{dx}");
                recs.extend(subject(&id, *age, dx, &[1, 2, 3, 4, 5, 6], |j| j as f64 * 0.1));
            }
        }
        validate_dataset(recs).unwrap()
    }

    fn pe_cols(d: &DesignMatrix, row: usize) -> Vec<f64> {
        let first = d.column("prac1").or(d.column("prac1plus")).unwrap();
        (0..5).map(|m| d.rows[(row, first + m)]).collect()
    }

    #[test]
    fn default_layout() {
        let ds = six_visit_data();
        let d = build_design(&ds, &ModelSpec::no_pe()).unwrap();
        assert_eq!(
            d.column_labels,
            ["(Intercept)", "age_visit", "dx_bin", "dx_bin:t", "educ", "gen", "race_lat"]
        );
        assert_eq!(d.n_obs(), ds.len());
        assert!(d.rows.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(d.clusters().len(), ds.n_subjects());
    }

    #[test]
    fn visit_dummy_indicators() {
        let ds = six_visit_data();
        let d = build_design(&ds, &ModelSpec::with_pe()).unwrap();
        // rows 0..6 are the first subject's visits 1..6
        assert_eq!(pe_cols(&d, 0), [0.0; 5]);
        assert_eq!(pe_cols(&d, 2), [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(pe_cols(&d, 5), [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn top_coding_shares_last_indicator() {
        let ds = six_visit_data();
        let spec = ModelSpec {
            pe_max_level: 3,
            ..ModelSpec::with_pe()
        };
        let d = build_design(&ds, &spec).unwrap();
        let first = d.column("prac1").unwrap();
        assert!(d.column("prac4").is_none());
        for row in 3..6 {
            assert_eq!(d.rows[(row, first + 2)], 1.0);
        }
    }

    #[test]
    fn cumulative_indicators() {
        let ds = six_visit_data();
        let spec = ModelSpec {
            pe_coding: PeCoding::Cumulative,
            ..ModelSpec::with_pe()
        };
        let d = build_design(&ds, &spec).unwrap();
        assert_eq!(pe_cols(&d, 0), [0.0; 5]);
        assert_eq!(pe_cols(&d, 2), [1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(pe_cols(&d, 5), [1.0; 5]);
    }

    #[test]
    fn interaction_columns() {
        let ds = six_visit_data();
        let d = build_design(&ds, &ModelSpec::pe_by_dx()).unwrap();
        assert!(d.column("prac4:dx_bin").is_some());
        assert!(d.column("prac5:dx_bin").is_none());
        assert_eq!(d.n_cols(), 12 + 4);
        let d = build_design(&ds, &ModelSpec::pe_by_age()).unwrap();
        let c = d.column("prac2:age_visit").unwrap();
        // first subject, visit 3: age 27
        assert_eq!(d.rows[(2, c)], 27.0);
        assert_eq!(d.rows[(1, c)], 0.0);
    }

    #[test]
    fn interactions_require_pe() {
        let spec = ModelSpec {
            pe_by_dx: true,
            ..ModelSpec::no_pe()
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let spec = ModelSpec {
            pe_max_level: 1,
            ..ModelSpec::pe_by_age()
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn interaction_designs_full_rank_on_annual_visits() {
        let ds = crate::simulate::simulate_cohorts(&crate::simulate::SimulationConfig {
            n_per_cohort: 10,
            ..crate::simulate::SimulationConfig::with_practice_effects()
        })
        .unwrap();
        for spec in [ModelSpec::pe_by_dx(), ModelSpec::pe_by_age()] {
            build_design(&ds, &spec).unwrap().check_rank().unwrap();
        }
    }

    #[test]
    fn binned_bands() {
        let coding = AgeCoding::binned();
        assert_eq!(coding.band_of(25.0), Some(1));
        assert_eq!(coding.band_of(29.999), Some(1));
        assert_eq!(coding.band_of(30.0), Some(2));
        assert_eq!(coding.band_of(32.0), Some(2));
        assert_eq!(coding.band_of(55.0), Some(6));
        assert_eq!(coding.band_of(24.9), None);
        assert_eq!(coding.band_of(55.1), None);
    }

    #[test]
    fn binned_design_uses_band_one_as_reference() {
        let ds = six_visit_data();
        let spec = ModelSpec {
            age_coding: AgeCoding::binned(),
            ..ModelSpec::no_pe()
        };
        let d = build_design(&ds, &spec).unwrap();
        let bands: Vec<&str> = d
            .column_labels
            .iter()
            .filter(|l| l.starts_with("age_band"))
            .map(String::as_str)
            .collect();
        assert_eq!(
            bands,
            ["age_band_kband2", "age_band_kband3", "age_band_kband4", "age_band_kband5", "age_band_kband6"]
        );
        let row = ds
            .records()
            .iter()
            .position(|r| r.age_at_visit == 32.0)
            .unwrap();
        let k2 = d.column("age_band_kband2").unwrap();
        let band_vals: Vec<f64> = (k2..k2 + 5).map(|c| d.rows[(row, c)]).collect();
        assert_eq!(band_vals, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_band_age_names_record() {
        let ds = validate_dataset(subject("Old", 60.0, 0, &[1, 2], |_| 0.0)).unwrap();
        let spec = ModelSpec {
            age_coding: AgeCoding::binned(),
            ..ModelSpec::no_pe()
        };
        match build_design(&ds, &spec) {
            Err(Error::AgeOutOfBands { subject, visit, .. }) => {
                assert_eq!(subject, "Old");
                assert_eq!(visit, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn age_column_equals_baseline_age_plus_time() {
        let ds = six_visit_data();
        let d = build_design(&ds, &ModelSpec::no_pe()).unwrap();
        let col = d.column(AGE_VISIT).unwrap();
        for (i, range) in ds.subject_ranges().iter().enumerate() {
            let age1 = ds.records()[range.start].age_at_visit;
            for row in range.clone() {
                let r = &ds.records()[row];
                assert_eq!(d.rows[(row, col)], age1 + r.years_since_baseline, "subject {i}");
            }
        }
    }

    #[test]
    fn rank_deficiency_names_column() {
        let ds = six_visit_data();
        let spec = ModelSpec { covariates: Vec::new(), ..ModelSpec::no_pe() };
        let d = build_design(&ds, &spec).unwrap();
        let last = d.n_cols();
        let mut rows = d.rows.clone().insert_column(last, 0.0);
        for i in 0..rows.nrows() {
            rows[(i, last)] = 2.0 * rows[(i, 1)] - rows[(i, 0)];
        }
        let mut labels = d.column_labels.clone();
        labels.push("copy".into());
        let bad = DesignMatrix::new(labels, rows, d.response.clone(), d.cluster_ids.clone()).unwrap();
        match bad.check_rank() {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, ["copy"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(d.check_rank().is_ok());
    }

    #[test]
    fn aligned_constructed_offset() {
        // Each bin has baseline rows at ages a and reassessment rows at the
        // same ages from other subjects, shifted by exactly 0.2.
        let mut recs = Vec::new();
        for age in [26.0, 27.0, 28.0, 31.0, 33.0, 36.0] {
            let base = 1.0 - 0.01 * age;
            recs.extend(subject(&format!("B{age}"), age, 0, &[1], |_| base));
            recs.extend(subject(&format!("R{age}"), age - 1.0, 0, &[1, 2], |j| {
                if j == 2 {
                    base + 0.2
                } else {
                    1.0 - 0.01 * (age - 1.0)
                }
            }));
        }
        // brute-force difference of group means per bin
        let ds = validate_dataset(recs).unwrap();
        let table = aligned_pe_estimate(&ds, 5.0).unwrap();
        for row in &table {
            let in_bin = |r: &&VisitRecord| r.age_at_visit >= row.bin_lower && r.age_at_visit < row.bin_upper;
            let g = |j: u32| {
                let v: Vec<f64> = ds
                    .records()
                    .iter()
                    .filter(|r| r.visit_index == j)
                    .filter(in_bin)
                    .map(|r| r.outcome)
                    .collect();
                (v.iter().sum::<f64>() / v.len() as f64, v.len())
            };
            let (m1, n1) = g(1);
            let (m2, n2) = g(2);
            assert_eq!(row.n_baseline, n1);
            assert_eq!(row.n_reassess, n2);
            if n1 > 0 && n2 > 0 {
                assert!((row.pe_estimate.unwrap() - (m2 - m1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aligned_exact_offset() {
        // Reassessment scores equal the matched-age baseline mean plus 0.2.
        let mut recs = Vec::new();
        for (k, age) in [26.0, 31.0, 36.0].iter().enumerate() {
            let m = 0.5 - 0.03 * k as f64;
            recs.extend(subject(&format!("A{k}"), *age, 0, &[1], |_| m - 0.1));
            recs.extend(subject(&format!("B{k}"), *age, 0, &[1], |_| m + 0.1));
            recs.extend(subject(&format!("R{k}"), *age, 1, &[1, 2], move |j| {
                if j == 1 {
                    m
                } else {
                    m + 0.2
                }
            }));
        }
        let ds = validate_dataset(recs).unwrap();
        let table = aligned_pe_estimate(&ds, 5.0).unwrap();
        let populated: Vec<_> = table.iter().filter_map(|r| r.pe_estimate).collect();
        assert_eq!(populated.len(), 3);
        for pe in populated {
            assert!((pe - 0.2).abs() < 1e-12, "{pe}");
        }
    }

    #[test]
    fn aligned_null_and_bad_width() {
        let mut recs = Vec::new();
        for age in [26.0, 31.0] {
            recs.extend(subject(&format!("S{age}"), age, 0, &[1, 2], |_| 0.7));
        }
        let ds = validate_dataset(recs).unwrap();
        for row in aligned_pe_estimate(&ds, 5.0).unwrap() {
            assert!(row.pe_estimate.unwrap().abs() < 1e-12);
        }
        assert!(aligned_pe_estimate(&ds, 0.0).is_err());
        assert!(aligned_pe_estimate(&ds, -1.0).is_err());
    }

    #[test]
    fn aligned_marks_missing_bins() {
        let mut recs = subject("A", 26.0, 0, &[1, 2], |j| j as f64);
        recs.extend(subject("B", 41.0, 0, &[1], |_| 0.0));
        let ds = validate_dataset(recs).unwrap();
        let table = aligned_pe_estimate(&ds, 5.0).unwrap();
        assert_eq!(table.first().unwrap().bin_lower, 25.0);
        assert_eq!(table.last().unwrap().bin_lower, 40.0);
        assert!(table[1].pe_estimate.is_none());
        assert!(table.last().unwrap().pe_estimate.is_none());
    }
}
