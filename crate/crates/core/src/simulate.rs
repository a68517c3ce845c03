//! Multi-cohort longitudinal simulation with exchangeable within-subject
//! correlation and optional injected practice effects.
//!
//! Each subject draws from its own ChaCha8 stream: the generator is seeded
//! with `config.seed` and switched to stream `i` for the i-th subject
//! (0-based, cohorts in order). A subject's draws are therefore the same
//! regardless of how many threads generate the cohort or in which order.
//! Per subject the draw order is dx, educ, gender, race_lat, then the
//! shared intercept and one independent component per visit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};

use crate::data::{validate_dataset, LongitudinalDataset, VisitRecord};
use crate::error::{Error, Result};
use crate::par::Execution;

/// Generators for the subject-level covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateModel {
    pub p_sz: f64,
    pub educ_mean: f64,
    pub educ_sd: f64,
    pub educ_min: f64,
    pub educ_max: f64,
    pub p_gender: f64,
    pub p_race_lat: f64,
}

impl Default for CovariateModel {
    fn default() -> Self {
        Self {
            p_sz: 0.5,
            educ_mean: 13.5,
            educ_sd: 2.0,
            educ_min: 8.0,
            educ_max: 20.0,
            p_gender: 0.5,
            p_race_lat: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_per_cohort: usize,
    pub cohort_baseline_ages: Vec<f64>,
    /// Visits per subject, at t = 0, 1, ..., J-1 years.
    pub n_visits: u32,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Coefficients for (educ, gender, race_lat).
    pub beta4: [f64; 3],
    /// Practice-effect level at the m-th reassessment (index m-1). Empty
    /// means no practice effect. Reassessments past the end reuse the last
    /// level.
    pub pe_beta5: Vec<f64>,
    /// Extra practice effect for dx = 1, indexed like `pe_beta5`.
    pub pe_beta6_dx: Option<Vec<f64>>,
    /// Practice-effect slope per year of age at visit, indexed like `pe_beta5`.
    pub pe_beta7_age: Option<Vec<f64>>,
    /// Total residual variance (random intercept + visit noise).
    pub sigma2: f64,
    /// Within-subject correlation.
    pub rho: f64,
    pub covariate_model: CovariateModel,
    pub seed: u64,
}

/// Practice-effect levels used for the practice-effect scenario.
pub const DEFAULT_PE_LEVELS: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.5];

impl Default for SimulationConfig {
    /// The no-practice-effect scenario: 5 cohorts of 100, 6 annual visits.
    fn default() -> Self {
        Self {
            n_per_cohort: 100,
            cohort_baseline_ages: vec![25.0, 30.0, 35.0, 40.0, 45.0],
            n_visits: 6,
            beta0: 0.326,
            beta1: -0.007,
            beta2: -0.782,
            beta3: 0.013,
            beta4: [0.098, 0.034, -0.077],
            pe_beta5: Vec::new(),
            pe_beta6_dx: None,
            pe_beta7_age: None,
            sigma2: 0.155 * 0.155,
            rho: 0.753,
            covariate_model: CovariateModel::default(),
            seed: 1,
        }
    }
}

impl SimulationConfig {
    /// Default cohort layout with practice effects 0.2, 0.3, 0.4, 0.5, 0.5.
    pub fn with_practice_effects() -> Self {
        Self {
            pe_beta5: DEFAULT_PE_LEVELS.to_vec(),
            ..Self::default()
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn has_pe(&self) -> bool {
        !self.pe_beta5.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_per_cohort * self.cohort_baseline_ages.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.n_visits < 1 {
            return bad("n_visits must be >= 1".into());
        }
        if self.n_per_cohort < 1 || self.cohort_baseline_ages.is_empty() {
            return bad("need at least one cohort with at least one subject".into());
        }
        let max_levels = self.n_visits as usize - 1;
        if self.pe_beta5.len() > max_levels {
            return bad(format!(
                "{} practice-effect levels for {} visits (at most {max_levels})",
                self.pe_beta5.len(),
                self.n_visits
            ));
        }
        for (name, v) in [("pe_beta6_dx", &self.pe_beta6_dx), ("pe_beta7_age", &self.pe_beta7_age)] {
            if let Some(v) = v {
                if v.len() != self.pe_beta5.len() {
                    return bad(format!(
                        "{name} has {} levels, pe_beta5 has {}",
                        v.len(),
                        self.pe_beta5.len()
                    ));
                }
            }
        }
        let cm = &self.covariate_model;
        for p in [cm.p_sz, cm.p_gender, cm.p_race_lat] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        if !(cm.educ_sd >= 0.0) || cm.educ_min > cm.educ_max {
            return bad("invalid education generator".into());
        }
        Ok(())
    }

    /// Index into the practice-effect vectors for visit `j`, if any.
    pub fn pe_slot(&self, j: u32) -> Option<usize> {
        let m = j.checked_sub(1)? as usize;
        (m >= 1 && self.has_pe()).then(|| m.min(self.pe_beta5.len()) - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectCovariates {
    pub baseline_age: f64,
    pub dx: u8,
    pub educ: f64,
    pub gender: f64,
    pub race_lat: f64,
}

/// Mean outcome of a subject at visit `j` (1-based).
pub fn mean_function(config: &SimulationConfig, subject: &SubjectCovariates, j: u32) -> f64 {
    let t = (j - 1) as f64;
    let age = subject.baseline_age + t;
    let dx = subject.dx as f64;
    let b4 = &config.beta4;
    let mut mu = config.beta0
        + config.beta1 * age
        + config.beta2 * dx
        + config.beta3 * t * dx
        + b4[0] * subject.educ
        + b4[1] * subject.gender
        + b4[2] * subject.race_lat;
    if let Some(k) = config.pe_slot(j) {
        mu += config.pe_beta5[k];
        if let Some(b6) = &config.pe_beta6_dx {
            mu += b6[k] * dx;
        }
        if let Some(b7) = &config.pe_beta7_age {
            mu += b7[k] * age;
        }
    }
    mu
}

/// One subject's error vector: a shared intercept with variance `rho*sigma2`
/// plus independent components with variance `(1-rho)*sigma2`, giving
/// marginal variance `sigma2` and pairwise correlation `rho`.
pub fn gen_correlated_errors<R: RngCore + ?Sized>(
    n: usize,
    sigma2: f64,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
    }
    let sd_shared = (rho * sigma2).sqrt();
    let sd_own = ((1.0 - rho) * sigma2).sqrt();
    let shared: f64 = rng.sample::<f64, _>(StandardNormal) * sd_shared;
    Ok((0..n)
        .map(|_| shared + sd_own * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Deterministic generator for subject `index` (0-based) under `seed`.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_covariates(model: &CovariateModel, baseline_age: f64, rng: &mut ChaCha8Rng) -> SubjectCovariates {
    let coin = |p: f64, rng: &mut ChaCha8Rng| Bernoulli::new(p).map(|b| b.sample(rng)).unwrap_or(false);
    let dx = coin(model.p_sz, rng) as u8;
    let educ = Normal::new(model.educ_mean, model.educ_sd)
        .map(|n| n.sample(rng))
        .unwrap_or(model.educ_mean)
        .round()
        .clamp(model.educ_min, model.educ_max);
    let gender = coin(model.p_gender, rng) as u8 as f64;
    let race_lat = coin(model.p_race_lat, rng) as u8 as f64;
    SubjectCovariates {
        baseline_age,
        dx,
        educ,
        gender,
        race_lat,
    }
}

fn subject_id(index: usize, total: usize) -> String {
    let width = total.to_string().len().max(4);
    format!("S{:0width$}", index + 1)
}

/// Simulate one subject's visits.
pub fn simulate_subject(config: &SimulationConfig, index: usize) -> Result<Vec<VisitRecord>> {
    let cohort = index / config.n_per_cohort;
    let baseline_age = *config
        .cohort_baseline_ages
        .get(cohort)
        .ok_or_else(|| Error::InvalidConfig(format!("subject {index} beyond last cohort")))?;
    let mut rng = subject_rng(config.seed, index);
    let cov = draw_covariates(&config.covariate_model, baseline_age, &mut rng);
    let errors = gen_correlated_errors(config.n_visits as usize, config.sigma2, config.rho, &mut rng)?;
    let id = subject_id(index, config.n_subjects());
    Ok((1..=config.n_visits)
        .zip(errors)
        .map(|(j, e)| {
            let t = (j - 1) as f64;
            VisitRecord {
                subject_id: id.clone(),
                visit_index: j,
                years_since_baseline: t,
                age_at_visit: baseline_age + t,
                dx: cov.dx,
                educ: cov.educ,
                gender: cov.gender,
                race_lat: cov.race_lat,
                outcome: mean_function(config, &cov, j) + e,
            }
        })
        .collect())
}

pub fn simulate_cohorts(config: &SimulationConfig) -> Result<LongitudinalDataset> {
    simulate_cohorts_with(config, Execution::default())
}

pub fn simulate_cohorts_with(config: &SimulationConfig, exec: Execution) -> Result<LongitudinalDataset> {
    config.validate()?;
    let subjects = exec.map_indexed(config.n_subjects(), |i| simulate_subject(config, i));
    let mut records = Vec::with_capacity(config.n_subjects() * config.n_visits as usize);
    for s in subjects {
        records.extend(s?);
    }
    validate_dataset(records)
}
