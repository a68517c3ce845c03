//! Monte Carlo replication: simulate, fit, and summarize bias, spread and
//! confidence-interval coverage per term over a run of consecutive seeds.

use std::fmt::Write as _;

use crate::csvio::format_number;
use crate::design::{AgeCoding, Covariate, ModelSpec, PeCoding, AGE_VISIT, DX, DX_TIME, INTERCEPT};
use crate::error::{Error, Result};
use crate::fit::{CoefficientTable, FitSummary};
use crate::gee::{fit_gee, WorkingCorrelation};
use crate::lmm::fit_lmm;
use crate::par::Execution;
use crate::simulate::{simulate_cohorts_with, SimulationConfig};
use crate::stats::Z_975;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    Lmm,
    #[default]
    Gee,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Lmm => "lmm",
            Engine::Gee => "gee",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationPlan {
    /// Generating process; its `seed` is ignored in favour of `first_seed`.
    pub config: SimulationConfig,
    pub spec: ModelSpec,
    pub engine: Engine,
    pub working: WorkingCorrelation,
    pub n_reps: usize,
    pub first_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub seed: u64,
    pub table: Option<CoefficientTable>,
    /// Random-intercept ICC (mixed model only).
    pub icc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermSummary {
    pub term: String,
    pub truth: Option<f64>,
    pub n_fits: usize,
    pub mean_estimate: f64,
    pub mean_bias: Option<f64>,
    /// Standard deviation of the estimates across replicates.
    pub empirical_se: f64,
    /// Mean reported standard error (robust for GEE).
    pub mean_se: f64,
    /// Share of Wald 95% intervals that contain the truth.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub plan: ReplicationPlan,
    pub replicates: Vec<Replicate>,
    pub summary: Vec<TermSummary>,
}

impl ReplicationResult {
    pub fn n_failed(&self) -> usize {
        self.replicates.iter().filter(|r| r.table.is_none()).count()
    }

    pub fn term(&self, term: &str) -> Option<&TermSummary> {
        self.summary.iter().find(|s| s.term == term)
    }

    /// Estimates of one term across successful replicates, in seed order.
    pub fn estimates(&self, term: &str) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|r| r.table.as_ref()?.estimate(term))
            .collect()
    }

    pub fn mean_icc(&self) -> Option<f64> {
        let v: Vec<f64> = self.replicates.iter().filter_map(|r| r.icc).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

impl ReplicationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps < 1 {
            return Err(Error::InvalidConfig("replication count must be >= 1".into()));
        }
        if self.first_seed.checked_add(self.n_reps as u64 - 1).is_none() {
            return Err(Error::InvalidConfig("seed range overflows".into()));
        }
        self.config.validate()?;
        self.spec.validate()
    }

    /// Fit one replicate. Simulation inside a replicate is sequential; the
    /// parallelism lives across replicates.
    pub fn run_one(&self, seed: u64) -> Replicate {
        let config = self.config.clone().seeded(seed);
        let fitted = simulate_cohorts_with(&config, Execution::Sequential).and_then(|ds| match self.engine {
            Engine::Gee => {
                let fit = fit_gee(&ds, &self.spec, self.working)?;
                Ok((fit.table(), None, fit.converged))
            }
            Engine::Lmm => {
                let fit = fit_lmm(&ds, &self.spec)?;
                Ok((fit.table(), Some(fit.icc), fit.converged))
            }
        });
        match fitted {
            Ok((table, icc, true)) => Replicate { seed, table: Some(table), icc, error: None },
            Ok(_) => Replicate { seed, table: None, icc: None, error: Some("did not converge".into()) },
            Err(e) => Replicate { seed, table: None, icc: None, error: Some(e.to_string()) },
        }
    }

    pub fn run(&self, exec: Execution) -> Result<ReplicationResult> {
        self.validate()?;
        let replicates = exec.map_indexed(self.n_reps, |k| self.run_one(self.first_seed + k as u64));
        let summary = summarize(&self.config, &self.spec, &replicates);
        Ok(ReplicationResult { plan: self.clone(), replicates, summary })
    }
}

/// Generating value of the practice-effect vector `values` at visit `j`.
fn effect_at(config: &SimulationConfig, values: Option<&[f64]>, j: u32) -> f64 {
    match (config.pe_slot(j), values) {
        (Some(k), Some(v)) => v[k],
        _ => 0.0,
    }
}

/// Common generating effect of all visits coded at level `m`; `None` when
/// the level is empty or pools unequal effects.
fn level_effect(config: &SimulationConfig, spec: &ModelSpec, values: Option<&[f64]>, m: u32) -> Option<f64> {
    if m == 0 {
        return Some(0.0);
    }
    let mut effects = (2..=config.n_visits)
        .filter(|&j| spec.pe_level(j) == m)
        .map(|j| effect_at(config, values, j));
    let first = effects.next()?;
    effects.all(|e| (e - first).abs() <= 1e-12).then_some(first)
}

fn coded_effect(config: &SimulationConfig, spec: &ModelSpec, values: Option<&[f64]>, m: u32) -> Option<f64> {
    let here = level_effect(config, spec, values, m)?;
    match spec.pe_coding {
        PeCoding::VisitDummy => Some(here),
        PeCoding::Cumulative => Some(here - level_effect(config, spec, values, m - 1)?),
    }
}

/// Generating value of a fitted term, where one is defined.
pub fn true_value(config: &SimulationConfig, spec: &ModelSpec, term: &str) -> Option<f64> {
    let linear = matches!(spec.age_coding, AgeCoding::Linear);
    // Practice terms absorb any unmodelled interaction, so their truth is
    // only defined when the model nests the generating process.
    // Interactions are not fitted at the pooled top level.
    let top_free = |v: &Option<Vec<f64>>| {
        level_effect(config, spec, v.as_deref(), spec.pe_max_level).is_some_and(|e| e == 0.0)
    };
    let pe_ok = (config.pe_beta6_dx.is_none() || (spec.pe_by_dx && top_free(&config.pe_beta6_dx)))
        && (config.pe_beta7_age.is_none() || (spec.pe_by_age && linear && top_free(&config.pe_beta7_age)));
    match term {
        INTERCEPT => linear.then_some(config.beta0),
        AGE_VISIT => linear.then_some(config.beta1),
        DX => Some(config.beta2),
        DX_TIME => Some(config.beta3),
        _ => {
            if let Some(c) = Covariate::parse(term) {
                return Some(match c {
                    Covariate::Educ => config.beta4[0],
                    Covariate::Gender => config.beta4[1],
                    Covariate::RaceLat => config.beta4[2],
                });
            }
            let (head, tail) = term.split_once(':').unwrap_or((term, ""));
            let m = (1..=spec.pe_max_level).find(|&m| spec.pe_label(m) == head)?;
            if !pe_ok || !spec.include_pe {
                return None;
            }
            let values = match tail {
                "" => Some(config.pe_beta5.as_slice()),
                DX => config.pe_beta6_dx.as_deref(),
                AGE_VISIT => config.pe_beta7_age.as_deref(),
                _ => return None,
            };
            coded_effect(config, spec, values, m)
        }
    }
}

fn summarize(config: &SimulationConfig, spec: &ModelSpec, reps: &[Replicate]) -> Vec<TermSummary> {
    let terms = term_union(reps);
    terms
        .into_iter()
        .map(|term| {
            let truth = true_value(config, spec, &term);
            let rows: Vec<(f64, f64)> = reps
                .iter()
                .filter_map(|r| r.table.as_ref()?.get(&term))
                .map(|t| (t.estimate, t.std_error))
                .collect();
            let n = rows.len();
            let nf = n.max(1) as f64;
            let mean_estimate = rows.iter().map(|r| r.0).sum::<f64>() / nf;
            let mean_se = rows.iter().map(|r| r.1).sum::<f64>() / nf;
            let empirical_se = if n > 1 {
                (rows.iter().map(|r| (r.0 - mean_estimate).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let coverage = truth.filter(|_| n > 0).map(|b| {
                rows.iter().filter(|(e, se)| (e - b).abs() <= Z_975 * se).count() as f64 / n as f64
            });
            TermSummary {
                term,
                truth,
                n_fits: n,
                mean_estimate,
                mean_bias: truth.map(|b| mean_estimate - b),
                empirical_se,
                mean_se,
                coverage,
            }
        })
        .collect()
}

fn term_union(reps: &[Replicate]) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for t in reps.iter().filter_map(|r| r.table.as_ref()) {
        for term in t.terms() {
            if !terms.iter().any(|x| x == term) {
                terms.push(term.to_string());
            }
        }
    }
    terms
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), format_number)
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per term:
/// `term,truth,n_fits,mean_estimate,mean_bias,empirical_se,mean_se,coverage`.
pub fn summary_csv(result: &ReplicationResult) -> String {
    let mut out = String::from("term,truth,n_fits,mean_estimate,mean_bias,empirical_se,mean_se,coverage\n");
    for s in &result.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_text(&s.term),
            opt(s.truth),
            s.n_fits,
            format_number(s.mean_estimate),
            opt(s.mean_bias),
            opt(Some(s.empirical_se).filter(|v| v.is_finite())),
            format_number(s.mean_se),
            opt(s.coverage)
        );
    }
    out
}

/// One row per replicate, in seed order: seed, error, then an estimate and
/// a standard error column per term (and `icc` for the mixed model).
pub fn raw_csv(result: &ReplicationResult) -> String {
    let terms = term_union(&result.replicates);
    let with_icc = result.plan.engine == Engine::Lmm;
    let mut out = String::from("seed,error");
    for t in &terms {
        let _ = write!(out, ",{},{}", csv_text(&format!("est:{t}")), csv_text(&format!("se:{t}")));
    }
    if with_icc {
        out.push_str(",icc");
    }
    out.push('\n');
    for r in &result.replicates {
        let _ = write!(out, "{},{}", r.seed, csv_text(r.error.as_deref().unwrap_or("")));
        for t in &terms {
            let row = r.table.as_ref().and_then(|tb| tb.get(t));
            let _ = write!(out, ",{},{}", opt(row.map(|x| x.estimate)), opt(row.map(|x| x.std_error)));
        }
        if with_icc {
            let _ = write!(out, ",{}", opt(r.icc));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(engine: Engine) -> ReplicationPlan {
        ReplicationPlan {
            config: SimulationConfig { n_per_cohort: 20, ..SimulationConfig::default() },
            spec: ModelSpec::no_pe(),
            engine,
            working: WorkingCorrelation::Exchangeable,
            n_reps: 2,
            first_seed: 7,
        }
    }

    #[test]
    fn truth_mapping_no_pe() {
        let cfg = SimulationConfig::default();
        let spec = ModelSpec::with_pe();
        assert_eq!(true_value(&cfg, &spec, "dx_bin"), Some(-0.782));
        assert_eq!(true_value(&cfg, &spec, "gen"), Some(0.034));
        assert_eq!(true_value(&cfg, &spec, "prac3"), Some(0.0));
        assert_eq!(true_value(&cfg, &spec, "nonsense"), None);
    }

    #[test]
    fn truth_mapping_pe_levels() {
        let cfg = SimulationConfig::with_practice_effects();
        let spec = ModelSpec::with_pe();
        let got: Vec<_> = (1..=5).map(|m| true_value(&cfg, &spec, &format!("prac{m}"))).collect();
        assert_eq!(got, [Some(0.2), Some(0.3), Some(0.4), Some(0.5), Some(0.5)]);

        let cum = ModelSpec { pe_coding: PeCoding::Cumulative, ..spec.clone() };
        let got: Vec<_> = (1..=5).map(|m| true_value(&cfg, &cum, &format!("prac{m}plus"))).collect();
        let want = [0.2, 0.1, 0.1, 0.1, 0.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g.unwrap() - w).abs() < 1e-12);
        }

        // K = 3 pools visits 4..6 whose levels differ.
        let k3 = ModelSpec { pe_max_level: 3, ..spec };
        assert_eq!(true_value(&cfg, &k3, "prac2"), Some(0.3));
        assert_eq!(true_value(&cfg, &k3, "prac3"), None);
    }

    #[test]
    fn truth_interactions() {
        let mut cfg = SimulationConfig::with_practice_effects();
        cfg.pe_beta6_dx = Some(vec![0.1, 0.1, 0.1, 0.1, 0.0]);
        assert_eq!(true_value(&cfg, &ModelSpec::with_pe(), "prac1"), None);
        assert_eq!(true_value(&cfg, &ModelSpec::pe_by_dx(), "prac1"), Some(0.2));
        assert_eq!(true_value(&cfg, &ModelSpec::pe_by_dx(), "prac1:dx_bin"), Some(0.1));
        assert_eq!(true_value(&SimulationConfig::with_practice_effects(), &ModelSpec::pe_by_dx(), "prac2:dx_bin"), Some(0.0));
    }

    #[test]
    fn two_reps_ordered_and_deterministic() {
        for engine in [Engine::Gee, Engine::Lmm] {
            let plan = small_plan(engine);
            let a = plan.run(Execution::Parallel).unwrap();
            let b = plan.run(Execution::Sequential).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.replicates.iter().map(|r| r.seed).collect::<Vec<_>>(), [7, 8]);
            assert_eq!(a.n_failed(), 0);
            assert_eq!(raw_csv(&a).lines().count(), 3);
            assert_eq!(summary_csv(&a).lines().count(), 1 + 7);
            assert_eq!(engine == Engine::Lmm, a.mean_icc().is_some());
        }
    }

    #[test]
    fn failures_are_counted() {
        let mut plan = small_plan(Engine::Gee);
        plan.spec = ModelSpec { pe_max_level: 6, ..ModelSpec::with_pe() };
        let res = plan.run(Execution::Sequential).unwrap();
        assert_eq!(res.n_failed(), 2);
        assert!(res.summary.is_empty());
        assert!(raw_csv(&res).contains("rank-deficient"));
    }

    #[test]
    fn zero_reps_rejected() {
        let mut plan = small_plan(Engine::Gee);
        plan.n_reps = 0;
        assert!(matches!(plan.run(Execution::Sequential), Err(Error::InvalidConfig(_))));
    }
}
