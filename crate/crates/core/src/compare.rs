//! With/without practice-effect comparison on one dataset: the four-fit
//! battery (mixed model and GEE, each with and without practice terms),
//! per-term deltas, engine agreement, the age-slope verdict and the
//! outcome-by-age curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::LongitudinalDataset;
use crate::design::{build_design, ModelSpec, AGE_VISIT};
use crate::error::{Error, Result};
use crate::fit::{CoefficientTable, FitSummary};
use crate::gee::{fit_gee_design, WorkingCorrelation};
use crate::lmm::fit_lmm_design;
use crate::replicate::Engine;
use crate::report::format_table_text;
use crate::svg::{line_svg, scatter_svg, ScatterPoint, Series, PALETTE};

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub no_pe_spec: ModelSpec,
    pub with_pe_spec: ModelSpec,
    pub working: WorkingCorrelation,
    /// Width of the age bins used for the outcome curves.
    pub curve_bin_width: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            no_pe_spec: ModelSpec::no_pe(),
            with_pe_spec: ModelSpec::with_pe(),
            working: WorkingCorrelation::Exchangeable,
            curve_bin_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryFit {
    pub engine: Engine,
    pub with_pe: bool,
    pub result: std::result::Result<CoefficientTable, String>,
}

impl BatteryFit {
    pub fn name(&self) -> String {
        let spec = if self.with_pe { "with PE" } else { "no PE" };
        format!("{} ({spec})", self.engine.name().to_uppercase())
    }

    pub fn table(&self) -> Option<&CoefficientTable> {
        self.result.as_ref().ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermDelta {
    pub term: String,
    pub no_pe: f64,
    pub with_pe: f64,
    /// `with_pe - no_pe`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineDiff {
    pub term: String,
    pub with_pe: bool,
    pub lmm: f64,
    pub gee: f64,
}

impl EngineDiff {
    pub fn diff(&self) -> f64 {
        self.gee - self.lmm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeCurve {
    pub dx: u8,
    pub pe_adjusted: bool,
    /// (bin midpoint, mean outcome, count).
    pub points: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Mixed model no-PE, mixed model with-PE, GEE no-PE, GEE with-PE.
    pub fits: Vec<BatteryFit>,
    /// Shared terms of the no-PE and with-PE fits of the reference engine.
    pub deltas: Vec<TermDelta>,
    pub slope_engine: Option<Engine>,
    pub engine_agreement: Vec<EngineDiff>,
    pub age_slope_no_pe: Option<f64>,
    pub age_slope_with_pe: Option<f64>,
    pub curves: Vec<OutcomeCurve>,
}

impl ComparisonReport {
    pub fn fit(&self, engine: Engine, with_pe: bool) -> &BatteryFit {
        self.fits
            .iter()
            .find(|f| f.engine == engine && f.with_pe == with_pe)
            .expect("battery holds all four fits")
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.fits
            .iter()
            .filter_map(|f| f.result.as_ref().err().map(|e| (f.name(), e.clone())))
            .collect()
    }

    /// No-PE age slope minus with-PE age slope.
    pub fn age_slope_shift(&self) -> Option<f64> {
        Some(self.age_slope_no_pe? - self.age_slope_with_pe?)
    }

    /// Largest |GEE - mixed model| coefficient difference for one spec.
    pub fn max_engine_diff(&self, with_pe: bool) -> Option<f64> {
        self.engine_agreement
            .iter()
            .filter(|d| d.with_pe == with_pe)
            .map(|d| d.diff().abs())
            .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
    }

    pub fn verdict(&self) -> String {
        let (Some(shift), Some(with_pe)) = (self.age_slope_shift(), self.age_slope_with_pe) else {
            return "age slope unavailable".into();
        };
        let order = if shift > 0.0 {
            "age slope no-PE > age slope with-PE"
        } else {
            "age slope no-PE <= age slope with-PE"
        };
        let sign = if with_pe < 0.0 { "negative" } else { "non-negative" };
        format!("{order} (shift {shift:+.5}/yr); with-PE slope {sign} ({with_pe:.5})")
    }
}

pub fn compare(dataset: &LongitudinalDataset, options: &CompareOptions) -> Result<ComparisonReport> {
    if dataset.max_visits() < 3 {
        return Err(Error::InvalidConfig(format!(
            "comparison needs at least 3 visits per subject, found {}",
            dataset.max_visits()
        )));
    }
    let mut fits = Vec::with_capacity(4);
    let mut pe_adjustment: Option<Vec<f64>> = None;
    for engine in [Engine::Lmm, Engine::Gee] {
        for (with_pe, spec) in [(false, &options.no_pe_spec), (true, &options.with_pe_spec)] {
            let result = build_design(dataset, spec).and_then(|design| {
                let (table, converged, coefs) = match engine {
                    Engine::Lmm => {
                        let f = fit_lmm_design(&design)?;
                        (f.table(), f.converged, f.coefficients)
                    }
                    Engine::Gee => {
                        let f = fit_gee_design(&design, options.working)?;
                        (f.table(), f.converged, f.coefficients)
                    }
                };
                if !converged {
                    return Err(Error::Numerical("did not converge".into()));
                }
                if with_pe && (engine == Engine::Gee || pe_adjustment.is_none()) {
                    pe_adjustment = Some(pe_contribution(&design, &coefs));
                }
                Ok(table)
            });
            fits.push(BatteryFit { engine, with_pe, result: result.map_err(|e| e.to_string()) });
        }
    }

    let table = |engine, with_pe| {
        fits.iter()
            .find(|f: &&BatteryFit| f.engine == engine && f.with_pe == with_pe)
            .and_then(|f| f.table())
    };
    let slope_engine = [Engine::Gee, Engine::Lmm]
        .into_iter()
        .find(|&e| table(e, false).is_some() && table(e, true).is_some());
    let deltas = slope_engine
        .map(|e| deltas(table(e, false).unwrap(), table(e, true).unwrap()))
        .unwrap_or_default();
    let slope = |with_pe| slope_engine.and_then(|e| table(e, with_pe)?.estimate(AGE_VISIT));

    let mut engine_agreement = Vec::new();
    for with_pe in [false, true] {
        if let (Some(l), Some(g)) = (table(Engine::Lmm, with_pe), table(Engine::Gee, with_pe)) {
            for row in &l.rows {
                if let Some(gee) = g.estimate(&row.term) {
                    engine_agreement.push(EngineDiff { term: row.term.clone(), with_pe, lmm: row.estimate, gee });
                }
            }
        }
    }

    let mut curves = outcome_curves(dataset, None, options.curve_bin_width, false)?;
    if let Some(adj) = &pe_adjustment {
        curves.extend(outcome_curves(dataset, Some(adj), options.curve_bin_width, true)?);
    }

    Ok(ComparisonReport {
        age_slope_no_pe: slope(false),
        age_slope_with_pe: slope(true),
        fits,
        deltas,
        slope_engine,
        engine_agreement,
        curves,
    })
}

fn deltas(no_pe: &CoefficientTable, with_pe: &CoefficientTable) -> Vec<TermDelta> {
    no_pe
        .rows
        .iter()
        .filter_map(|r| {
            let w = with_pe.estimate(&r.term)?;
            Some(TermDelta { term: r.term.clone(), no_pe: r.estimate, with_pe: w, delta: w - r.estimate })
        })
        .collect()
}

/// Per-row fitted contribution of the practice-effect columns.
fn pe_contribution(design: &crate::design::DesignMatrix, coefs: &[f64]) -> Vec<f64> {
    let pe_cols: Vec<usize> = design
        .column_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.starts_with("prac"))
        .map(|(j, _)| j)
        .collect();
    (0..design.n_obs())
        .map(|i| pe_cols.iter().map(|&j| design.rows[(i, j)] * coefs[j]).sum())
        .collect()
}

/// Mean outcome per age bin and diagnosis, optionally after subtracting the
/// fitted practice-effect contribution.
pub fn outcome_curves(
    dataset: &LongitudinalDataset,
    adjustment: Option<&[f64]>,
    bin_width: f64,
    pe_adjusted: bool,
) -> Result<Vec<OutcomeCurve>> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig("curve bin width must be positive".into()));
    }
    let mut acc: BTreeMap<(u8, i64), (f64, usize)> = BTreeMap::new();
    for (i, r) in dataset.records().iter().enumerate() {
        let y = r.outcome - adjustment.map_or(0.0, |a| a[i]);
        let bin = (r.age_at_visit / bin_width).floor() as i64;
        let e = acc.entry((r.dx, bin)).or_insert((0.0, 0));
        e.0 += y;
        e.1 += 1;
    }
    let mut curves: Vec<OutcomeCurve> = Vec::new();
    for ((dx, bin), (sum, n)) in acc {
        let mid = (bin as f64 + 0.5) * bin_width;
        let point = (mid, sum / n as f64, n);
        match curves.last_mut() {
            Some(c) if c.dx == dx => c.points.push(point),
            _ => curves.push(OutcomeCurve { dx, pe_adjusted, points: vec![point] }),
        }
    }
    Ok(curves)
}

pub fn render_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    for f in &report.fits {
        let _ = writeln!(out, "== {} ==", f.name());
        match &f.result {
            Ok(t) => out.push_str(&format_table_text(t)),
            Err(e) => {
                let _ = writeln!(out, "FAILED: {e}");
            }
        }
        out.push('\n');
    }
    if let Some(e) = report.slope_engine {
        let _ = writeln!(out, "== {} deltas (with PE - no PE) ==", e.name().to_uppercase());
        let w = report.deltas.iter().map(|d| d.term.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(out, "{:<w$}  {:>10}  {:>10}  {:>10}", "Term", "no PE", "with PE", "delta");
        for d in &report.deltas {
            let _ = writeln!(out, "{:<w$}  {:>10.5}  {:>10.5}  {:>+10.5}", d.term, d.no_pe, d.with_pe, d.delta);
        }
        out.push('\n');
    }
    for with_pe in [false, true] {
        if let Some(m) = report.max_engine_diff(with_pe) {
            let spec = if with_pe { "with PE" } else { "no PE" };
            let _ = writeln!(out, "max |GEE - LMM| coefficient difference ({spec}): {m:.5}");
        }
    }
    let _ = writeln!(out, "verdict: {}", report.verdict());
    out
}

/// `(file name, SVG)` pairs for the comparison figures.
pub fn render_svgs(report: &ComparisonReport) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    let points: Vec<ScatterPoint> = report
        .engine_agreement
        .iter()
        .map(|d| ScatterPoint {
            label: format!("{} ({})", d.term, if d.with_pe { "PE" } else { "no PE" }),
            x: d.lmm,
            y: d.gee,
        })
        .collect();
    out.push((
        "lme_vs_gee.svg",
        scatter_svg("Coefficients: LME vs GEE", "LME estimate", "GEE estimate", &points, true),
    ));
    let points: Vec<ScatterPoint> = report
        .deltas
        .iter()
        .map(|d| ScatterPoint { label: d.term.clone(), x: d.no_pe, y: d.with_pe })
        .collect();
    out.push((
        "with_vs_without_pe.svg",
        scatter_svg("Coefficients: with vs without PE", "without PE", "with PE", &points, true),
    ));
    let series: Vec<Series> = report
        .curves
        .iter()
        .map(|c| Series {
            name: format!(
                "{} {}",
                if c.dx == 1 { "SZ" } else { "HC" },
                if c.pe_adjusted { "PE-adjusted" } else { "observed" }
            ),
            points: c.points.iter().map(|p| (p.0, p.1)).collect(),
            color: PALETTE[c.dx as usize % PALETTE.len()].to_string(),
            dashed: c.pe_adjusted,
        })
        .collect();
    out.push(("outcome_by_age.svg", line_svg("Outcome by age at visit", "Age at visit", "Mean outcome", &series)));
    out
}
