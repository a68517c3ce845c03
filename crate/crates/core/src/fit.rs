//! Engine-neutral coefficient tables shared by the mixed-model and GEE fits.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    /// Chi-square(1) Wald statistic, `(estimate / se)^2`.
    Wald,
    /// `estimate / se`, with containment degrees of freedom.
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermEstimate {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub kind: StatKind,
    pub rows: Vec<TermEstimate>,
}

impl CoefficientTable {
    pub fn get(&self, term: &str) -> Option<&TermEstimate> {
        self.rows.iter().find(|r| r.term == term)
    }

    pub fn estimate(&self, term: &str) -> Option<f64> {
        self.get(term).map(|r| r.estimate)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.term.as_str())
    }
}

/// Anything that can summarize itself as a coefficient table.
pub trait FitSummary {
    fn table(&self) -> CoefficientTable;
    fn converged(&self) -> bool;
}
