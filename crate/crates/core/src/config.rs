//! Flat `key = value` configuration files for the simulation settings.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma separated. Unknown keys are rejected.

use crate::error::{Error, Result};
use crate::simulate::SimulationConfig;

pub const KEYS: [&str; 20] = [
    "n_per_cohort",
    "cohort_baseline_ages",
    "n_visits",
    "beta0",
    "beta1",
    "beta2",
    "beta3",
    "beta4",
    "pe_beta5",
    "pe_beta6_dx",
    "pe_beta7_age",
    "sigma2",
    "rho",
    "seed",
    "p_sz",
    "educ_mean",
    "educ_sd",
    "p_gender",
    "p_race_lat",
    "reps",
];

/// Parsed `key = value` pairs, in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: k as u64 + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line: k as u64 + 1,
                message: format!("unknown key {key:?}"),
            });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

/// Apply one setting to `config`. `reps` is not a simulation setting and is
/// ignored here.
pub fn apply(config: &mut SimulationConfig, key: &str, value: &str) -> Result<()> {
    let cm = &mut config.covariate_model;
    match key {
        "n_per_cohort" => config.n_per_cohort = num(key, value)?,
        "cohort_baseline_ages" => config.cohort_baseline_ages = parse_list(key, value)?,
        "n_visits" => config.n_visits = num(key, value)?,
        "beta0" => config.beta0 = num(key, value)?,
        "beta1" => config.beta1 = num(key, value)?,
        "beta2" => config.beta2 = num(key, value)?,
        "beta3" => config.beta3 = num(key, value)?,
        "beta4" => {
            config.beta4 = parse_list(key, value)?
                .try_into()
                .map_err(|_| Error::InvalidConfig("beta4 needs 3 values".into()))?
        }
        "pe_beta5" => config.pe_beta5 = parse_list(key, value)?,
        "pe_beta6_dx" => config.pe_beta6_dx = Some(parse_list(key, value)?).filter(|v| !v.is_empty()),
        "pe_beta7_age" => config.pe_beta7_age = Some(parse_list(key, value)?).filter(|v| !v.is_empty()),
        "sigma2" => config.sigma2 = num(key, value)?,
        "rho" => config.rho = num(key, value)?,
        "seed" => config.seed = num(key, value)?,
        "p_sz" => cm.p_sz = num(key, value)?,
        "educ_mean" => cm.educ_mean = num(key, value)?,
        "educ_sd" => cm.educ_sd = num(key, value)?,
        "p_gender" => cm.p_gender = num(key, value)?,
        "p_race_lat" => cm.p_race_lat = num(key, value)?,
        "reps" => {}
        _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
    }
    Ok(())
}

pub fn apply_text(config: &mut SimulationConfig, text: &str) -> Result<()> {
    for (k, v) in parse_pairs(text)? {
        apply(config, &k, &v)?;
    }
    Ok(())
}
