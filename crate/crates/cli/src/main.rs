use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pexsim::config;
use pexsim::csvio::{format_number, read_dataset_file, write_dataset_file};
use pexsim::design::{Covariate, PeCoding as CorePeCoding};
use pexsim::replicate::{raw_csv, summary_csv};
use pexsim::report::{format_table_csv, format_table_text};
use pexsim::{
    aligned_pe_estimate, compare, AgeCoding, CompareOptions, Engine, Error, Execution, FitSummary,
    ModelSpec, ReplicationPlan, SimulationConfig, WorkingCorrelation,
};

#[derive(Debug, Parser)]
#[command(name = "pexsim", version, about = "Practice-effect simulation and longitudinal model fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a multi-cohort dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit one model to a dataset and print its coefficient table.
    Fit(FitArgs),
    /// Fit with and without practice effects under both engines.
    Compare(CompareArgs),
    /// Repeat simulate-and-fit over consecutive seeds.
    Replicate(ReplicateArgs),
    /// Age-aligned first-reassessment practice-effect estimate.
    AlignPe(AlignArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    NoPe,
    Pe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpecArg {
    NoPe,
    Pe,
    PeByDx,
    PeByAge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgeArg {
    Linear,
    Binned,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PeCodingArg {
    Visit,
    Cumulative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Lmm,
    Gee,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WorkingArg {
    Ind,
    Exch,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, env = "PEXSIM_SEED")]
    seed: Option<u64>,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generating scenario.
    #[arg(long, value_enum)]
    generate: Option<Scenario>,
    #[arg(long)]
    n_per_cohort: Option<usize>,
    #[arg(long)]
    n_visits: Option<u32>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Practice-effect levels, comma separated.
    #[arg(long)]
    pe_levels: Option<String>,
    /// Extra practice effect for dx = 1, comma separated.
    #[arg(long)]
    pe_dx: Option<String>,
    /// Practice-effect slope per year of age, comma separated.
    #[arg(long)]
    pe_age: Option<String>,
}

#[derive(Debug, Args)]
struct SpecArgs {
    #[arg(long, value_enum, default_value = "no-pe")]
    spec: SpecArg,
    #[arg(long, value_enum, default_value = "linear")]
    age_coding: AgeArg,
    #[arg(long, value_enum, default_value = "visit")]
    pe_coding: PeCodingArg,
    /// Highest practice-effect level K.
    #[arg(long, default_value_t = 5)]
    pe_max_level: u32,
    /// Covariates, comma separated (educ, gen, race_lat); empty for none.
    #[arg(long, default_value = "educ,gen,race_lat")]
    covariates: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    input: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value = "gee")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "exch")]
    working: WorkingArg,
    /// Table CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input carries days_since_baseline instead of visit timing.
    #[arg(long)]
    days_column: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    input: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value = "exch")]
    working: WorkingArg,
    /// Directory for the report and figures.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    days_column: bool,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value = "gee")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "exch")]
    working: WorkingArg,
    #[arg(long)]
    reps: Option<usize>,
    /// Summary CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate CSV output.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    /// Run replicates one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct AlignArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    bin_width: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    days_column: bool,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::AlignPe(a) => cmd_align(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn distinct_paths(paths: &[&Path]) -> CliResult<()> {
    let resolved: Vec<PathBuf> = paths
        .iter()
        .map(|p| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()))
        .collect();
    for i in 0..resolved.len() {
        if resolved[..i].contains(&resolved[i]) {
            return Err(CliError::Usage(format!("path {} used twice", paths[i].display())));
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

impl SimArgs {
    fn config(&self) -> CliResult<(SimulationConfig, Option<usize>)> {
        let mut cfg = match self.generate {
            Some(Scenario::Pe) => SimulationConfig::with_practice_effects(),
            _ => SimulationConfig::default(),
        };
        let mut reps = None;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            for (k, v) in config::parse_pairs(&text)? {
                if k == "reps" {
                    reps = Some(v.parse().map_err(|_| CliError::Usage(format!("reps: cannot parse {v:?}")))?);
                } else {
                    config::apply(&mut cfg, &k, &v)?;
                }
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n_per_cohort {
            cfg.n_per_cohort = n;
        }
        if let Some(j) = self.n_visits {
            cfg.n_visits = j;
        }
        if let Some(r) = self.rho {
            cfg.rho = r;
        }
        if let Some(s) = self.sigma2 {
            cfg.sigma2 = s;
        }
        if let Some(v) = &self.pe_levels {
            cfg.pe_beta5 = config::parse_list("pe_levels", v)?;
        }
        if let Some(v) = &self.pe_dx {
            cfg.pe_beta6_dx = Some(config::parse_list("pe_dx", v)?);
        }
        if let Some(v) = &self.pe_age {
            cfg.pe_beta7_age = Some(config::parse_list("pe_age", v)?);
        }
        cfg.validate()?;
        Ok((cfg, reps))
    }
}

impl SpecArgs {
    fn build(&self, spec: SpecArg) -> CliResult<ModelSpec> {
        let mut s = match spec {
            SpecArg::NoPe => ModelSpec::no_pe(),
            SpecArg::Pe => ModelSpec::with_pe(),
            SpecArg::PeByDx => ModelSpec::pe_by_dx(),
            SpecArg::PeByAge => ModelSpec::pe_by_age(),
        };
        if let AgeArg::Binned = self.age_coding {
            s.age_coding = AgeCoding::binned();
        }
        s.pe_coding = match self.pe_coding {
            PeCodingArg::Visit => CorePeCoding::VisitDummy,
            PeCodingArg::Cumulative => CorePeCoding::Cumulative,
        };
        s.pe_max_level = self.pe_max_level;
        s.covariates = self
            .covariates
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(|c| Covariate::parse(c).ok_or_else(|| CliError::Usage(format!("unknown covariate {c:?}"))))
            .collect::<CliResult<_>>()?;
        s.validate()?;
        Ok(s)
    }

    fn model(&self) -> CliResult<ModelSpec> {
        self.build(self.spec)
    }
}

fn engine(e: EngineArg) -> Engine {
    match e {
        EngineArg::Lmm => Engine::Lmm,
        EngineArg::Gee => Engine::Gee,
    }
}

fn working(w: WorkingArg) -> WorkingCorrelation {
    match w {
        WorkingArg::Ind => WorkingCorrelation::Independence,
        WorkingArg::Exch => WorkingCorrelation::Exchangeable,
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let (cfg, _) = a.sim.config()?;
    if let Some(c) = &a.sim.config {
        distinct_paths(&[c, &a.out])?;
    }
    let ds = pexsim::simulate::simulate_cohorts_with(&cfg, Execution::Sequential)?;
    write_dataset_file(&ds, &a.out)?;
    println!(
        "wrote {} rows for {} subjects to {}",
        ds.len(),
        ds.n_subjects(),
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    if let Some(out) = &a.out {
        distinct_paths(&[&a.input, out])?;
    }
    let spec = a.spec.model()?;
    let ds = read_dataset_file(&a.input, a.days_column)?;
    let (table, converged, note) = match engine(a.engine) {
        Engine::Gee => {
            let f = pexsim::fit_gee(&ds, &spec, working(a.working))?;
            let note = format!(
                "GEE ({}), rho = {:.4}, dispersion = {:.5}, {} clusters, {} observations",
                match f.working {
                    WorkingCorrelation::Independence => "independence",
                    WorkingCorrelation::Exchangeable => "exchangeable",
                },
                f.working_rho,
                f.dispersion,
                f.n_clusters,
                f.n_obs
            );
            (f.table(), f.converged, note)
        }
        Engine::Lmm => {
            let f = pexsim::fit_lmm(&ds, &spec)?;
            let note = format!(
                "LMM (REML), sigma_b^2 = {:.5}, sigma_e^2 = {:.5}, ICC = {:.4}, {} subjects, {} observations",
                f.sigma_b2, f.sigma_e2, f.icc, f.n_subjects, f.n_obs
            );
            (f.table(), f.converged, note)
        }
    };
    println!("{note}");
    print!("{}", format_table_text(&table));
    if let Some(out) = &a.out {
        write_file(out, &format_table_csv(&table))?;
    }
    if !converged {
        return Err(Error::Numerical("fit did not converge".into()).into());
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let with_pe = match a.spec.spec {
        SpecArg::NoPe => SpecArg::Pe,
        s => s,
    };
    let ds = read_dataset_file(&a.input, a.days_column)?;
    let opts = CompareOptions {
        no_pe_spec: a.spec.build(SpecArg::NoPe)?,
        with_pe_spec: a.spec.build(with_pe)?,
        working: working(a.working),
        ..CompareOptions::default()
    };
    let report = compare(&ds, &opts)?;
    let text = pexsim::compare::render_text(&report);
    print!("{text}");
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let report_path = dir.join("report.txt");
        distinct_paths(&[&a.input, &report_path])?;
        write_file(&report_path, &text)?;
        for (name, svg) in pexsim::compare::render_svgs(&report) {
            let path = dir.join(name);
            distinct_paths(&[&a.input, &path])?;
            write_file(&path, &svg)?;
        }
    }
    Ok(())
}

fn cmd_replicate(a: ReplicateArgs) -> CliResult<()> {
    let mut paths: Vec<&Path> = Vec::new();
    paths.extend(a.sim.config.as_deref());
    paths.extend(a.out.as_deref());
    paths.extend(a.raw_out.as_deref());
    distinct_paths(&paths)?;
    let (config, file_reps) = a.sim.config()?;
    let n_reps = a.reps.or(file_reps).unwrap_or(100);
    if n_reps < 2 {
        return Err(CliError::Usage("--reps must be at least 2".into()));
    }
    let plan = ReplicationPlan {
        first_seed: config.seed,
        config,
        spec: a.spec.model()?,
        engine: engine(a.engine),
        working: working(a.working),
        n_reps,
    };
    let exec = if a.sequential { Execution::Sequential } else { Execution::default() };
    let result = plan.run(exec)?;
    let summary = summary_csv(&result);
    print!("{summary}");
    println!(
        "{} replicates (seeds {}..={}), {} failed",
        n_reps,
        plan.first_seed,
        plan.first_seed + n_reps as u64 - 1,
        result.n_failed()
    );
    if let Some(icc) = result.mean_icc() {
        println!("mean ICC {icc:.4}");
    }
    if let Some(out) = &a.out {
        write_file(out, &summary)?;
    }
    if let Some(raw) = &a.raw_out {
        write_file(raw, &raw_csv(&result))?;
    }
    Ok(())
}

fn cmd_align(a: AlignArgs) -> CliResult<()> {
    if let Some(out) = &a.out {
        distinct_paths(&[&a.input, out])?;
    }
    let ds = read_dataset_file(&a.input, a.days_column)?;
    let rows = aligned_pe_estimate(&ds, a.bin_width)?;
    let mut csv = String::from("bin_lower,bin_upper,pe_estimate,n_reassess,n_baseline\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_number(r.bin_lower),
            format_number(r.bin_upper),
            r.pe_estimate.map_or_else(|| "NA".into(), format_number),
            r.n_reassess,
            r.n_baseline
        ));
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{:>8}  {:>8}  {:>10}  {:>10}  {:>10}", "from", "to", "PE", "n visit 2", "n visit 1");
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:>8}  {:>8}  {:>10}  {:>10}  {:>10}",
            r.bin_lower,
            r.bin_upper,
            r.pe_estimate.map_or_else(|| "-".into(), |v| format!("{v:.5}")),
            r.n_reassess,
            r.n_baseline
        );
    }
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(())
}
