mod batch;
mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use signcong::bootstrap::{read_replicates, trimmed_correlation, trim_count, ReplicateFormat, ReplicateSet, TrimMode, TrimOptions};
use signcong::calibration::{emit_critical_table, write_table_csv, CalibrationConfig, Calibrator};
use signcong::cones::{cone_basis_change, cone_test_with};
use signcong::normal::{Correlation, Covariance2};
use signcong::procedures::{run_test, NullDirection, TestName};
use signcong::regions::QuantileBins;
use signcong::regions::RejectionRule;
use signcong::simulate::{
    delta_demo, feasible_size_sweep, heuristic_size_extremes, mc_rate_surface, monotonic_region_audit, rejection_rule,
    verify_containment, SampleMeanDgp, SimScenario,
};
use signcong::Error;

use crate::batch::{read_records, run_batch, InputFormat, InputRecord, BATCH_HEADER};
use crate::output::{fmt_num, open_out, write_csv, write_json};

const CONVENTIONS: &str = "\
Conventions:
  Null hypotheses. The congruent direction (default) tests H0: mu1*mu2 >= 0,
  so rejecting means the signs differ. The incongruent direction tests
  H0: mu1*mu2 <= 0; it is run by flipping the sign of the second estimate
  and of rho, so rejecting means the signs agree.
  Boundary. With t_j = mu_j_hat / sigma_j, the recommended, feasible and BMW
  tests reject when the signs of t1 and t2 disagree and min(|t1|, |t2|) is
  at least the critical value; equality rejects. A zero estimate counts as
  agreeing with either sign and never rejects.
  Critical values. c_alpha(rho) is Phi^-1(1 - alpha) for rho >= 0 and is
  calibrated on the null boundary (0, mu2), mu2 >= 0, for rho < 0.
  Sample size. When --n (or an n column) is given, sigma1 and sigma2 are
  per-observation scales; standard errors are sigma_j / sqrt(n).

Exit status: 0 on success, 1 on a usage or input error, 2 when a numeric
procedure fails (calibration bracket, degenerate cone or correlation).
Config: --config FILE or $SIGNCONG_CONFIG names a TOML file with a
[calibration] table (grid_step, grid_max, extended_grid_max,
bisection_steps, bracket_low, bracket_high).
Numbers are printed with 10 significant digits.";

#[derive(Debug, Parser)]
#[command(name = "signcong", version, about = "Tests of sign congruence between two estimates", after_help = CONVENTIONS)]
struct Cli {
    /// TOML config file; overrides $SIGNCONG_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one test on an estimate pair, or on every row of --input.
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    Test(TestArgs),
    /// Calibrate the critical value c_alpha(rho).
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    Calibrate(CalibrateArgs),
    /// Emit a table of critical values over alpha x rho.
    #[command(after_help = CONVENTIONS)]
    Table(TableArgs),
    /// Test H0: mu in C or -C for the cone C spanned by two vectors.
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    ConeTest(ConeArgs),
    /// Trimmed correlation of bootstrap replicate pairs.
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    BootCorr(BootArgs),
    /// Monte Carlo studies of size, power and region shape.
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    Simulate(SimArgs),
    /// Distribution of mu1_hat*mu2_hat against its delta-method approximation.
    #[command(allow_negative_numbers = true, after_help = CONVENTIONS)]
    DeltaDemo(DeltaArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct CalFlags {
    /// Spacing of the mu2 grid used for calibration.
    #[arg(long, value_name = "STEP")]
    cal_grid_step: Option<f64>,
    /// Upper end of the calibration grid.
    #[arg(long, value_name = "MAX")]
    cal_grid_max: Option<f64>,
    /// Number of bisection steps.
    #[arg(long, value_name = "N")]
    cal_bisection_steps: Option<u32>,
}

impl CalFlags {
    fn apply(&self, mut cfg: CalibrationConfig) -> CalibrationConfig {
        if let Some(v) = self.cal_grid_step {
            cfg.grid_step = v;
        }
        if let Some(v) = self.cal_grid_max {
            cfg.grid_max = v;
        }
        if let Some(v) = self.cal_bisection_steps {
            cfg.bisection_steps = v;
        }
        cfg
    }
}

#[derive(Debug, Args)]
struct EstimateFlags {
    /// First estimate.
    #[arg(long)]
    mu1: Option<f64>,
    /// Second estimate.
    #[arg(long)]
    mu2: Option<f64>,
    /// Standard error of the first estimate (per-observation scale with --n).
    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,
    /// Standard error of the second estimate (per-observation scale with --n).
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Correlation of the two estimators.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Sample size; required by the feasible test.
    #[arg(long)]
    n: Option<u64>,
}

impl EstimateFlags {
    fn record(&self) -> Result<InputRecord, CliError> {
        let (Some(mu1), Some(mu2)) = (self.mu1, self.mu2) else {
            return Err(CliError::Usage("--mu1 and --mu2 are required (or pass --input)".into()));
        };
        Ok(InputRecord {
            mu1,
            mu2,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            rho: self.rho,
            n: self.n,
        })
    }
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Procedure to run.
    #[arg(long = "test", value_parser = parse_test, default_value = "recommended")]
    test: TestName,
    #[command(flatten)]
    est: EstimateFlags,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// congruent (H0: mu1*mu2 >= 0) or incongruent (H0: mu1*mu2 <= 0).
    #[arg(long, value_parser = parse_direction, default_value = "congruent")]
    direction: NullDirection,
    /// Batch mode: CSV or JSON file with columns mu1,mu2,sigma1,sigma2,rho and optionally n.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output format; JSON for one record and CSV for a batch by default.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cal: CalFlags,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rho: f64,
    /// Also report the p-value of this min(|t1|, |t2|).
    #[arg(long)]
    min_t: Option<f64>,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cal: CalFlags,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Comma-separated list; `a,b,...,z` expands to an arithmetic sequence.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    alphas: FloatList,
    /// Comma-separated list; `a,b,...,z` expands to an arithmetic sequence.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    rhos: FloatList,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cal: CalFlags,
}

#[derive(Debug, Args)]
struct ConeArgs {
    /// Spanning vectors as b1x,b1y,b2x,b2y.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    cone: FloatList,
    #[command(flatten)]
    est: EstimateFlags,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_parser = parse_direction, default_value = "congruent")]
    direction: NullDirection,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cal: CalFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Zero,
    Drop,
}

#[derive(Debug, Args)]
struct BootArgs {
    /// Replicate pairs: CSV with two columns (header optional) or a JSON array of pairs.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Input format; inferred from the extension by default.
    #[arg(long, value_enum)]
    input_format: Option<Format>,
    /// Fraction of largest-norm replicates to trim.
    #[arg(long, default_value_t = ReplicateSet::DEFAULT_TRIM)]
    trim_frac: f64,
    /// Set trimmed replicates to the center (zero) or remove them (drop).
    #[arg(long, value_enum, default_value = "zero")]
    mode: ModeArg,
    /// Centering point x,y; the replicates' mean by default.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    center: Option<FloatList>,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    /// Rejection rates of --test over --mu-grid.
    Rates,
    /// BMW within heuristic within recommended region at rho = 0, alpha = 0.05.
    Containment,
    /// Heuristic-test rate at (0, 0) for each of --rhos.
    HeuristicExtremes,
    /// Grid scan for points that leave the region when |t| grows.
    MonotonicAudit,
    /// Feasible-test size over --n-schedule with sample-mean data.
    FeasibleSweep,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    study: Study,
    /// Scenario file (JSON, or TOML by extension) with the fields of a rate
    /// study: test, mu_grid, cov, alpha, reps, seed, n_schedule. Flags override it.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    #[arg(long = "test", value_parser = parse_test)]
    test: Option<TestName>,
    /// Points as `mu1,mu2;mu1,mu2;...`.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    mu_grid: Option<Points>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Correlations for the heuristic-extremes study.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    rhos: Option<FloatList>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    reps: Option<u64>,
    /// Required for every randomized study.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_list)]
    n_schedule: Option<FloatList>,
    /// Number of points for the containment study.
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    /// Grid spacing of the monotonicity audit.
    #[arg(long, default_value_t = 0.01)]
    audit_step: f64,
    /// The audit scans [-extent, extent]^2.
    #[arg(long, default_value_t = 5.0)]
    extent: f64,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cal: CalFlags,
}

#[derive(Debug, Args)]
struct DeltaArgs {
    #[arg(long)]
    mu1: f64,
    #[arg(long)]
    mu2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long)]
    seed: u64,
    /// CSV of bins (default) or the full report as JSON.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct FloatList(Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
struct Points(Vec<(f64, f64)>);

fn parse_test(s: &str) -> Result<TestName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<NullDirection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// Comma-separated numbers. `a,b,...,z` continues the step `b − a` up to `z`.
fn parse_list(s: &str) -> Result<FloatList, String> {
    let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
    let mut out: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "..." {
            let (Some(&b), Some(end)) = (out.last(), tokens.get(i + 1)) else {
                return Err("`...` needs two values before it and one after".into());
            };
            if out.len() < 2 {
                return Err("`...` needs two values before it and one after".into());
            }
            let step = b - out[out.len() - 2];
            let end = parse_f64(end)?;
            if step == 0.0 || (end - b) * step < 0.0 {
                return Err(format!("cannot step from {b} to {end} by {step}"));
            }
            let count = ((end - b) / step + 1e-9).floor() as i64;
            if count > 100_000 {
                return Err("sequence is too long".into());
            }
            for k in 1..=count {
                // Round away accumulated binary noise.
                let v = b + k as f64 * step;
                out.push((v * 1e12).round() / 1e12);
            }
            if out.last() != Some(&end) {
                out.push(end);
            }
            i += 2;
        } else {
            out.push(parse_f64(tokens[i])?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(FloatList(out))
}

fn parse_points(s: &str) -> Result<Points, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| match parse_list(p)?.0.as_slice() {
            &[a, b] => Ok((a, b)),
            _ => Err(format!("{p:?} is not a point mu1,mu2")),
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("no points".into()) } else { Ok(Points(v)) })
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numeric(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Calibration { .. } | Error::DegenerateCone { .. } | Error::UndefinedCorrelation(_) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("write failed: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}\n\nFor more information, try '--help'."),
                CliError::Input(m) | CliError::Internal(m) => eprintln!("error: {m}"),
                CliError::Numeric(m) => eprintln!("numeric failure: {m}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref())?;
    let calibrator = |flags: &CalFlags| -> Result<Calibrator, CliError> { Ok(Calibrator::new(flags.apply(file.calibration.clone()))?) };
    match cli.command {
        Command::Test(a) => cmd_test(&calibrator(&a.cal)?, a),
        Command::Calibrate(a) => cmd_calibrate(&calibrator(&a.cal)?, a),
        Command::Table(a) => cmd_table(calibrator(&a.cal)?.config(), a),
        Command::ConeTest(a) => cmd_cone(&calibrator(&a.cal)?, a),
        Command::BootCorr(a) => cmd_boot(a),
        Command::Simulate(a) => cmd_simulate(&calibrator(&a.cal)?, a),
        Command::DeltaDemo(a) => cmd_delta(a),
    }
}

fn cmd_test(cal: &Calibrator, a: TestArgs) -> Result<(), CliError> {
    if let Some(input) = &a.input {
        if a.est.mu1.is_some() || a.est.mu2.is_some() {
            return Err(CliError::Usage("--input cannot be combined with --mu1/--mu2".into()));
        }
        let records = read_records(input, InputFormat::from_path(input))?;
        if records.is_empty() {
            eprintln!("warning: {} has no records; nothing to do", input.display());
            open_out(a.out.as_deref())?.flush()?;
            return Ok(());
        }
        let rows = run_batch(cal, &records, a.test, a.alpha, a.direction);
        for (i, (_, err)) in rows.iter().enumerate() {
            if let Some(msg) = err {
                eprintln!("warning: row {}: {msg}", i + 1);
            }
        }
        let mut out = open_out(a.out.as_deref())?;
        return match a.format.unwrap_or(Format::Csv) {
            Format::Csv => {
                let cells: Vec<Vec<String>> = rows.iter().map(|(r, _)| r.csv_cells()).collect();
                write_csv(&mut out, &BATCH_HEADER, &cells)
            }
            Format::Json => {
                let body: Vec<_> = rows.into_iter().map(|(r, _)| r).collect();
                write_json(&mut out, &body)
            }
        };
    }
    let est = a.est.record()?.estimate(a.test)?;
    let outcome = run_test(cal, a.test, &est, a.alpha, a.direction)?;
    let mut out = open_out(a.out.as_deref())?;
    match a.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&mut out, &outcome),
        Format::Csv => {
            let row = batch::BatchRow {
                test: outcome.test,
                reject: Some(outcome.reject),
                p_value: outcome.p_value,
                critical_value: outcome.critical_value,
                alpha: outcome.alpha,
                direction: outcome.direction,
                min_stat: Some(outcome.min_stat),
                error: None,
            };
            write_csv(&mut out, &BATCH_HEADER, &[row.csv_cells()])
        }
    }
}

fn cmd_calibrate(cal: &Calibrator, a: CalibrateArgs) -> Result<(), CliError> {
    let rho = Correlation::new(a.rho)?;
    let entry = cal.critical_value(a.alpha, rho)?;
    let mut v = output::to_rounded_json(&entry)?;
    if let Some(m) = a.min_t {
        let p = cal.pvalue_from_min_stat(m, rho)?;
        v["min_t"] = json!(output::sig10(m));
        v["p_value"] = json!(output::sig10(p));
    }
    write_json(&mut open_out(a.out.as_deref())?, &v)
}

fn cmd_table(cfg: &CalibrationConfig, a: TableArgs) -> Result<(), CliError> {
    let rhos = a.rhos.0.iter().map(|&r| Correlation::new(r)).collect::<Result<Vec<_>, _>>()?;
    let cells = emit_critical_table(&a.alphas.0, &rhos, cfg)?;
    let mut out = open_out(a.out.as_deref())?;
    match a.format {
        Format::Csv => write_table_csv(&cells, &mut out, fmt_num)?,
        Format::Json => {
            let body: Vec<serde_json::Value> = cells
                .iter()
                .map(|c| match &c.result {
                    Ok(e) => serde_json::to_value(e).unwrap_or_default(),
                    Err(err) => json!({"alpha": c.alpha, "rho": c.rho, "error": err.to_string()}),
                })
                .collect();
            write_json(&mut out, &body)?;
        }
    }
    out.flush()?;
    let failed: Vec<String> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().err().map(|e| format!("alpha={}, rho={}: {e}", c.alpha, c.rho)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("{} cell(s) failed:\n  {}", failed.len(), failed.join("\n  "))))
    }
}

fn cmd_cone(cal: &Calibrator, a: ConeArgs) -> Result<(), CliError> {
    let &[b1x, b1y, b2x, b2y] = a.cone.0.as_slice() else {
        return Err(CliError::Usage("--cone takes four numbers b1x,b1y,b2x,b2y".into()));
    };
    let cone = cone_basis_change([b1x, b1y], [b2x, b2y])?;
    let est = a.est.record()?.estimate(TestName::Recommended)?;
    let outcome = cone_test_with(cal, &est, &cone, a.alpha, a.direction)?;
    write_json(&mut open_out(a.out.as_deref())?, &outcome)
}

#[derive(Serialize)]
struct BootReport {
    rho: f64,
    replicates: usize,
    trimmed: usize,
    trim_frac: f64,
    mode: TrimMode,
}

fn cmd_boot(a: BootArgs) -> Result<(), CliError> {
    let format = match a.input_format {
        Some(Format::Csv) => ReplicateFormat::Csv,
        Some(Format::Json) => ReplicateFormat::Json,
        None => ReplicateFormat::from_path(&a.input),
    };
    let file = std::fs::File::open(&a.input).map_err(|e| CliError::Input(format!("cannot read {}: {e}", a.input.display())))?;
    let pairs = read_replicates(file, format, &a.input)?;
    let set = ReplicateSet::new(pairs, a.trim_frac)?;
    let center = match a.center {
        Some(FloatList(v)) if v.len() == 2 => Some((v[0], v[1])),
        Some(_) => return Err(CliError::Usage("--center takes two numbers x,y".into())),
        None => None,
    };
    let mode = match a.mode {
        ModeArg::Zero => TrimMode::Zero,
        ModeArg::Drop => TrimMode::Drop,
    };
    let rho = trimmed_correlation(set.pairs(), set.trim_frac(), TrimOptions { mode, center })?;
    let report = BootReport {
        rho: rho.value(),
        replicates: set.len(),
        trimmed: trim_count(set.len(), set.trim_frac()),
        trim_frac: set.trim_frac(),
        mode,
    };
    write_json(&mut open_out(a.out.as_deref())?, &report)
}

fn load_scenario(path: &Path) -> Result<SimScenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Input(format!("invalid scenario {}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid scenario {}: {e}", path.display())))
    }
}

/// Merge the scenario file (if any) with flags; flags win.
fn scenario_from(a: &SimArgs) -> Result<SimScenario, CliError> {
    let base = match &a.scenario {
        Some(p) => Some(load_scenario(p)?),
        None => None,
    };
    let cov0 = base.as_ref().map(|s| s.cov);
    let rho = match a.rho {
        Some(r) => Correlation::new(r)?,
        None => cov0.map_or(Correlation::ZERO, |c| c.rho),
    };
    let cov = Covariance2::new(
        a.sigma1.or(cov0.map(|c| c.sigma1)).unwrap_or(1.0),
        a.sigma2.or(cov0.map(|c| c.sigma2)).unwrap_or(1.0),
        rho,
    )?;
    let n_schedule = match &a.n_schedule {
        Some(FloatList(v)) => Some(
            v.iter()
                .map(|&x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as u64)
                    } else {
                        Err(CliError::Usage(format!("sample size {x} is not a positive integer")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => base.as_ref().and_then(|s| s.n_schedule.clone()),
    };
    Ok(SimScenario {
        test: a.test.or(base.as_ref().map(|s| s.test)).unwrap_or(TestName::Recommended),
        mu_grid: a
            .mu_grid
            .clone()
            .map(|p| p.0)
            .or(base.as_ref().map(|s| s.mu_grid.clone()))
            .unwrap_or_else(|| vec![(0.0, 0.0)]),
        cov,
        alpha: a.alpha.or(base.as_ref().map(|s| s.alpha)).unwrap_or(0.05),
        reps: a.reps.or(base.as_ref().map(|s| s.reps)).unwrap_or(100_000),
        seed: match a.seed.or(base.as_ref().map(|s| s.seed)) {
            Some(s) => s,
            None if a.study == Study::MonotonicAudit => 0,
            None => return Err(CliError::Usage("randomized studies require --seed".into())),
        },
        n_schedule,
    })
}

fn rate_cells(rows: &[signcong::simulate::RateRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_num(r.mu1),
                fmt_num(r.mu2),
                fmt_num(r.rho),
                r.test.to_string(),
                fmt_num(r.rate),
                fmt_num(r.se),
                r.reps.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect()
}

const RATE_HEADER: [&str; 8] = ["mu1", "mu2", "rho", "test", "rate", "se", "reps", "seed"];

fn cmd_simulate(cal: &Calibrator, a: SimArgs) -> Result<(), CliError> {
    let s = scenario_from(&a)?;
    let mut out = open_out(a.out.as_deref())?;
    let format = a.format.unwrap_or(match a.study {
        Study::Rates | Study::HeuristicExtremes | Study::FeasibleSweep => Format::Csv,
        Study::Containment | Study::MonotonicAudit => Format::Json,
    });
    match a.study {
        Study::Rates => {
            let rows = mc_rate_surface(cal, &s)?;
            eprintln!(
                "rates: test={} rho={} alpha={} reps={} seed={} points={}",
                s.test,
                s.cov.rho.value(),
                s.alpha,
                s.reps,
                s.seed,
                rows.len()
            );
            match format {
                Format::Csv => write_csv(&mut out, &RATE_HEADER, &rate_cells(&rows)),
                Format::Json => write_json(&mut out, &rows),
            }
        }
        Study::Containment => {
            let report = verify_containment(a.points, s.seed)?;
            eprintln!(
                "containment: points={} violations={} seed={}",
                report.points,
                report.violations.len(),
                report.seed
            );
            write_json(&mut out, &report)
        }
        Study::HeuristicExtremes => {
            let rhos = match &a.rhos {
                Some(FloatList(v)) => v.iter().map(|&r| Correlation::new(r)).collect::<Result<Vec<_>, _>>()?,
                None => vec![Correlation::new(-0.99)?, Correlation::ZERO, Correlation::new(0.99)?],
            };
            let rows = heuristic_size_extremes(&rhos, s.alpha, s.reps, s.seed)?;
            eprintln!("heuristic-extremes: alpha={} reps={} seed={}", s.alpha, s.reps, s.seed);
            match format {
                Format::Csv => write_csv(&mut out, &RATE_HEADER, &rate_cells(&rows)),
                Format::Json => write_json(&mut out, &rows),
            }
        }
        Study::MonotonicAudit => {
            let rule: RejectionRule = match s.test {
                TestName::Fractal => RejectionRule::Fractal {
                    bins: QuantileBins::new(s.alpha)?,
                },
                other => rejection_rule(cal, other, s.alpha, s.cov.rho)?,
            };
            let report = monotonic_region_audit(&rule, a.audit_step, a.extent)?;
            eprintln!(
                "monotonic-audit: test={} rejected={} violations={}",
                s.test, report.rejected_points, report.violations
            );
            write_json(&mut out, &json!({"test": s.test, "alpha": s.alpha, "rho": s.cov.rho.value(), "report": report}))
        }
        Study::FeasibleSweep => {
            let schedule = s.n_schedule.clone().unwrap_or_else(|| vec![100, 1000, 10_000]);
            let mut rows = Vec::new();
            for &mean in &s.mu_grid {
                rows.extend(feasible_size_sweep(cal, &schedule, &SampleMeanDgp { mean, cov: s.cov }, s.alpha, s.reps, s.seed)?);
            }
            eprintln!("feasible-sweep: rho={} alpha={} reps={} seed={}", s.cov.rho.value(), s.alpha, s.reps, s.seed);
            match format {
                Format::Csv => {
                    let cells: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.n.to_string(),
                                fmt_num(r.mu1),
                                fmt_num(r.mu2),
                                fmt_num(s.cov.rho.value()),
                                fmt_num(r.rate),
                                fmt_num(r.se),
                                r.reps.to_string(),
                                r.seed.to_string(),
                            ]
                        })
                        .collect();
                    write_csv(&mut out, &["n", "mu1", "mu2", "rho", "rate", "se", "reps", "seed"], &cells)
                }
                Format::Json => write_json(&mut out, &rows),
            }
        }
    }
}

fn cmd_delta(a: DeltaArgs) -> Result<(), CliError> {
    let cov = Covariance2::new(a.sigma1, a.sigma2, Correlation::new(a.rho)?)?;
    let demo = delta_demo((a.mu1, a.mu2), &cov, a.reps, a.bins, a.seed)?;
    eprintln!(
        "delta-demo: ks_distance={} delta_mean={} delta_sd={} share_positive={} reps={} seed={}",
        fmt_num(demo.ks_distance),
        fmt_num(demo.delta_mean),
        fmt_num(demo.delta_sd),
        fmt_num(demo.share_positive),
        demo.reps,
        demo.seed
    );
    let mut out = open_out(a.out.as_deref())?;
    match a.format {
        Format::Json => write_json(&mut out, &demo),
        Format::Csv => {
            let cells: Vec<Vec<String>> = demo
                .bins
                .iter()
                .map(|b| {
                    vec![
                        fmt_num(b.lower),
                        fmt_num(b.upper),
                        fmt_num(b.empirical_density),
                        fmt_num(b.delta_density),
                        demo.seed.to_string(),
                    ]
                })
                .collect();
            write_csv(&mut out, &["lower", "upper", "empirical_density", "delta_density", "seed"], &cells)
        }
    }
}
