use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use signcong::calibration::Calibrator;
use signcong::normal::{Correlation, Covariance2};
use signcong::procedures::{run_test, EstimatePair, NullDirection, TestName, TestOutcome};
use signcong::Error;

use crate::output::fmt_num;
use crate::CliError;

/// One input row: `mu1,mu2,sigma1,sigma2,rho`, optionally `n`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    #[serde(default)]
    pub n: Option<u64>,
}

impl InputRecord {
    /// With `n`, `sigma1`/`sigma2` are per-observation scales: the feasible
    /// test uses them as estimated scales and the other tests as known
    /// standard errors `σⱼ/√n`.
    pub fn estimate(&self, test: TestName) -> signcong::Result<EstimatePair> {
        let rho = Correlation::new(self.rho)?;
        match (test, self.n) {
            (TestName::Feasible, Some(n)) => {
                EstimatePair::estimated(self.mu1, self.mu2, Covariance2::new(self.sigma1, self.sigma2, rho)?, n)
            }
            (TestName::Feasible, None) => Err(Error::InvalidArgument("the feasible test needs the sample size n".into())),
            (_, Some(0)) => Err(Error::InvalidArgument("sample size n must be positive".into())),
            (_, Some(n)) => {
                let root = (n as f64).sqrt();
                EstimatePair::known(self.mu1, self.mu2, Covariance2::new(self.sigma1 / root, self.sigma2 / root, rho)?)
            }
            (_, None) => EstimatePair::known(self.mu1, self.mu2, Covariance2::new(self.sigma1, self.sigma2, rho)?),
        }
    }
}

/// Short machine-readable tag for a per-row failure.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidCorrelation(_) => "invalid_correlation",
        Error::Domain(_) => "domain",
        Error::Calibration { .. } => "calibration",
        Error::DegenerateCone { .. } => "degenerate_cone",
        Error::UndefinedCorrelation(_) => "undefined_correlation",
        Error::Unsupported(_) => "unsupported",
        Error::Parse { .. } => "parse",
        Error::TooFewReplicates { .. } => "too_few_replicates",
        Error::Io { .. } => "io",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => InputFormat::Json,
            _ => InputFormat::Csv,
        }
    }
}

/// Parse every row; a row that does not parse becomes an error in place.
pub fn read_records(path: &Path, format: InputFormat) -> Result<Vec<Result<InputRecord, Error>>, CliError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    match format {
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
            let headers = rdr
                .headers()
                .map_err(|e| CliError::Input(format!("cannot read header of {}: {e}", path.display())))?
                .clone();
            Ok(rdr
                .records()
                .enumerate()
                .map(|(i, rec)| {
                    let line = rec.as_ref().ok().and_then(|r| r.position()).map_or(i as u64 + 2, |p| p.line());
                    rec.and_then(|r| r.deserialize::<InputRecord>(Some(&headers)))
                        .map_err(|e| parse_err(line, e.to_string()))
                })
                .collect())
        }
        InputFormat::Json => {
            if text.trim().is_empty() {
                return Ok(Vec::new());
            }
            let rows: Vec<serde_json::Value> = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{} is not a JSON array of records: {e}", path.display())))?;
            Ok(rows
                .into_iter()
                .enumerate()
                .map(|(i, v)| serde_json::from_value(v).map_err(|e| parse_err(i as u64 + 1, e.to_string())))
                .collect())
        }
    }
}

/// Output record of the batch mode.
#[derive(Debug, Clone, Serialize)]
pub struct BatchRow {
    pub test: TestName,
    pub reject: Option<bool>,
    pub p_value: Option<f64>,
    pub critical_value: Option<f64>,
    pub alpha: f64,
    pub direction: NullDirection,
    pub min_stat: Option<f64>,
    pub error: Option<&'static str>,
}

impl BatchRow {
    fn from_outcome(o: &TestOutcome) -> Self {
        BatchRow {
            test: o.test,
            reject: Some(o.reject),
            p_value: o.p_value,
            critical_value: o.critical_value,
            alpha: o.alpha,
            direction: o.direction,
            min_stat: Some(o.min_stat),
            error: None,
        }
    }

    pub fn csv_cells(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
        vec![
            self.test.to_string(),
            self.reject.map(|r| r.to_string()).unwrap_or_default(),
            opt(self.p_value),
            opt(self.critical_value),
            fmt_num(self.alpha),
            self.direction.to_string(),
            opt(self.min_stat),
            self.error.unwrap_or_default().to_string(),
        ]
    }
}

pub const BATCH_HEADER: [&str; 8] = ["test", "reject", "p_value", "critical_value", "alpha", "direction", "min_stat", "error"];

/// Run every record in parallel; output order follows input order. Failures
/// are returned alongside their row index for reporting.
pub fn run_batch(
    cal: &Calibrator,
    records: &[Result<InputRecord, Error>],
    test: TestName,
    alpha: f64,
    dir: NullDirection,
) -> Vec<(BatchRow, Option<String>)> {
    records
        .par_iter()
        .map(|rec| {
            let outcome = match rec {
                Ok(r) => r.estimate(test).and_then(|est| run_test(cal, test, &est, alpha, dir)),
                Err(e) => Err(clone_parse(e)),
            };
            match outcome {
                Ok(o) => (BatchRow::from_outcome(&o), None),
                Err(e) => (
                    BatchRow {
                        test,
                        reject: None,
                        p_value: None,
                        critical_value: None,
                        alpha,
                        direction: dir,
                        min_stat: None,
                        error: Some(error_code(&e)),
                    },
                    Some(e.to_string()),
                ),
            }
        })
        .collect()
}

// `Error` is not `Clone` (it can hold an io::Error); parse errors are rebuilt.
fn clone_parse(e: &Error) -> Error {
    match e {
        Error::Parse { path, line, message } => Error::Parse {
            path: path.clone(),
            line: *line,
            message: message.clone(),
        },
        other => Error::InvalidArgument(other.to_string()),
    }
}
