//! Correlation between two estimators from bootstrap replicate pairs.
//!
//! Heavy-tailed replicates (common with 2SLS and few clusters) make the plain
//! sample correlation unstable, so the largest-norm fraction of centered
//! replicates is neutralized first: set to zero by default, or dropped.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::Correlation;

/// Minimum number of replicates accepted in a [`ReplicateSet`].
pub const MIN_REPLICATES: usize = 10;

/// Bootstrap replicate pairs plus the fraction to trim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSet {
    pairs: Vec<(f64, f64)>,
    trim_frac: f64,
}

impl ReplicateSet {
    pub const DEFAULT_TRIM: f64 = 0.01;

    pub fn new(pairs: Vec<(f64, f64)>, trim_frac: f64) -> Result<Self> {
        if pairs.len() < MIN_REPLICATES {
            return Err(Error::TooFewReplicates {
                got: pairs.len(),
                need: MIN_REPLICATES,
            });
        }
        check_trim(trim_frac)?;
        if let Some(i) = pairs.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::InvalidArgument(format!("replicate {} is not finite", i + 1)));
        }
        Ok(ReplicateSet { pairs, trim_frac })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn trim_frac(&self) -> f64 {
        self.trim_frac
    }

    pub fn with_trim_frac(self, trim_frac: f64) -> Result<Self> {
        check_trim(trim_frac)?;
        Ok(ReplicateSet { trim_frac, ..self })
    }
}

fn check_trim(trim_frac: f64) -> Result<()> {
    if !(0.0..0.5).contains(&trim_frac) {
        return Err(Error::Domain(format!("trim fraction must lie in [0, 0.5), got {trim_frac}")));
    }
    Ok(())
}

/// What happens to the trimmed replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimMode {
    /// Replace the centered replicate by `(0, 0)` and keep it in the sample.
    #[default]
    Zero,
    /// Remove the replicate.
    Drop,
}

/// Options for [`trimmed_bootstrap_correlation_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrimOptions {
    pub mode: TrimMode,
    /// Centering point, typically the full-sample estimate. Defaults to the
    /// replicates' own mean.
    pub center: Option<(f64, f64)>,
}

/// Number of replicates trimmed from `b` at fraction `trim_frac`:
/// `⌈trim_frac · b⌉`, ignoring rounding noise in the product.
pub fn trim_count(b: usize, trim_frac: f64) -> usize {
    let raw = trim_frac * b as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil();
    (k.max(0.0) as usize).min(b)
}

/// Trimmed correlation with the default options (zeroing, own-mean centering).
pub fn trimmed_bootstrap_correlation(reps: &ReplicateSet) -> Result<Correlation> {
    trimmed_bootstrap_correlation_with(reps, TrimOptions::default())
}

pub fn trimmed_bootstrap_correlation_with(reps: &ReplicateSet, opts: TrimOptions) -> Result<Correlation> {
    trimmed_correlation(&reps.pairs, reps.trim_frac, opts)
}

/// The estimator on a raw slice, without the minimum-size rule of
/// [`ReplicateSet`].
///
/// Replicates are centered, the `⌈trim_frac·B⌉` with the largest Euclidean
/// norm are zeroed or dropped (ties go to the earlier replicate), and the
/// Pearson correlation of what remains is returned.
pub fn trimmed_correlation(pairs: &[(f64, f64)], trim_frac: f64, opts: TrimOptions) -> Result<Correlation> {
    check_trim(trim_frac)?;
    if pairs.is_empty() {
        return Err(Error::UndefinedCorrelation("no replicates".into()));
    }
    let center = opts.center.unwrap_or_else(|| mean(pairs.iter().copied()));
    let mut centered: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a - center.0, b - center.1)).collect();

    let k = trim_count(centered.len(), trim_frac);
    let mut order: Vec<usize> = (0..centered.len()).collect();
    let norm = |p: (f64, f64)| p.0.hypot(p.1);
    // Stable: equal norms keep input order, so earlier replicates go first.
    order.sort_by(|&i, &j| norm(centered[j]).total_cmp(&norm(centered[i])));
    let mut trimmed = vec![false; centered.len()];
    for &i in &order[..k] {
        trimmed[i] = true;
    }
    let kept: Vec<(f64, f64)> = match opts.mode {
        TrimMode::Zero => {
            for (p, &t) in centered.iter_mut().zip(&trimmed) {
                if t {
                    *p = (0.0, 0.0);
                }
            }
            centered
        }
        TrimMode::Drop => centered
            .into_iter()
            .zip(&trimmed)
            .filter(|(_, &t)| !t)
            .map(|(p, _)| p)
            .collect(),
    };
    pearson(&kept).map(|r| Correlation::new(r.clamp(-1.0, 1.0)).expect("clamped"))
}

fn mean(it: impl ExactSizeIterator<Item = (f64, f64)>) -> (f64, f64) {
    let n = it.len() as f64;
    let (s1, s2) = it.fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (s1 / n, s2 / n)
}

/// Two-pass Pearson correlation.
pub(crate) fn pearson(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} replicate(s) left", pairs.len())));
    }
    let m = mean(pairs.iter().copied());
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        let (da, db) = (a - m.0, b - m.1);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "a coordinate has zero variance after trimming".into(),
        ));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Input format of a replicate file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicateFormat {
    /// Two numeric columns; a header row is optional.
    Csv,
    /// An array of two-element arrays.
    Json,
}

impl ReplicateFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ReplicateFormat::Json,
            _ => ReplicateFormat::Csv,
        }
    }
}

/// Read replicate pairs from a file, with the default trim fraction.
pub fn load_replicates(path: &Path, format: ReplicateFormat) -> Result<ReplicateSet> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let pairs = read_replicates(BufReader::new(file), format, path)?;
    ReplicateSet::new(pairs, ReplicateSet::DEFAULT_TRIM)
}

/// Parse replicate pairs from a reader; `path` only labels errors.
pub fn read_replicates<R: Read>(reader: R, format: ReplicateFormat, path: &Path) -> Result<Vec<(f64, f64)>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    match format {
        ReplicateFormat::Json => {
            let rows: Vec<[f64; 2]> =
                serde_json::from_reader(reader).map_err(|e| parse_err(e.line() as u64, e.to_string()))?;
            Ok(rows.into_iter().map(|[a, b]| (a, b)).collect())
        }
        ReplicateFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let mut out = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line());
                    parse_err(line, e.to_string())
                })?;
                let line = rec.position().map_or(i as u64 + 1, |p| p.line());
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                if rec.len() != 2 {
                    return Err(parse_err(line, format!("expected 2 columns, found {}", rec.len())));
                }
                let parsed: (std::result::Result<f64, _>, std::result::Result<f64, _>) = (rec[0].parse(), rec[1].parse());
                match parsed {
                    (Ok(a), Ok(b)) => out.push((a, b)),
                    // A first row with no numbers is a header.
                    (Err(_), Err(_)) if out.is_empty() && i == 0 => {}
                    _ => {
                        return Err(parse_err(
                            line,
                            format!("non-numeric value in row {:?}", rec.iter().collect::<Vec<_>>()),
                        ))
                    }
                }
            }
            Ok(out)
        }
    }
}
