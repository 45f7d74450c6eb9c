//! Critical values `c_α(ρ)` of the recommended test.
//!
//! `c_α(ρ)` is the threshold at which the largest rejection probability over
//! the null boundary `{(0, μ₂) : μ₂ ≥ 0}` equals α. The supremum is taken over
//! a fine μ₂ grid together with the analytic μ₂ → ∞ limit `1 − Φ(c)`, and the
//! equation is solved by bisection between the one-sided quantile
//! `Φ⁻¹(1 − α)` (exact for ρ ≥ 0) and the two-sided quantile `Φ⁻¹(1 − α/2)`
//! (the ρ → −1 limit).

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::normal::{cdf, quantile, Correlation};
use crate::regions::RejectProbKernel;

/// Tolerance on the size at the bracket ends before a straddle is declared
/// missing. The size is flat to about this level near the one-sided end.
const STRADDLE_TOL: f64 = 1e-12;

/// Grid size at which the μ₂ grid is evaluated in parallel.
const PAR_GRID_MIN: usize = 4096;

/// Numerical settings for the boundary supremum and the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Spacing of the μ₂ grid.
    pub grid_step: f64,
    /// Upper end of the μ₂ grid.
    pub grid_max: f64,
    /// Grid end used instead when the maximizer lands within 5% of `grid_max`.
    pub extended_grid_max: f64,
    pub bisection_steps: u32,
    /// Lower bisection end; `Φ⁻¹(1 − α)` when unset.
    pub bracket_low: Option<f64>,
    /// Upper bisection end; `Φ⁻¹(1 − α/2)` when unset.
    pub bracket_high: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            grid_step: 0.001,
            grid_max: 20.0,
            extended_grid_max: 30.0,
            bisection_steps: 60,
            bracket_low: None,
            bracket_high: None,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid_step must be positive, got {}", self.grid_step)));
        }
        if !(self.grid_max >= 10.0 && self.grid_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid_max must be at least 10, got {}", self.grid_max)));
        }
        if !(self.extended_grid_max >= self.grid_max && self.extended_grid_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "extended_grid_max ({}) must be finite and at least grid_max ({})",
                self.extended_grid_max, self.grid_max
            )));
        }
        if self.grid_max / self.grid_step > 1e8 || self.extended_grid_max / self.grid_step > 1e8 {
            return Err(Error::InvalidArgument("grid has more than 1e8 points".into()));
        }
        if self.bisection_steps < 30 {
            return Err(Error::InvalidArgument(format!(
                "bisection_steps must be at least 30, got {}",
                self.bisection_steps
            )));
        }
        if let (Some(lo), Some(hi)) = (self.bracket_low, self.bracket_high) {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidArgument(format!("bracket_low ({lo}) must be below bracket_high ({hi})")));
            }
        }
        Ok(())
    }

    fn bracket(&self, alpha: f64) -> Result<(f64, f64)> {
        let lo = self.bracket_low.unwrap_or_else(|| quantile(1.0 - alpha));
        let hi = self.bracket_high.unwrap_or_else(|| quantile(1.0 - alpha / 2.0));
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid bisection bracket [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

/// Largest boundary rejection probability and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupRejection {
    pub sup: f64,
    /// Maximizing μ₂; `f64::INFINITY` when the μ₂ → ∞ limit is the largest.
    pub argmax: f64,
}

/// `sup_{μ₂ ≥ 0} P(reject at (0, μ₂))` for unit scales, correlation `rho` and
/// threshold `c`.
pub fn boundary_sup_rejection(c: f64, rho: Correlation, config: &CalibrationConfig) -> Result<SupRejection> {
    config.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("critical value must be positive and finite, got {c}")));
    }
    Ok(sup_rejection(&RejectProbKernel::new(rho), c, config))
}

fn grid_max_on(kernel: &RejectProbKernel, c: f64, step: f64, upto: f64) -> (f64, f64) {
    let n = (upto / step).round() as usize;
    let eval = |i: usize| kernel.at(0.0, i as f64 * step, c);
    let values: Vec<f64> = if n + 1 >= PAR_GRID_MIN {
        (0..=n).into_par_iter().map(eval).collect()
    } else {
        (0..=n).map(eval).collect()
    };
    // Sequential scan: first maximizer wins, independent of scheduling.
    let mut best = (values[0], 0.0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i as f64 * step);
        }
    }
    best
}

fn sup_rejection(kernel: &RejectProbKernel, c: f64, config: &CalibrationConfig) -> SupRejection {
    let mut best = grid_max_on(kernel, c, config.grid_step, config.grid_max);
    if best.1 >= 0.95 * config.grid_max && config.extended_grid_max > config.grid_max {
        best = grid_max_on(kernel, c, config.grid_step, config.extended_grid_max);
    }
    let limit = cdf(-c);
    if limit >= best.0 {
        SupRejection {
            sup: limit,
            argmax: f64::INFINITY,
        }
    } else {
        SupRejection {
            sup: best.0,
            argmax: best.1,
        }
    }
}

/// One calibrated critical value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValueEntry {
    pub alpha: f64,
    pub rho: f64,
    pub c: f64,
    /// Maximizing μ₂ on the null boundary; infinite when the supremum is the
    /// μ₂ → ∞ limit.
    #[serde(serialize_with = "ser_extended_real")]
    pub argmax_mu2: f64,
    /// Boundary supremum of the rejection probability at `c`.
    pub achieved_size: f64,
    /// `c` coincides with `Φ⁻¹(1 − α)` to 15 decimals.
    pub one_sided_flag: bool,
}

fn ser_extended_real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// Calibrate `c_α(ρ)`. ρ ≥ 0 returns the one-sided quantile directly.
pub fn critical_value(alpha: f64, rho: Correlation, config: &CalibrationConfig) -> Result<CriticalValueEntry> {
    check_alpha(alpha)?;
    config.validate()?;
    let one_sided = quantile(1.0 - alpha);
    let r = rho.value();
    if r >= 0.0 {
        return Ok(CriticalValueEntry {
            alpha,
            rho: r,
            c: one_sided,
            argmax_mu2: f64::INFINITY,
            achieved_size: cdf(-one_sided),
            one_sided_flag: true,
        });
    }

    let kernel = RejectProbKernel::new(rho);
    let size = |c: f64| sup_rejection(&kernel, c, config).sup;
    let (mut lo, mut hi) = config.bracket(alpha)?;
    let (size_lo, size_hi) = (size(lo), size(hi));
    if size_lo < alpha - STRADDLE_TOL || size_hi > alpha + STRADDLE_TOL {
        return Err(Error::Calibration {
            alpha,
            rho: r,
            bracket_low: lo,
            bracket_high: hi,
            size_low: size_lo,
            size_high: size_hi,
        });
    }
    // The size is decreasing in c.
    for _ in 0..config.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if size(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let at = sup_rejection(&kernel, c, config);
    Ok(CriticalValueEntry {
        alpha,
        rho: r,
        c,
        argmax_mu2: at.argmax,
        achieved_size: at.sup,
        one_sided_flag: (c - one_sided).abs() <= 1e-15,
    })
}

/// `p`-value of the recommended test given `min(|t₁|, |t₂|)` with disagreeing
/// signs: the smallest α at which the test rejects.
///
/// Since the boundary supremum is strictly decreasing in the threshold, the
/// smallest such α is the supremum evaluated at `min_t` itself. Values are
/// capped at 0.5, the edge of the admissible α range.
pub fn pvalue_from_min_stat(min_t: f64, rho: Correlation, config: &CalibrationConfig) -> Result<f64> {
    if min_t.is_nan() || min_t < 0.0 {
        return Err(Error::Domain(format!("min statistic must be nonnegative, got {min_t}")));
    }
    config.validate()?;
    if rho.value() >= 0.0 || min_t == 0.0 {
        return Ok(cdf(-min_t));
    }
    if min_t == f64::INFINITY {
        return Ok(0.0);
    }
    let sup = sup_rejection(&RejectProbKernel::new(rho), min_t, config).sup;
    Ok(sup.min(0.5))
}

/// One cell of a critical-value table.
#[derive(Debug)]
pub struct TableCell {
    pub alpha: f64,
    pub rho: f64,
    pub result: Result<CriticalValueEntry>,
}

/// Calibrate every `(α, ρ)` pair, rows ordered by ρ then α. Failed cells are
/// kept in place with their error.
pub fn emit_critical_table(alphas: &[f64], rhos: &[Correlation], config: &CalibrationConfig) -> Result<Vec<TableCell>> {
    if alphas.is_empty() || rhos.is_empty() {
        return Err(Error::InvalidArgument("critical table needs at least one alpha and one rho".into()));
    }
    config.validate()?;
    let pairs: Vec<(f64, Correlation)> = rhos
        .iter()
        .flat_map(|&r| alphas.iter().map(move |&a| (a, r)))
        .collect();
    Ok(pairs
        .into_par_iter()
        .map(|(alpha, rho)| TableCell {
            alpha,
            rho: rho.value(),
            result: critical_value(alpha, rho, config),
        })
        .collect())
}

/// Write a table as CSV with header
/// `alpha,rho,c,argmax_mu2,achieved_size,one_sided_flag,error`.
pub fn write_table_csv<W: std::io::Write>(cells: &[TableCell], out: W, fmt: impl Fn(f64) -> String) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: "<table output>".into(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| io(std::io::Error::other(e));
    w.write_record(["alpha", "rho", "c", "argmax_mu2", "achieved_size", "one_sided_flag", "error"])
        .map_err(csv_err)?;
    for cell in cells {
        let row = match &cell.result {
            Ok(e) => [
                fmt(e.alpha),
                fmt(e.rho),
                fmt(e.c),
                if e.argmax_mu2.is_finite() { fmt(e.argmax_mu2) } else { "inf".into() },
                fmt(e.achieved_size),
                e.one_sided_flag.to_string(),
                String::new(),
            ],
            Err(err) => [
                fmt(cell.alpha),
                fmt(cell.rho),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                err.to_string(),
            ],
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Memoizing front end to [`critical_value`] for one configuration.
///
/// Lookups take a read lock; a miss calibrates outside any lock and inserts
/// if absent, so concurrent callers agree on the stored entry.
#[derive(Debug, Default)]
pub struct Calibrator {
    config: CalibrationConfig,
    cache: RwLock<HashMap<(u64, u64), CriticalValueEntry>>,
}

impl Calibrator {
    pub fn new(config: CalibrationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Calibrator {
            config,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Process-wide calibrator with the default configuration.
    pub fn shared() -> &'static Calibrator {
        static SHARED: OnceLock<Calibrator> = OnceLock::new();
        SHARED.get_or_init(Calibrator::default)
    }

    pub fn config(&self) -> &CalibrationConfig {
        &self.config
    }

    pub fn critical_value(&self, alpha: f64, rho: Correlation) -> Result<CriticalValueEntry> {
        // -0.0 and 0.0 are the same correlation.
        let key = (alpha.to_bits(), (rho.value() + 0.0).to_bits());
        if let Some(hit) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let entry = critical_value(alpha, rho, &self.config)?;
        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        Ok(cache.entry(key).or_insert(entry).clone())
    }

    pub fn pvalue_from_min_stat(&self, min_t: f64, rho: Correlation) -> Result<f64> {
        pvalue_from_min_stat(min_t, rho, &self.config)
    }
}
