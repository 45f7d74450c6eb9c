//! Test procedures: decisions and p-values from estimates.
//!
//! Every procedure tests `H₀: μ₁μ₂ ≥ 0` ([`NullDirection::Congruent`]) or
//! `H₀: μ₁μ₂ ≤ 0` ([`NullDirection::Incongruent`]). The second is reduced to
//! the first by negating μ̂₂ and the correlation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::Calibrator;
use crate::error::{Error, Result};
use crate::normal::{cdf, quantile, Correlation, Covariance2};
use crate::regions::{fractal_region_contains, heuristic_pvalue, QuantileBins, StandardizedPoint};

/// Observed estimates with their scales and correlation.
///
/// When `scales_estimated` is set, `sigma1`, `sigma2` are the per-observation
/// scales `σ̂ⱼ` and the standard errors are `σ̂ⱼ/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatePair {
    pub mu1_hat: f64,
    pub mu2_hat: f64,
    pub cov: Covariance2,
    pub n: Option<u64>,
    pub scales_estimated: bool,
}

impl EstimatePair {
    /// Estimates with known standard errors.
    pub fn known(mu1_hat: f64, mu2_hat: f64, cov: Covariance2) -> Result<Self> {
        let est = EstimatePair {
            mu1_hat,
            mu2_hat,
            cov,
            n: None,
            scales_estimated: false,
        };
        est.validate()?;
        Ok(est)
    }

    /// Estimates whose scales and correlation were estimated from `n`
    /// observations.
    pub fn estimated(mu1_hat: f64, mu2_hat: f64, cov: Covariance2, n: u64) -> Result<Self> {
        let est = EstimatePair {
            mu1_hat,
            mu2_hat,
            cov,
            n: Some(n),
            scales_estimated: true,
        };
        est.validate()?;
        Ok(est)
    }

    /// Unit-scale estimates recovered from two-sided p-values and signs, as
    /// printed in regression tables: `|tⱼ| = Φ⁻¹(1 − pⱼ/2)`.
    pub fn from_two_sided_pvalues(p1: f64, p2: f64, positive1: bool, positive2: bool, rho: Correlation) -> Result<Self> {
        let t = |p: f64, positive: bool| -> Result<f64> {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Domain(format!("two-sided p-value must lie in (0, 1], got {p}")));
            }
            let mag = if p == 1.0 { 0.0 } else { quantile(1.0 - p / 2.0) };
            Ok(if positive { mag } else { -mag })
        };
        EstimatePair::known(t(p1, positive1)?, t(p2, positive2)?, Covariance2::unit(rho))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1_hat.is_finite() && self.mu2_hat.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "estimates must be finite, got ({}, {})",
                self.mu1_hat, self.mu2_hat
            )));
        }
        Covariance2::new(self.cov.sigma1, self.cov.sigma2, self.cov.rho)?;
        match (self.scales_estimated, self.n) {
            (true, None) => Err(Error::InvalidArgument(
                "estimated scales need the sample size n".into(),
            )),
            (_, Some(0)) => Err(Error::InvalidArgument("sample size n must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Standardized statistics, including the `√n` factor for estimated scales.
    pub fn standardized(&self) -> StandardizedPoint {
        let root_n = self.n.filter(|_| self.scales_estimated).map_or(1.0, |n| (n as f64).sqrt());
        StandardizedPoint {
            t1: root_n * self.mu1_hat / self.cov.sigma1,
            t2: root_n * self.mu2_hat / self.cov.sigma2,
        }
    }
}

/// Which product sign the null hypothesis allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NullDirection {
    /// `H₀: μ₁μ₂ ≥ 0`; rejection means the signs differ.
    #[default]
    Congruent,
    /// `H₀: μ₁μ₂ ≤ 0`; rejection means the signs agree.
    Incongruent,
}

impl NullDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            NullDirection::Congruent => "congruent",
            NullDirection::Incongruent => "incongruent",
        }
    }
}

impl fmt::Display for NullDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NullDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "congruent" => Ok(NullDirection::Congruent),
            "incongruent" => Ok(NullDirection::Incongruent),
            _ => Err(Error::InvalidArgument(format!(
                "unknown null direction {s:?} (expected congruent or incongruent)"
            ))),
        }
    }
}

/// The available procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestName {
    Recommended,
    Feasible,
    Bmw,
    Heuristic,
    Fractal,
}

impl TestName {
    pub const ALL: [TestName; 5] = [
        TestName::Recommended,
        TestName::Feasible,
        TestName::Bmw,
        TestName::Heuristic,
        TestName::Fractal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestName::Recommended => "recommended",
            TestName::Feasible => "feasible",
            TestName::Bmw => "bmw",
            TestName::Heuristic => "heuristic",
            TestName::Fractal => "fractal",
        }
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown test {s:?} (expected recommended, feasible, bmw, heuristic or fractal)"
                ))
            })
    }
}

/// Result of one test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub test: TestName,
    pub reject: bool,
    /// Not defined for the fractal test.
    pub p_value: Option<f64>,
    /// Threshold on `min_stat`; not defined for the heuristic and fractal tests.
    pub critical_value: Option<f64>,
    pub alpha: f64,
    pub direction: NullDirection,
    pub min_stat: f64,
    pub diagnostics: BTreeMap<String, String>,
}

/// Statistics oriented so that rejection always means "signs disagree".
struct Oriented {
    t: StandardizedPoint,
    rho: Correlation,
}

fn orient(est: &EstimatePair, dir: NullDirection) -> Oriented {
    let t = est.standardized();
    match dir {
        NullDirection::Congruent => Oriented { t, rho: est.cov.rho },
        NullDirection::Incongruent => Oriented {
            t: StandardizedPoint { t1: t.t1, t2: -t.t2 },
            rho: est.cov.rho.flipped(),
        },
    }
}

fn check_alpha(alpha: f64, upper: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::Domain(format!("alpha must lie in (0, {upper}), got {alpha}")));
    }
    Ok(())
}

fn note(map: &mut BTreeMap<String, String>, key: &str, value: impl Into<String>) {
    map.insert(key.to_string(), value.into());
}

const BOUNDARY_NOTE: &str = "reject iff signs disagree and min_stat >= critical_value";

/// The recommended test with known scales, using the shared calibrator.
pub fn recommended_test(est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    recommended_test_with(Calibrator::shared(), est, alpha, dir)
}

pub fn recommended_test_with(cal: &Calibrator, est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    est.validate()?;
    if est.scales_estimated {
        return Err(Error::InvalidArgument(
            "scales are estimated; use the feasible test instead".into(),
        ));
    }
    calibrated(cal, est, alpha, dir, TestName::Recommended)
}

/// The recommended test with estimated scales and correlation: the threshold
/// is calibrated at the estimated ρ̂ and applied to `√n·min|μ̂ⱼ|/σ̂ⱼ`.
pub fn feasible_test(est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    feasible_test_with(Calibrator::shared(), est, alpha, dir)
}

pub fn feasible_test_with(cal: &Calibrator, est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    est.validate()?;
    if !est.scales_estimated || est.n.is_none() {
        return Err(Error::InvalidArgument(
            "the feasible test needs estimated scales and a sample size n".into(),
        ));
    }
    calibrated(cal, est, alpha, dir, TestName::Feasible)
}

fn calibrated(cal: &Calibrator, est: &EstimatePair, alpha: f64, dir: NullDirection, test: TestName) -> Result<TestOutcome> {
    check_alpha(alpha, 0.5)?;
    let o = orient(est, dir);
    let entry = cal.critical_value(alpha, o.rho)?;
    let min_stat = o.t.min_abs();
    let disagree = o.t.signs_disagree();
    let p_value = if disagree {
        cal.pvalue_from_min_stat(min_stat, o.rho)?
    } else {
        1.0
    };
    let mut diagnostics = BTreeMap::new();
    note(&mut diagnostics, "boundary", BOUNDARY_NOTE);
    note(&mut diagnostics, "rho_tested", o.rho.value().to_string());
    if entry.one_sided_flag {
        note(&mut diagnostics, "critical_value_kind", "one-sided quantile");
    }
    Ok(TestOutcome {
        test,
        reject: disagree && min_stat >= entry.c,
        p_value: Some(p_value),
        critical_value: Some(entry.c),
        alpha,
        direction: dir,
        min_stat,
        diagnostics,
    })
}

/// Bonferroni-adjusted test: threshold `Φ⁻¹(1 − α/2)`, p-value
/// `2(1 − Φ(min_stat))` capped at 1.
pub fn bmw_test(est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    est.validate()?;
    check_alpha(alpha, 1.0)?;
    let o = orient(est, dir);
    let c = quantile(1.0 - alpha / 2.0);
    let min_stat = o.t.min_abs();
    let disagree = o.t.signs_disagree();
    let p_value = if disagree { (2.0 * cdf(-min_stat)).min(1.0) } else { 1.0 };
    let mut diagnostics = BTreeMap::new();
    note(&mut diagnostics, "boundary", BOUNDARY_NOTE);
    Ok(TestOutcome {
        test: TestName::Bmw,
        reject: disagree && min_stat >= c,
        p_value: Some(p_value),
        critical_value: Some(c),
        alpha,
        direction: dir,
        min_stat,
        diagnostics,
    })
}

/// The bootstrap rule "reject when the bootstrap probability of a
/// null-consistent product sign is below α", in its exact-bootstrap form.
/// Valid when ρ = 0 only.
pub fn heuristic_bootstrap_test(est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    est.validate()?;
    check_alpha(alpha, 1.0)?;
    let o = orient(est, dir);
    let p = heuristic_pvalue(o.t, o.rho);
    let mut diagnostics = BTreeMap::new();
    note(&mut diagnostics, "rho_tested", o.rho.value().to_string());
    if o.rho.value() != 0.0 {
        note(
            &mut diagnostics,
            "warning",
            "heuristic bootstrap test is not valid when rho != 0; its size can be anywhere in (0, 1)",
        );
    }
    Ok(TestOutcome {
        test: TestName::Heuristic,
        reject: p < alpha,
        p_value: Some(p),
        critical_value: None,
        alpha,
        direction: dir,
        min_stat: o.t.min_abs(),
        diagnostics,
    })
}

/// The similar, nonmonotone test pairing equal-mass quantile bins. Requires
/// ρ = 0 and `0.5/α` integer. No p-value is defined.
pub fn fractal_test(est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    est.validate()?;
    if est.cov.rho.value() != 0.0 {
        return Err(Error::Unsupported(format!(
            "the fractal test is only defined for rho = 0 (its similarity rests on independence), got rho={}",
            est.cov.rho.value()
        )));
    }
    let bins = QuantileBins::new(alpha)?;
    let o = orient(est, dir);
    let mut diagnostics = BTreeMap::new();
    note(&mut diagnostics, "p_value", "not defined for the fractal test");
    note(
        &mut diagnostics,
        "bins",
        format!("|t1| and |t2| in the same bin of {} equal-mass bins", bins.cut_points().len()),
    );
    Ok(TestOutcome {
        test: TestName::Fractal,
        reject: fractal_region_contains(o.t, &bins),
        p_value: None,
        critical_value: None,
        alpha,
        direction: dir,
        min_stat: o.t.min_abs(),
        diagnostics,
    })
}

/// Dispatch by name. `Recommended` and `Feasible` use `cal`.
pub fn run_test(cal: &Calibrator, test: TestName, est: &EstimatePair, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    match test {
        TestName::Recommended => recommended_test_with(cal, est, alpha, dir),
        TestName::Feasible => feasible_test_with(cal, est, alpha, dir),
        TestName::Bmw => bmw_test(est, alpha, dir),
        TestName::Heuristic => heuristic_bootstrap_test(est, alpha, dir),
        TestName::Fractal => fractal_test(est, alpha, dir),
    }
}
