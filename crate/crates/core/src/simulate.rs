//! Monte Carlo size and power studies and region audits.
//!
//! Every randomized routine is keyed by a `seed`. Work is cut into fixed-size
//! chunks, chunk `i` draws from [`stream_rng`]`(seed, i)`, and per-chunk integer
//! counts are summed, so results are bit-identical for any thread count.
//! Different grid points reuse the same streams (common random numbers).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibrator;
use crate::error::{Error, Result};
use crate::normal::{cdf, quantile, stream_rng, Correlation, Covariance2, OrthantKernel, PairTransform, CHUNK};
use crate::procedures::TestName;
use crate::regions::{QuantileBins, RejectProbKernel, RejectionRule};

/// A Monte Carlo design for one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub test: TestName,
    pub mu_grid: Vec<(f64, f64)>,
    pub cov: Covariance2,
    pub alpha: f64,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub n_schedule: Option<Vec<u64>>,
}

/// A rejection frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub reps: u64,
}

impl RateEstimate {
    pub fn from_count(hits: u64, reps: u64) -> Self {
        let rate = hits as f64 / reps as f64;
        RateEstimate {
            rate,
            std_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
            reps,
        }
    }

    /// Binomial standard error at a hypothesized rate `p`.
    pub fn se_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

/// One output row of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub mu1: f64,
    pub mu2: f64,
    pub rho: f64,
    pub test: TestName,
    pub rate: f64,
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
}

/// The rejection rule of a known-scale test at `(α, ρ)`.
pub fn rejection_rule(cal: &Calibrator, test: TestName, alpha: f64, rho: Correlation) -> Result<RejectionRule> {
    match test {
        TestName::Recommended => Ok(RejectionRule::Recommended {
            c: cal.critical_value(alpha, rho)?.c,
        }),
        TestName::Bmw => {
            check_alpha(alpha)?;
            Ok(RejectionRule::Bmw {
                c: quantile(1.0 - alpha / 2.0),
            })
        }
        TestName::Heuristic => {
            check_alpha(alpha)?;
            Ok(RejectionRule::Heuristic {
                alpha,
                kernel: OrthantKernel::new(rho),
            })
        }
        TestName::Fractal => {
            if rho.value() != 0.0 {
                return Err(Error::Unsupported(format!(
                    "the fractal test is only defined for rho = 0, got {}",
                    rho.value()
                )));
            }
            Ok(RejectionRule::Fractal {
                bins: QuantileBins::new(alpha)?,
            })
        }
        TestName::Feasible => Err(Error::Unsupported(
            "the feasible test estimates its scales from raw data; use feasible_size_sweep".into(),
        )),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_reps(reps: u64) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    Ok(())
}

/// Count rejections of `rule` over `reps` draws of `μ̂ ~ N(mean, cov)`.
pub fn mc_count(rule: &RejectionRule, mean: (f64, f64), cov: &Covariance2, reps: u64, seed: u64) -> Result<u64> {
    let cov = Covariance2::new(cov.sigma1, cov.sigma2, cov.rho)?;
    check_reps(reps)?;
    let t = PairTransform::new(mean, &cov);
    let chunk = CHUNK as u64;
    let chunks = reps.div_ceil(chunk);
    Ok((0..chunks)
        .into_par_iter()
        .map(|i| {
            let len = chunk.min(reps - i * chunk);
            let mut rng = stream_rng(seed, i);
            let mut hits = 0u64;
            for _ in 0..len {
                let (a, b) = t.draw(&mut rng);
                if rule.rejects(a / cov.sigma1, b / cov.sigma2) {
                    hits += 1;
                }
            }
            hits
        })
        .sum())
}

/// Empirical rejection rate of the scenario's test at `point`.
pub fn mc_rejection_rate(scenario: &SimScenario, point: (f64, f64)) -> Result<RateEstimate> {
    mc_rejection_rate_with(Calibrator::shared(), scenario, point)
}

pub fn mc_rejection_rate_with(cal: &Calibrator, scenario: &SimScenario, point: (f64, f64)) -> Result<RateEstimate> {
    let rule = rejection_rule(cal, scenario.test, scenario.alpha, scenario.cov.rho)?;
    let hits = mc_count(&rule, point, &scenario.cov, scenario.reps, scenario.seed)?;
    Ok(RateEstimate::from_count(hits, scenario.reps))
}

/// Rates at every point of the scenario's grid, in grid order.
pub fn mc_rate_surface(cal: &Calibrator, scenario: &SimScenario) -> Result<Vec<RateRow>> {
    let rule = rejection_rule(cal, scenario.test, scenario.alpha, scenario.cov.rho)?;
    scenario
        .mu_grid
        .iter()
        .map(|&(mu1, mu2)| {
            let hits = mc_count(&rule, (mu1, mu2), &scenario.cov, scenario.reps, scenario.seed)?;
            let r = RateEstimate::from_count(hits, scenario.reps);
            Ok(RateRow {
                mu1,
                mu2,
                rho: scenario.cov.rho.value(),
                test: scenario.test,
                rate: r.rate,
                se: r.std_error,
                reps: r.reps,
                seed: scenario.seed,
            })
        })
        .collect()
}

/// Outcome of the nested-region check at ρ = 0, α = 0.05.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub points: usize,
    pub bmw_rejections: usize,
    pub heuristic_rejections: usize,
    pub recommended_rejections: usize,
    /// Points where a rejection by one test is not matched by the next.
    pub violations: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Check `BMW rejects ⇒ heuristic rejects ⇒ recommended rejects` at `count`
/// uniform points of `[−5, 5]²`, with ρ = 0 and α = 0.05.
pub fn verify_containment(count: usize, seed: u64) -> Result<ContainmentReport> {
    const ALPHA: f64 = 0.05;
    let rho = Correlation::ZERO;
    let bmw = RejectionRule::Bmw {
        c: quantile(1.0 - ALPHA / 2.0),
    };
    let heur = RejectionRule::Heuristic {
        alpha: ALPHA,
        kernel: OrthantKernel::new(rho),
    };
    let rec = RejectionRule::Recommended { c: quantile(1.0 - ALPHA) };
    let mut rng = stream_rng(seed, 0);
    let points: Vec<(f64, f64)> = (0..count)
        .map(|_| (rng.random_range(-5.0..=5.0), rng.random_range(-5.0..=5.0)))
        .collect();
    let mut report = ContainmentReport {
        points: count,
        bmw_rejections: 0,
        heuristic_rejections: 0,
        recommended_rejections: 0,
        violations: Vec::new(),
        seed,
    };
    for &(t1, t2) in &points {
        let (b, h, r) = (bmw.rejects(t1, t2), heur.rejects(t1, t2), rec.rejects(t1, t2));
        report.bmw_rejections += b as usize;
        report.heuristic_rejections += h as usize;
        report.recommended_rejections += r as usize;
        if (b && !h) || (h && !r) {
            report.violations.push((t1, t2));
        }
    }
    Ok(report)
}

/// Heuristic-test rejection rate at `(0, 0)` with unit scales, per ρ.
pub fn heuristic_size_extremes(rhos: &[Correlation], alpha: f64, reps: u64, seed: u64) -> Result<Vec<RateRow>> {
    rhos.iter()
        .map(|&rho| {
            let rule = RejectionRule::Heuristic {
                alpha,
                kernel: OrthantKernel::new(rho),
            };
            let hits = mc_count(&rule, (0.0, 0.0), &Covariance2::unit(rho), reps, seed)?;
            let r = RateEstimate::from_count(hits, reps);
            Ok(RateRow {
                mu1: 0.0,
                mu2: 0.0,
                rho: rho.value(),
                test: TestName::Heuristic,
                rate: r.rate,
                se: r.std_error,
                reps,
                seed,
            })
        })
        .collect()
}

/// Result of scanning a rejection region for monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub grid_points: usize,
    pub rejected_points: usize,
    pub violations: usize,
    /// Up to [`AuditReport::MAX_WITNESSES`] pairs (inside, outside) where a
    /// one-step move away from both axes leaves the region.
    pub witnesses: Vec<((f64, f64), (f64, f64))>,
}

impl AuditReport {
    pub const MAX_WITNESSES: usize = 20;
}

/// Scan `[−extent, extent]²` on a grid of spacing `grid_step`. For each
/// rejected point, every one-step increase of `|t₁|` or `|t₂|` that keeps its
/// sign must also be rejected; by induction this covers every grid increase.
pub fn monotonic_region_audit(rule: &RejectionRule, grid_step: f64, extent: f64) -> Result<AuditReport> {
    if !(grid_step > 0.0 && extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidArgument("grid_step and extent must be positive".into()));
    }
    let half = (extent / grid_step).round() as i64;
    if half > 20_000 {
        return Err(Error::InvalidArgument("audit grid is too fine for its extent".into()));
    }
    let side = (2 * half + 1) as usize;
    let coord = |i: i64| i as f64 * grid_step;
    // inside[row * side + col], row indexes t1.
    let inside: Vec<bool> = (0..side)
        .into_par_iter()
        .flat_map_iter(|row| {
            let t1 = coord(row as i64 - half);
            (0..side).map(move |col| rule.rejects(t1, coord(col as i64 - half)))
        })
        .collect();
    let at = |i: i64, j: i64| inside[((i + half) as usize) * side + (j + half) as usize];

    let mut report = AuditReport {
        grid_points: side * side,
        rejected_points: inside.iter().filter(|&&b| b).count(),
        violations: 0,
        witnesses: Vec::new(),
    };
    for i in -half..=half {
        for j in -half..=half {
            if !at(i, j) {
                continue;
            }
            let mut moves = Vec::with_capacity(2);
            if i != 0 && i.abs() < half {
                moves.push((i + i.signum(), j));
            }
            if j != 0 && j.abs() < half {
                moves.push((i, j + j.signum()));
            }
            for (ni, nj) in moves {
                if !at(ni, nj) {
                    report.violations += 1;
                    if report.witnesses.len() < AuditReport::MAX_WITNESSES {
                        report.witnesses.push(((coord(i), coord(j)), (coord(ni), coord(nj))));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Largest increase of the analytic rejection probability of the recommended
/// region along lines `μ = (a − λ, a + λ)` as `|a|` grows, over the given
/// slices. A value `≤ 0` means the probability never increased.
pub fn fixed_lambda_max_increase(rhos: &[Correlation], lambdas: &[f64], a_step: f64, a_max: f64, c: f64) -> Result<f64> {
    if !(a_step > 0.0 && a_max > 0.0 && c > 0.0) {
        return Err(Error::InvalidArgument("a_step, a_max and c must be positive".into()));
    }
    let steps = (a_max / a_step).round() as i64;
    let mut worst = f64::NEG_INFINITY;
    for &rho in rhos {
        let kernel = RejectProbKernel::new(rho);
        for &lambda in lambdas {
            for sign in [1.0, -1.0] {
                let mut prev = kernel.at(-lambda, lambda, c);
                for k in 1..=steps {
                    let a = sign * k as f64 * a_step;
                    let p = kernel.at(a - lambda, a + lambda, c);
                    worst = worst.max(p - prev);
                    prev = p;
                }
            }
        }
    }
    Ok(worst)
}

/// One histogram bin of the product of estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaBin {
    pub lower: f64,
    pub upper: f64,
    pub empirical_density: f64,
    pub delta_density: f64,
}

/// Simulated distribution of `μ̂₁μ̂₂` next to its delta-method normal
/// approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaDemo {
    pub bins: Vec<DeltaBin>,
    pub delta_mean: f64,
    pub delta_sd: f64,
    /// Kolmogorov–Smirnov distance between the simulated products and the
    /// delta-method normal.
    pub ks_distance: f64,
    /// Share of simulated products above zero.
    pub share_positive: f64,
    pub reps: u64,
    pub seed: u64,
}

/// Histogram (over the central 99.8% of draws) and KS distance for the
/// product of two normal estimates with mean `mu` and covariance `cov`.
pub fn delta_demo(mu: (f64, f64), cov: &Covariance2, reps: u64, bins: usize, seed: u64) -> Result<DeltaDemo> {
    let cov = Covariance2::new(cov.sigma1, cov.sigma2, cov.rho)?;
    check_reps(reps)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let draws = crate::normal::sample_bvn(mu, &cov, reps as usize, seed)?;
    let mut products: Vec<f64> = draws.iter().map(|&(a, b)| a * b).collect();
    products.sort_by(f64::total_cmp);

    let (m1, m2) = mu;
    let (s1, s2, r) = (cov.sigma1, cov.sigma2, cov.rho.value());
    let delta_mean = m1 * m2;
    let var = m2 * m2 * s1 * s1 + m1 * m1 * s2 * s2 + 2.0 * m1 * m2 * r * s1 * s2;
    let delta_sd = var.max(0.0).sqrt();
    let delta_cdf = |x: f64| {
        if delta_sd > 0.0 {
            cdf((x - delta_mean) / delta_sd)
        } else if x >= delta_mean {
            1.0
        } else {
            0.0
        }
    };

    let n = products.len();
    let nf = n as f64;
    let ks_distance = products
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = delta_cdf(x);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);

    let lo = products[(0.001 * nf) as usize];
    let hi = products[((0.999 * nf) as usize).min(n - 1)];
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for &x in &products {
        if x >= lo && x <= hi {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let pdf = |x: f64| {
        if delta_sd > 0.0 {
            let z = (x - delta_mean) / delta_sd;
            (-0.5 * z * z).exp() / (delta_sd * (2.0 * std::f64::consts::PI).sqrt())
        } else {
            0.0
        }
    };
    let bins = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let lower = lo + k as f64 * width;
            let upper = lower + width;
            DeltaBin {
                lower,
                upper,
                empirical_density: c as f64 / (nf * width),
                delta_density: pdf(0.5 * (lower + upper)),
            }
        })
        .collect();
    Ok(DeltaDemo {
        bins,
        delta_mean,
        delta_sd,
        ks_distance,
        share_positive: products.iter().filter(|&&x| x > 0.0).count() as f64 / nf,
        reps,
        seed,
    })
}

/// Data-generating process for the feasible-test sweep: `n` i.i.d. pairs from
/// `N(mean, cov)` per replication, summarized by their sample means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMeanDgp {
    pub mean: (f64, f64),
    pub cov: Covariance2,
}

/// Empirical size of the feasible test at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub mu1: f64,
    pub mu2: f64,
    pub rate: f64,
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
}

/// Feasible-test rejection rates for each `n` in `n_schedule`.
///
/// Each replication draws `n` observations, forms sample means, standard
/// deviations and correlation, and applies the recommended test to
/// `√n·μ̂ⱼ/σ̂ⱼ` with the threshold calibrated at the estimated correlation.
pub fn feasible_size_sweep(
    cal: &Calibrator,
    n_schedule: &[u64],
    dgp: &SampleMeanDgp,
    alpha: f64,
    reps: u64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    check_reps(reps)?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    let cov = Covariance2::new(dgp.cov.sigma1, dgp.cov.sigma2, dgp.cov.rho)?;
    let t = PairTransform::new(dgp.mean, &cov);
    let lo = quantile(1.0 - alpha);
    let hi = quantile(1.0 - alpha / 2.0);
    n_schedule
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            if n < 2 {
                return Err(Error::InvalidArgument(format!("sample size must be at least 2, got {n}")));
            }
            let hits: Result<u64> = (0..reps)
                .into_par_iter()
                .map(|rep| -> Result<u64> {
                    // Stream ids: schedule position in the high bits.
                    let mut rng = stream_rng(seed, ((k as u64) << 40) | rep);
                    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    // Shift by the true mean to keep the sums well conditioned.
                    for _ in 0..n {
                        let (a, b) = t.draw(&mut rng);
                        let (a, b) = (a - dgp.mean.0, b - dgp.mean.1);
                        sa += a;
                        sb += b;
                        saa += a * a;
                        sbb += b * b;
                        sab += a * b;
                    }
                    let nf = n as f64;
                    let (ma, mb) = (sa / nf, sb / nf);
                    let va = (saa - nf * ma * ma) / (nf - 1.0);
                    let vb = (sbb - nf * mb * mb) / (nf - 1.0);
                    let cab = (sab - nf * ma * mb) / (nf - 1.0);
                    if !(va > 0.0 && vb > 0.0) {
                        return Ok(0);
                    }
                    let rho_hat = (cab / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0);
                    let t1 = nf.sqrt() * (ma + dgp.mean.0) / va.sqrt();
                    let t2 = nf.sqrt() * (mb + dgp.mean.1) / vb.sqrt();
                    Ok(feasible_rejects(cal, t1, t2, Correlation::new(rho_hat)?, alpha, lo, hi)? as u64)
                })
                .sum();
            let r = RateEstimate::from_count(hits?, reps);
            Ok(SweepRow {
                n,
                mu1: dgp.mean.0,
                mu2: dgp.mean.1,
                rate: r.rate,
                se: r.std_error,
                reps,
                seed,
            })
        })
        .collect()
}

/// `min|t| ≥ ĉ_α(ρ̂)` without calibrating at every distinct ρ̂: the threshold
/// lies between the one- and two-sided quantiles, and inside that band the
/// comparison is equivalent to the boundary supremum at `min|t|` being ≤ α.
fn feasible_rejects(cal: &Calibrator, t1: f64, t2: f64, rho: Correlation, alpha: f64, lo: f64, hi: f64) -> Result<bool> {
    if t1 * t2 >= 0.0 {
        return Ok(false);
    }
    let m = t1.abs().min(t2.abs());
    if m < lo {
        return Ok(false);
    }
    if m >= hi || rho.value() >= 0.0 {
        return Ok(true);
    }
    Ok(cal.pvalue_from_min_stat(m, rho)? <= alpha)
}
