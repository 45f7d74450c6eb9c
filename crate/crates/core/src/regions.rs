//! Rejection regions of the competing sign-congruence tests and their exact
//! rejection probabilities.
//!
//! All predicates work on standardized statistics `tⱼ = μ̂ⱼ / σⱼ`. Decisions
//! use `≥` at the threshold; the boundary has probability zero under the
//! model, so this only matters for exact-boundary inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{quantile, stream_rng, Correlation, Covariance2, OrthantKernel, PairTransform};

/// A pair of standardized statistics `(μ̂₁/σ₁, μ̂₂/σ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizedPoint {
    pub t1: f64,
    pub t2: f64,
}

impl StandardizedPoint {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "standardized statistics must be finite, got ({t1}, {t2})"
            )));
        }
        Ok(StandardizedPoint { t1, t2 })
    }

    /// Signs strictly disagree. A zero coordinate counts as agreement.
    #[inline]
    pub fn signs_disagree(&self) -> bool {
        self.t1 * self.t2 < 0.0
    }

    #[inline]
    pub fn min_abs(&self) -> f64 {
        self.t1.abs().min(self.t2.abs())
    }
}

/// Equal-probability bins of `|Z|` used by the fractal test.
///
/// Cut points are `Φ⁻¹(0.5 + jα)` for `j = 0, …, 0.5/α − 1`; the last bin is
/// `[Φ⁻¹(1 − α), ∞)`. Each bin carries probability `2α` under `|Z|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileBins {
    alpha: f64,
    cut_points: Vec<f64>,
}

impl QuantileBins {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::Domain(format!("bin width alpha must lie in (0, 0.5], got {alpha}")));
        }
        let count = (0.5 / alpha).round();
        if (count * alpha - 0.5).abs() > 1e-12 {
            return Err(Error::Unsupported(format!(
                "fractal bins need 0.5/alpha to be an integer (alpha must divide evenly into 1/2); got alpha={alpha}"
            )));
        }
        let count = count as usize;
        let cut_points = (0..count)
            .map(|j| if j == 0 { 0.0 } else { quantile(0.5 + j as f64 * alpha) })
            .collect();
        Ok(QuantileBins { alpha, cut_points })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cut_points(&self) -> &[f64] {
        &self.cut_points
    }

    /// Index of the bin containing `|x|`.
    pub fn bin_index(&self, x: f64) -> usize {
        let x = x.abs();
        self.cut_points.partition_point(|&c| c <= x).saturating_sub(1)
    }
}

/// Recommended test region: signs disagree and `min |tⱼ| ≥ c`.
pub fn recommended_region_contains(p: StandardizedPoint, c: f64) -> bool {
    p.signs_disagree() && p.min_abs() >= c
}

/// Bonferroni region: signs disagree and `min |tⱼ| ≥ Φ⁻¹(1 − α/2)`.
pub fn bmw_region_contains(p: StandardizedPoint, alpha: f64) -> bool {
    p.signs_disagree() && p.min_abs() >= quantile(1.0 - alpha / 2.0)
}

/// Fractal region: signs disagree and `|t₁|`, `|t₂|` fall in the same bin.
pub fn fractal_region_contains(p: StandardizedPoint, bins: &QuantileBins) -> bool {
    p.signs_disagree() && bins.bin_index(p.t1) == bins.bin_index(p.t2)
}

/// Probability that bootstrap draws centered at `m` have a positive product,
/// in the limit of an exact bootstrap: `P(T₁* T₂* > 0)` with `T* ~ N(m, R(ρ))`.
pub fn heuristic_pvalue(m: StandardizedPoint, rho: Correlation) -> f64 {
    heuristic_pvalue_with(&OrthantKernel::new(rho), m.t1, m.t2)
}

#[inline]
pub(crate) fn heuristic_pvalue_with(kernel: &OrthantKernel, t1: f64, t2: f64) -> f64 {
    (kernel.upper(-t1, -t2) + kernel.upper(t1, t2)).min(1.0)
}

/// Monte Carlo version of [`heuristic_pvalue`] using `resamples` draws.
///
/// Only useful for showing that a finite bootstrap approaches the analytic
/// value; the tests themselves use the analytic form.
pub fn heuristic_pvalue_mc(m: StandardizedPoint, rho: Correlation, resamples: usize, seed: u64) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    let t = PairTransform::new((m.t1, m.t2), &Covariance2::unit(rho));
    let mut rng = stream_rng(seed, 0);
    let hits = (0..resamples)
        .filter(|_| {
            let (a, b) = t.draw(&mut rng);
            a * b > 0.0
        })
        .count();
    Ok(hits as f64 / resamples as f64)
}

/// `P(T₁ ≥ c, T₂ ≤ −c) + P(T₁ ≤ −c, T₂ ≥ c)` where `T = (μ̂₁/σ₁, μ̂₂/σ₂)`
/// and `μ̂ ~ N(μ, Σ)`.
pub fn recommended_reject_prob(mu1: f64, mu2: f64, cov: &Covariance2, c: f64) -> Result<f64> {
    let cov = Covariance2::new(cov.sigma1, cov.sigma2, cov.rho)?;
    if c.is_nan() || c <= 0.0 {
        return Err(Error::Domain(format!("critical value must be positive, got {c}")));
    }
    if !(mu1.is_finite() && mu2.is_finite()) {
        return Err(Error::InvalidArgument(format!("means must be finite, got ({mu1}, {mu2})")));
    }
    let kernel = RejectProbKernel::new(cov.rho);
    Ok(kernel.at(mu1 / cov.sigma1, mu2 / cov.sigma2, c))
}

/// Rejection probability of the recommended region at standardized means,
/// with the correlation-dependent work done once.
#[derive(Debug, Clone)]
pub(crate) struct RejectProbKernel {
    // (Z₁, −Z₂) has correlation −ρ.
    flipped: OrthantKernel,
}

impl RejectProbKernel {
    pub(crate) fn new(rho: Correlation) -> Self {
        RejectProbKernel {
            flipped: OrthantKernel::new(rho.flipped()),
        }
    }

    #[inline]
    pub(crate) fn at(&self, m1: f64, m2: f64, c: f64) -> f64 {
        let se = self.flipped.upper(c - m1, c + m2);
        let nw = self.flipped.upper(c + m1, c - m2);
        (se + nw).min(1.0)
    }
}

/// The deterministic rejection rule of one test at a fixed `(α, ρ)`, acting on
/// standardized statistics.
#[derive(Debug, Clone)]
pub enum RejectionRule {
    Recommended { c: f64 },
    Bmw { c: f64 },
    Heuristic { alpha: f64, kernel: OrthantKernel },
    Fractal { bins: QuantileBins },
}

impl RejectionRule {
    pub fn rejects(&self, t1: f64, t2: f64) -> bool {
        let p = StandardizedPoint { t1, t2 };
        match self {
            RejectionRule::Recommended { c } | RejectionRule::Bmw { c } => recommended_region_contains(p, *c),
            // No sign condition: with strong negative correlation the rule can
            // fire at estimates whose signs agree.
            RejectionRule::Heuristic { alpha, kernel } => heuristic_pvalue_with(kernel, t1, t2) < *alpha,
            RejectionRule::Fractal { bins } => fractal_region_contains(p, bins),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::cdf;

    fn upper_tail(x: f64) -> f64 {
        cdf(-x)
    }
    use approx::assert_abs_diff_eq;

    fn pt(t1: f64, t2: f64) -> StandardizedPoint {
        StandardizedPoint::new(t1, t2).unwrap()
    }

    fn corr(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    #[test]
    fn recommended_predicate() {
        assert!(recommended_region_contains(pt(2.0, -1.7), 1.645));
        assert!(!recommended_region_contains(pt(2.0, 1.7), 1.645));
        assert!(!recommended_region_contains(pt(1.645, -1.6449), 1.645));
        assert!(recommended_region_contains(pt(1.645, -1.645), 1.645));
        assert!(!recommended_region_contains(pt(0.0, -3.0), 1.0));
    }

    #[test]
    fn bmw_predicate() {
        assert!(bmw_region_contains(pt(1.97, -1.97), 0.05));
        assert!(!bmw_region_contains(pt(1.7, -1.7), 0.05));
        assert!(!bmw_region_contains(pt(1.97, 1.97), 0.05));
    }

    #[test]
    fn standardized_point_rejects_non_finite() {
        assert!(StandardizedPoint::new(f64::NAN, 0.0).is_err());
        assert!(StandardizedPoint::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn reject_prob_at_origin_is_two_alpha_squared() {
        let c = quantile(0.95);
        let p = recommended_reject_prob(0.0, 0.0, &Covariance2::unit(Correlation::ZERO), c).unwrap();
        assert_abs_diff_eq!(p, 2.0 * 0.05 * 0.05, epsilon = 1e-12);
        // With the rounded threshold 1.645 the value is 2·(1 − Φ(1.645))², which
        // sits 3e-6 below 0.005.
        let q = upper_tail(1.645);
        let p = recommended_reject_prob(0.0, 0.0, &Covariance2::unit(Correlation::ZERO), 1.645).unwrap();
        assert_abs_diff_eq!(p, 2.0 * q * q, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.005, epsilon = 5e-6);
    }

    #[test]
    fn reject_prob_far_along_boundary_is_one_sided_tail() {
        let c = quantile(0.95);
        let p = recommended_reject_prob(0.0, 20.0, &Covariance2::unit(Correlation::ZERO), c).unwrap();
        assert_abs_diff_eq!(p, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn reject_prob_respects_scales() {
        let cov = Covariance2::new(2.0, 0.5, corr(-0.3)).unwrap();
        let a = recommended_reject_prob(1.0, -0.4, &cov, 1.7).unwrap();
        let b = recommended_reject_prob(0.5, -0.8, &Covariance2::unit(corr(-0.3)), 1.7).unwrap();
        assert_eq!(a, b);
        assert!(recommended_reject_prob(0.0, 0.0, &cov, 0.0).is_err());
        assert!(recommended_reject_prob(f64::NAN, 0.0, &cov, 1.0).is_err());
    }

    #[test]
    fn heuristic_reference_points() {
        assert_abs_diff_eq!(heuristic_pvalue(pt(0.0, 0.0), Correlation::ZERO), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(heuristic_pvalue(pt(10.0, 10.0), Correlation::ZERO), 1.0, epsilon = 1e-9);
        // With ρ = 0 the two orthants factor: q(1−q) twice, q = 1 − Φ(t).
        let z = quantile(0.975);
        let q = 0.025;
        let oracle = 2.0 * q * (1.0 - q);
        assert_abs_diff_eq!(heuristic_pvalue(pt(z, -z), Correlation::ZERO), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 0.04875, epsilon = 1e-15);
        let q = upper_tail(1.7);
        let p = heuristic_pvalue(pt(1.7, -1.7), Correlation::ZERO);
        assert_abs_diff_eq!(p, 2.0 * q * (1.0 - q), epsilon = 1e-12);
        assert!(p > 0.05);
    }

    #[test]
    fn heuristic_mc_tracks_analytic() {
        let m = pt(1.2, -0.8);
        let exact = heuristic_pvalue(m, corr(0.3));
        let mc = heuristic_pvalue_mc(m, corr(0.3), 200_000, 4).unwrap();
        let se = (exact * (1.0 - exact) / 200_000.0).sqrt();
        assert!((mc - exact).abs() < 4.0 * se, "{mc} vs {exact}");
        assert!(heuristic_pvalue_mc(m, corr(0.3), 0, 4).is_err());
    }

    #[test]
    fn fractal_bins_match_listed_endpoints() {
        let bins = QuantileBins::new(0.05).unwrap();
        let rounded: Vec<f64> = bins.cut_points().iter().map(|c| (c * 100.0).round() / 100.0).collect();
        assert_eq!(rounded, vec![0.0, 0.13, 0.25, 0.39, 0.52, 0.67, 0.84, 1.04, 1.28, 1.64]);
        assert_abs_diff_eq!(bins.cut_points()[9], 1.644_853_626_951_472_2, epsilon = 1e-12);
        assert_eq!(bins.bin_index(1.0), 6);
        assert_eq!(bins.bin_index(0.5), 3);
        assert_eq!(bins.bin_index(100.0), 9);
        assert_eq!(bins.bin_index(0.0), 0);
        assert!(QuantileBins::new(0.03).is_err());
        assert!(QuantileBins::new(0.0).is_err());
        assert_eq!(QuantileBins::new(0.1).unwrap().cut_points().len(), 5);
    }

    #[test]
    fn fractal_predicate() {
        let bins = QuantileBins::new(0.05).unwrap();
        for m in [1e-6, 0.05, 0.12] {
            assert!(fractal_region_contains(pt(m, -m), &bins));
        }
        assert!(!fractal_region_contains(pt(1.0, -0.5), &bins));
        assert!(fractal_region_contains(pt(2.0, -1.7), &bins));
        // Leaving the region by moving away from the null.
        assert!(fractal_region_contains(pt(0.1, -0.1), &bins));
        assert!(!fractal_region_contains(pt(2.0, -0.1), &bins));
    }

    #[test]
    fn fractal_bins_carry_equal_mass() {
        let bins = QuantileBins::new(0.05).unwrap();
        let mut edges = bins.cut_points().to_vec();
        edges.push(f64::INFINITY);
        for w in edges.windows(2) {
            let mass = 2.0 * (cdf(w[1]) - cdf(w[0]));
            assert_abs_diff_eq!(mass, 0.1, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejection_prob_nonincreasing_along_fixed_lambda() {
        // μ₁ = a − λ, μ₂ = a + λ.
        for &r in &[-0.9, 0.0, 0.5] {
            let cov = Covariance2::unit(corr(r));
            for &lambda in &[0.0, 0.5, 1.0, 2.0] {
                let mut prev = f64::INFINITY;
                for i in 0..=200 {
                    let a = i as f64 * 0.05;
                    let p = recommended_reject_prob(a - lambda, a + lambda, &cov, 1.645).unwrap();
                    let mirrored = recommended_reject_prob(-a - lambda, -a + lambda, &cov, 1.645).unwrap();
                    assert!((p - mirrored).abs() <= 1e-12);
                    assert!(p <= prev + 1e-12, "ρ={r} λ={lambda} a={a}: {p} > {prev}");
                    prev = p;
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn central_symmetry(m1 in -6.0..6.0f64, m2 in -6.0..6.0f64, r in -1.0..=1.0f64, c in 0.1..3.0f64) {
                let cov = Covariance2::unit(corr(r));
                let a = recommended_reject_prob(m1, m2, &cov, c).unwrap();
                let b = recommended_reject_prob(-m1, -m2, &cov, c).unwrap();
                prop_assert!((a - b).abs() <= 1e-14);
            }

            #[test]
            fn recommended_region_is_monotone(t1 in -5.0..5.0f64, t2 in -5.0..5.0f64, s in 1.0..4.0f64, r in 1.0..4.0f64) {
                let c = 1.645;
                if recommended_region_contains(pt(t1, t2), c) {
                    prop_assert!(recommended_region_contains(pt(s * t1, r * t2), c));
                }
            }

            #[test]
            fn heuristic_is_probability(t1 in -8.0..8.0f64, t2 in -8.0..8.0f64, r in -1.0..=1.0f64) {
                let p = heuristic_pvalue(pt(t1, t2), corr(r));
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
