//! Acceptance checks. Runs without the libtest harness so that every check
//! prints exactly one PASS/FAIL line; the process fails if any check fails.

use std::time::Instant;

use signcong::calibration::{emit_critical_table, CalibrationConfig, Calibrator};
use signcong::cones::{cone_basis_change, cone_test_with, transform_estimates};
use signcong::normal::{std_normal_cdf, std_normal_quantile, stream_rng, Correlation, Covariance2};
use signcong::procedures::{
    bmw_test, heuristic_bootstrap_test, recommended_test_with, EstimatePair, NullDirection,
};
use signcong::regions::{heuristic_pvalue, recommended_reject_prob, QuantileBins, RejectionRule, StandardizedPoint};
use signcong::simulate::{
    feasible_size_sweep, fixed_lambda_max_increase, heuristic_size_extremes, mc_count, monotonic_region_audit,
    verify_containment, RateEstimate, SampleMeanDgp,
};

use rand::Rng;

const SEED: u64 = 20_240_601;
const MC_REPS: u64 = 1_000_000;

/// Appendix table of calibrated critical values: (ρ, [α=0.1, α=0.05, α=0.01]).
const TABLE: [(f64, [f64; 3]); 11] = [
    (-1.0, [1.64485363, 1.95996398, 2.57582930]),
    (-0.95, [1.50530474, 1.81773816, 2.42829856]),
    (-0.90, [1.43932899, 1.74893328, 2.35384002]),
    (-0.85, [1.38524452, 1.69190984, 2.32671651]),
    (-0.80, [1.33720245, 1.64878158, 2.32634836]),
    (-0.75, [1.29315300, 1.64488267, 2.32634787]),
    (-0.70, [1.28170171, 1.64485364, 2.32634787]),
    (-0.65, [1.28155170, 1.64485363, 2.32634787]),
    (-0.60, [1.28155157, 1.64485363, 2.32634787]),
    (-0.55, [1.28155157, 1.64485363, 2.32634787]),
    (0.0, [1.28155157, 1.64485363, 2.32634787]),
];
const ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

struct Report {
    passed: usize,
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }
}

fn corr(r: f64) -> Correlation {
    Correlation::new(r).unwrap()
}

fn q(p: f64) -> f64 {
    std_normal_quantile(p).unwrap()
}

fn mc_rate(rule: &RejectionRule, mean: (f64, f64), rho: f64, reps: u64) -> RateEstimate {
    let hits = mc_count(rule, mean, &Covariance2::unit(corr(rho)), reps, SEED).unwrap();
    RateEstimate::from_count(hits, reps)
}

fn c1_table(r: &mut Report, cal: &Calibrator) {
    let rhos: Vec<Correlation> = TABLE.iter().map(|&(rho, _)| corr(rho)).collect();
    let start = Instant::now();
    let cells = emit_critical_table(&ALPHAS, &rhos, cal.config()).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let mut worst = 0.0f64;
    let mut errors = 0;
    for cell in &cells {
        let row = TABLE.iter().find(|(rho, _)| *rho == cell.rho).unwrap();
        let col = ALPHAS.iter().position(|&a| a == cell.alpha).unwrap();
        match &cell.result {
            Ok(entry) => worst = worst.max((entry.c - row.1[col]).abs()),
            Err(_) => errors += 1,
        }
    }
    r.check(
        "C1a table",
        errors == 0 && cells.len() == 33 && worst <= 1e-6,
        format!("{} cells, {errors} errors, max |c - table| = {worst:.2e} (tol 1e-6)", cells.len()),
    );

    let mut worst_one = 0.0f64;
    let mut worst_two = 0.0f64;
    for cell in &cells {
        let Ok(entry) = &cell.result else { continue };
        if cell.rho >= -0.55 {
            worst_one = worst_one.max((entry.c - q(1.0 - cell.alpha)).abs());
        }
        if cell.rho == -1.0 {
            worst_two = worst_two.max((entry.c - q(1.0 - cell.alpha / 2.0)).abs());
        }
    }
    r.check(
        "C1b one-sided rows",
        worst_one <= 1e-8,
        format!("rho >= -0.55: max |c - q(1-a)| = {worst_one:.2e} (tol 1e-8)"),
    );
    r.check(
        "C1c rho=-1 row",
        worst_two <= 1e-6,
        format!("max |c - q(1-a/2)| = {worst_two:.2e} (tol 1e-6)"),
    );
    r.check("C1d runtime", secs < 600.0, format!("table computed in {secs:.1}s (budget 600s)"));
}

fn c2_footnote(r: &mut Report, cal: &Calibrator) {
    let mut shown = Vec::new();
    let mut ok = true;
    for rho in [-0.79, -0.75, -0.7, -0.5] {
        let c05 = format!("{:.3}", cal.critical_value(0.05, corr(rho)).unwrap().c);
        let c01 = format!("{:.3}", cal.critical_value(0.01, corr(rho)).unwrap().c);
        ok &= c05 == "1.645" && c01 == "2.326";
        shown.push(format!("{rho}:{c05}/{c01}"));
    }
    r.check("C2a rounding", ok, format!("c_.05/c_.01 to 3dp: {}", shown.join(" ")));
    let c = cal.critical_value(0.05, corr(-0.9)).unwrap().c;
    r.check(
        "C2b c_.05(-0.9)",
        (c - 1.74893328).abs() <= 1e-6,
        format!("{c:.10} vs 1.74893328 (tol 1e-6)"),
    );
}

fn c3_analytic_vs_mc(r: &mut Report, cal: &Calibrator) {
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut worst = 0.0f64;
    let mut points = 0;
    for rho in [-0.9, 0.0, 0.5] {
        let c = cal.critical_value(0.05, corr(rho)).unwrap().c;
        let rule = RejectionRule::Recommended { c };
        for &mu1 in &grid {
            for &mu2 in &grid {
                let exact = recommended_reject_prob(mu1, mu2, &Covariance2::unit(corr(rho)), c).unwrap();
                let mc = mc_rate(&rule, (mu1, mu2), rho, MC_REPS);
                let se = mc.se_at(exact).max(1.0 / MC_REPS as f64);
                worst = worst.max((mc.rate - exact).abs() / se);
                points += 1;
            }
        }
    }
    r.check(
        "C3 analytic vs MC",
        worst <= 4.0,
        format!("{points} points at 1e6 reps, max |mc - exact|/se = {worst:.2} (tol 4)"),
    );
}

fn c4_size(r: &mut Report, cal: &Calibrator) {
    const ALPHA: f64 = 0.05;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut at_twenty = Vec::new();
    let mut far_ok = true;
    for rho in [-0.9, 0.0, 0.5] {
        let c = cal.critical_value(ALPHA, corr(rho)).unwrap().c;
        let rule = RejectionRule::Recommended { c };
        for mu2 in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let mc = mc_rate(&rule, (0.0, mu2), rho, MC_REPS);
            let se = mc.se_at(ALPHA);
            worst_excess = worst_excess.max((mc.rate - ALPHA) / se);
            if mu2 == 20.0 {
                far_ok &= (mc.rate - ALPHA).abs() <= 3.0 * se;
                at_twenty.push(format!("rho={rho}: {:.5}", mc.rate));
            }
        }
    }
    r.check(
        "C4a size never above alpha",
        worst_excess <= 3.0,
        format!("18 boundary points, max (rate - 0.05)/se = {worst_excess:.2} (tol 3)"),
    );
    r.check(
        "C4b size = alpha at mu2=20",
        far_ok,
        format!("{} (want 0.05 +- 3se, se = {:.1e})", at_twenty.join(", "), (ALPHA * (1.0 - ALPHA) / MC_REPS as f64).sqrt()),
    );
}

fn c5_origin(r: &mut Report) {
    let rule = RejectionRule::Recommended { c: q(0.95) };
    let mc = mc_rate(&rule, (0.0, 0.0), 0.0, MC_REPS);
    let se = mc.se_at(0.005);
    r.check(
        "C5 power at origin",
        (mc.rate - 0.005).abs() <= 3.0 * se,
        format!("rate {:.6} vs 0.005 +- {:.6}", mc.rate, 3.0 * se),
    );
}

fn c6_containment(r: &mut Report) {
    let rep = verify_containment(10_000, SEED).unwrap();
    r.check(
        "C6a containment",
        rep.violations.is_empty(),
        format!(
            "{} points, {} violations (bmw {}, heuristic {}, recommended {} rejections)",
            rep.points,
            rep.violations.len(),
            rep.bmw_rejections,
            rep.heuristic_rejections,
            rep.recommended_rejections
        ),
    );
    let z = q(0.975);
    let p = heuristic_pvalue(StandardizedPoint::new(z, -z).unwrap(), Correlation::ZERO);
    r.check(
        "C6b heuristic p at BMW corner",
        (p - 0.049375).abs() <= 1e-9,
        format!("{p:.9} vs 0.049375 (tol 1e-9); closed form 2q(1-q) with q=0.025 is 0.04875"),
    );
}

fn c7_fractal(r: &mut Report) {
    let rule = RejectionRule::Fractal {
        bins: QuantileBins::new(0.05).unwrap(),
    };
    let mut similar = Vec::new();
    let mut ok = true;
    for mu in [(0.0, 0.0), (0.0, 1.0), (0.0, 3.0), (2.0, 0.0)] {
        let mc = mc_rate(&rule, mu, 0.0, MC_REPS);
        ok &= (mc.rate - 0.05).abs() <= 3.0 * mc.se_at(0.05);
        similar.push(format!("{mu:?}:{:.5}", mc.rate));
    }
    r.check("C7a fractal similar", ok, format!("{} (want 0.05 +- 3se)", similar.join(" ")));
    let out = mc_rate(&rule, (0.5, -0.5), 0.0, MC_REPS);
    let inn = mc_rate(&rule, (1.0, 1.0), 0.0, MC_REPS);
    let se = out.se_at(0.05);
    r.check(
        "C7b fractal unbiased",
        out.rate > 0.05 + 3.0 * se && inn.rate < 0.05 - 3.0 * se,
        format!("(0.5,-0.5): {:.5} > {:.5}; (1,1): {:.5} < {:.5}", out.rate, 0.05 + 3.0 * se, inn.rate, 0.05 - 3.0 * se),
    );
}

fn c8_heuristic_extremes(r: &mut Report) {
    let rows = heuristic_size_extremes(&[corr(-0.99), corr(0.99), corr(-0.999)], 0.05, MC_REPS, SEED).unwrap();
    r.check(
        "C8a heuristic rate at rho=-0.99",
        rows[0].rate > 0.9,
        format!("{:.4} (want > 0.9); at rho=-0.999 it is {:.4}", rows[0].rate, rows[2].rate),
    );
    r.check("C8b heuristic rate at rho=0.99", rows[1].rate < 0.01, format!("{:.6} (want < 0.01)", rows[1].rate));
}

fn c9_empirical(r: &mut Report, cal: &Calibrator) {
    // Kowalski: estimates (-301, 148) with equal standard errors scaled so the
    // smaller |t| is the stated min_t.
    let min_t = q(1.0 - 0.0215);
    let se = 148.0 / min_t;
    let est = EstimatePair::known(-301.0, 148.0, Covariance2::new(se, se, Correlation::ZERO).unwrap()).unwrap();
    let dir = NullDirection::Congruent;
    let rec = recommended_test_with(cal, &est, 0.05, dir).unwrap().p_value.unwrap();
    let bmw = bmw_test(&est, 0.05, dir).unwrap().p_value.unwrap();
    let heur = heuristic_bootstrap_test(&est, 0.05, dir).unwrap().p_value.unwrap();
    r.check("C9a p_recommended", (rec - 0.0215).abs() <= 1e-4, format!("{rec:.6} vs 0.0215 (tol 1e-4)"));
    r.check("C9b p_bmw", (bmw - 0.043).abs() <= 1e-4, format!("{bmw:.6} vs 0.043 (tol 1e-4)"));
    r.check(
        "C9c p_heuristic",
        (heur - 0.023).abs() <= 5e-4,
        format!("{heur:.6} vs 0.023 (tol 5e-4); estimates (-301, 148) with equal scales"),
    );
    r.check(
        "C9d ordering",
        rec < heur && heur < bmw,
        format!("{rec:.6} < {heur:.6} < {bmw:.6}"),
    );
    let mut got = Vec::new();
    let mut ok = true;
    for (p1, p2, rho, want) in [(0.004, 0.030, 0.219, 0.015), (0.001, 0.025, 0.038, 0.0125)] {
        let est = EstimatePair::from_two_sided_pvalues(p1, p2, false, false, corr(rho)).unwrap();
        let p = recommended_test_with(cal, &est, 0.05, NullDirection::Incongruent).unwrap().p_value.unwrap();
        ok &= (p - want).abs() <= 5e-4;
        got.push(format!("{p:.6}"));
    }
    r.check("C9e Dippel p-values", ok, format!("{} vs 0.015, 0.0125 (tol 5e-4)", got.join(", ")));
}

fn c10_cones(r: &mut Report, cal: &Calibrator) {
    let quick = Calibrator::new(CalibrationConfig {
        grid_step: 0.01,
        ..Default::default()
    })
    .unwrap();
    let id = cone_basis_change([1.0, 0.0], [0.0, 1.0]).unwrap();
    let mut rng = stream_rng(SEED, 7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let cov = Covariance2::new(
            rng.random_range(0.1..3.0),
            rng.random_range(0.1..3.0),
            corr(rng.random_range(-0.99..0.99)),
        )
        .unwrap();
        let est = EstimatePair::known(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), cov).unwrap();
        let alpha = [0.01, 0.05, 0.1][rng.random_range(0..3)];
        let dir = if rng.random_bool(0.5) { NullDirection::Congruent } else { NullDirection::Incongruent };
        let a = cone_test_with(&quick, &est, &id, alpha, dir).unwrap();
        let b = recommended_test_with(&quick, &est, alpha, dir).unwrap();
        if (a.reject, a.p_value, a.critical_value, a.min_stat) != (b.reject, b.p_value, b.critical_value, b.min_stat) {
            mismatches += 1;
        }
    }
    r.check("C10a identity cone", mismatches == 0, format!("{mismatches} mismatches in 1000 random inputs"));

    let cone = cone_basis_change([2.0, 1.0], [1.0, 2.0]).unwrap();
    let est = EstimatePair::known(1.0, -1.0, Covariance2::unit(Correlation::ZERO)).unwrap();
    let nu = transform_estimates(&est, &cone).unwrap();
    let rho_nu = nu.cov.rho.value();
    let out = cone_test_with(cal, &est, &cone, 0.05, NullDirection::Congruent).unwrap();
    let c = out.critical_value.unwrap();
    r.check(
        "C10b cone example",
        (rho_nu + 0.8).abs() <= 1e-12 && (c - 1.64878158).abs() <= 1e-6,
        format!("rho_nu = {rho_nu:.15}, c = {c:.10} vs 1.64878158 (tol 1e-6)"),
    );
}

fn c11_audit(r: &mut Report) {
    let rec = monotonic_region_audit(&RejectionRule::Recommended { c: q(0.95) }, 0.01, 5.0).unwrap();
    let bmw = monotonic_region_audit(&RejectionRule::Bmw { c: q(0.975) }, 0.01, 5.0).unwrap();
    let fractal = monotonic_region_audit(
        &RejectionRule::Fractal {
            bins: QuantileBins::new(0.05).unwrap(),
        },
        0.01,
        5.0,
    )
    .unwrap();
    r.check(
        "C11 monotonicity audit",
        rec.violations == 0 && bmw.violations == 0 && !fractal.witnesses.is_empty(),
        format!(
            "recommended {} / bmw {} / fractal {} violations on {} grid points; first fractal witness {:?}",
            rec.violations,
            bmw.violations,
            fractal.violations,
            rec.grid_points,
            fractal.witnesses.first()
        ),
    );
}

fn c12_lemma(r: &mut Report, cal: &Calibrator) {
    let mut worst = f64::NEG_INFINITY;
    for rho in [-0.9, 0.0, 0.5] {
        let c = cal.critical_value(0.05, corr(rho)).unwrap().c;
        let inc = fixed_lambda_max_increase(&[corr(rho)], &[0.0, 0.5, 1.0, 2.0], 0.05, 8.0, c).unwrap();
        worst = worst.max(inc);
    }
    r.check(
        "C12 fixed-lambda monotonicity",
        worst <= 1e-12,
        format!("largest step increase {worst:.2e} (tol 1e-12)"),
    );
}

fn prop1_sweep(r: &mut Report, cal: &Calibrator) {
    const ALPHA: f64 = 0.05;
    const REPS: u64 = 10_000;
    let schedule = [100, 1000, 10_000];
    let cov = Covariance2::unit(corr(0.5));
    let boundary = feasible_size_sweep(cal, &schedule, &SampleMeanDgp { mean: (0.0, 1.0), cov }, ALPHA, REPS, SEED).unwrap();
    let interior = feasible_size_sweep(cal, &schedule, &SampleMeanDgp { mean: (1.0, 1.0), cov }, ALPHA, REPS, SEED).unwrap();
    let se = (ALPHA * (1.0 - ALPHA) / REPS as f64).sqrt();
    let last = boundary.last().unwrap().rate;
    let rates: Vec<String> = boundary.iter().map(|row| format!("n={}:{:.4}", row.n, row.rate)).collect();
    r.check(
        "P1a feasible size at n=1e4",
        (last - ALPHA).abs() <= 3.0 * se,
        format!("{last:.4} vs 0.05 +- {:.4}", 3.0 * se),
    );
    r.check(
        "P1b feasible size across schedule",
        boundary.iter().all(|row| row.rate <= ALPHA + 3.0 * se),
        format!("{} (max 0.05 + 3se = {:.4})", rates.join(" "), ALPHA + 3.0 * se),
    );
    r.check(
        "P1c feasible interior (1,1)",
        interior.iter().all(|row| row.rate < ALPHA),
        interior.iter().map(|row| format!("n={}:{:.4}", row.n, row.rate)).collect::<Vec<_>>().join(" "),
    );
    let small = feasible_size_sweep(cal, &[50], &SampleMeanDgp { mean: (0.0, 1.0), cov }, ALPHA, REPS, SEED).unwrap();
    println!("INFO P1 n=50 boundary rate {:.4} (diagnostic only)", small[0].rate);
}

fn strictness_note() {
    // Strictness of the nested regions at ρ = 0.
    let rec = RejectionRule::Recommended { c: q(0.95) };
    let p = heuristic_pvalue(StandardizedPoint::new(1.7, -1.7).unwrap(), Correlation::ZERO);
    let q17 = std_normal_cdf(-1.7).unwrap();
    println!(
        "INFO (1.7,-1.7): recommended rejects = {}, heuristic p = {p:.6} (closed form 2q(1-q) = {:.6})",
        rec.rejects(1.7, -1.7),
        2.0 * q17 * (1.0 - q17)
    );
}

fn main() {
    let cal = Calibrator::shared();
    let mut r = Report {
        passed: 0,
        failed: Vec::new(),
    };
    let start = Instant::now();
    c1_table(&mut r, cal);
    c2_footnote(&mut r, cal);
    c3_analytic_vs_mc(&mut r, cal);
    c4_size(&mut r, cal);
    c5_origin(&mut r);
    c6_containment(&mut r);
    c7_fractal(&mut r);
    c8_heuristic_extremes(&mut r);
    c9_empirical(&mut r, cal);
    c10_cones(&mut r, cal);
    c11_audit(&mut r);
    c12_lemma(&mut r, cal);
    prop1_sweep(&mut r, cal);
    strictness_note();
    println!(
        "acceptance: {} passed, {} failed ({}) in {:.1}s",
        r.passed,
        r.failed.len(),
        r.failed.join(", "),
        start.elapsed().as_secs_f64()
    );
    if !r.failed.is_empty() {
        std::process::exit(1);
    }
}
