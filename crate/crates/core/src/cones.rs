//! Null hypotheses of the form `(μ₁, μ₂) ∈ C ∪ −C` for a full-dimensional cone
//! `C` spanned by two known vectors.
//!
//! With `A = [b₁ b₂]⁻¹`, a point lies in `C ∪ −C` exactly when the coordinates
//! `ν = Aμ` have a nonnegative product, so the quadrant machinery applies to
//! `ν̂ = Aμ̂ ~ N(Aμ, AΣA′)`.

use serde::{Deserialize, Serialize};

use crate::calibration::Calibrator;
use crate::error::{Error, Result};
use crate::normal::Covariance2;
use crate::procedures::{recommended_test_with, EstimatePair, NullDirection, TestOutcome};

type Mat2 = [[f64; 2]; 2];

/// A cone spanned by `b1` and `b2`, with its base-change matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone2 {
    pub b1: [f64; 2],
    pub b2: [f64; 2],
    /// `[b1 b2]⁻¹`.
    pub a: Mat2,
}

/// Build the cone and its base-change matrix. Fails when the spanning vectors
/// are (nearly) collinear: `|det| ≤ 1e-10·‖b₁‖‖b₂‖`.
pub fn cone_basis_change(b1: [f64; 2], b2: [f64; 2]) -> Result<Cone2> {
    if !b1.iter().chain(&b2).all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("spanning vectors must be finite".into()));
    }
    let n1 = b1[0].hypot(b1[1]);
    let n2 = b2[0].hypot(b2[1]);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidArgument("spanning vectors must be nonzero".into()));
    }
    // Columns are b1 and b2.
    let det = b1[0] * b2[1] - b2[0] * b1[1];
    if det.abs() <= 1e-10 * n1 * n2 {
        return Err(Error::DegenerateCone { det });
    }
    let a = [[b2[1] / det, -b2[0] / det], [-b1[1] / det, b1[0] / det]];
    Ok(Cone2 { b1, b2, a })
}

impl Cone2 {
    /// Coordinates of `x` in the basis `(b1, b2)`.
    pub fn coordinates(&self, x: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.a, x)
    }
}

fn mat_vec(m: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

fn mat_mul(l: &Mat2, r: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = l[i][0] * r[0][j] + l[i][1] * r[1][j];
        }
    }
    out
}

fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// `(ν̂, AΣA′)`: estimates and covariance in cone coordinates. The sample size
/// and scale status carry over unchanged.
pub fn transform_estimates(est: &EstimatePair, cone: &Cone2) -> Result<EstimatePair> {
    est.validate()?;
    let nu = cone.coordinates([est.mu1_hat, est.mu2_hat]);
    if cone.a[0][1] == 0.0 && cone.a[1][0] == 0.0 {
        // Axis-aligned cone: rescale directly so the correlation is carried
        // over bit for bit.
        let (d1, d2) = (cone.a[0][0], cone.a[1][1]);
        let rho = if d1 * d2 < 0.0 { est.cov.rho.flipped() } else { est.cov.rho };
        return Ok(EstimatePair {
            mu1_hat: nu[0],
            mu2_hat: nu[1],
            cov: Covariance2::new(d1.abs() * est.cov.sigma1, d2.abs() * est.cov.sigma2, rho)?,
            ..*est
        });
    }
    let sigma = est.cov.matrix();
    let m = mat_mul(&mat_mul(&cone.a, &sigma), &transpose(&cone.a));
    // AΣA′ is positive definite whenever Σ is and A is invertible; a perfectly
    // correlated Σ can still make one transformed variance vanish.
    let cov = Covariance2::from_matrix(m).map_err(|_| Error::DegenerateCone {
        det: m[0][0] * m[1][1] - m[0][1] * m[1][0],
    })?;
    Ok(EstimatePair {
        mu1_hat: nu[0],
        mu2_hat: nu[1],
        cov,
        ..*est
    })
}

/// The recommended test applied in cone coordinates. Uses the shared
/// calibrator.
pub fn cone_test(est: &EstimatePair, cone: &Cone2, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    cone_test_with(Calibrator::shared(), est, cone, alpha, dir)
}

pub fn cone_test_with(cal: &Calibrator, est: &EstimatePair, cone: &Cone2, alpha: f64, dir: NullDirection) -> Result<TestOutcome> {
    let nu = transform_estimates(est, cone)?;
    let mut out = recommended_test_with(cal, &nu, alpha, dir)?;
    out.diagnostics.insert("rho_nu".into(), nu.cov.rho.value().to_string());
    out.diagnostics.insert("nu_hat".into(), format!("({}, {})", nu.mu1_hat, nu.mu2_hat));
    if nu.cov.rho.value() < -0.55 {
        out.diagnostics.insert(
            "note".into(),
            "induced correlation is strongly negative; the calibrated critical value may exceed the one-sided quantile".into(),
        );
    }
    Ok(out)
}
