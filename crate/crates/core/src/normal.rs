//! Univariate and bivariate standard normal primitives.
//!
//! Everything else in the crate reduces to three functions here: the standard
//! normal CDF `Φ`, its quantile `Φ⁻¹`, and the upper orthant probability
//! `P(X₁ > h, X₂ > k)` of a standard bivariate normal with correlation `ρ`.
//!
//! The orthant probability follows Genz's BVNU scheme (Drezner–Wesolowsky
//! Gauss–Legendre quadrature over the arcsine of the correlation for
//! `|ρ| < 0.925`, and a series expansion plus quadrature in `√(1−ρ²)` closer to
//! the degenerate cases). `ρ = ±1` are evaluated exactly.

// Published coefficient tables are kept digit-for-digit.
#![allow(clippy::excessive_precision)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A correlation coefficient, guaranteed to lie in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Correlation(f64);

impl Correlation {
    pub const ZERO: Correlation = Correlation(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (-1.0..=1.0).contains(&value) {
            Ok(Correlation(value))
        } else {
            Err(Error::InvalidCorrelation(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// The correlation after negating one of the two coordinates.
    #[inline]
    pub fn flipped(self) -> Self {
        Correlation(-self.0)
    }
}

impl TryFrom<f64> for Correlation {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Correlation::new(value)
    }
}

impl From<Correlation> for f64 {
    fn from(c: Correlation) -> f64 {
        c.0
    }
}

/// Scales and correlation of a pair of estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2 {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: Correlation,
}

impl Covariance2 {
    pub fn new(sigma1: f64, sigma2: f64, rho: Correlation) -> Result<Self> {
        for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {s}")));
            }
        }
        Ok(Covariance2 {
            sigma1,
            sigma2,
            rho,
        })
    }

    /// Unit scales with the given correlation.
    pub fn unit(rho: Correlation) -> Self {
        Covariance2 {
            sigma1: 1.0,
            sigma2: 1.0,
            rho,
        }
    }

    /// The implied 2×2 covariance matrix, row major.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let off = self.rho.value() * self.sigma1 * self.sigma2;
        [
            [self.sigma1 * self.sigma1, off],
            [off, self.sigma2 * self.sigma2],
        ]
    }

    /// Recover scales and correlation from a covariance matrix.
    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self> {
        let (v1, v2) = (m[0][0], m[1][1]);
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(Error::Domain(format!(
                "covariance matrix has non-positive variance ({v1}, {v2})"
            )));
        }
        let (s1, s2) = (v1.sqrt(), v2.sqrt());
        // Rounding can push |rho| a hair past one for near-singular matrices.
        let rho = (m[0][1] / (s1 * s2)).clamp(-1.0, 1.0);
        Covariance2::new(s1, s2, Correlation(rho))
    }
}

/// Standard normal density.
#[inline]
pub(crate) fn pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF without argument checking; NaN propagates.
#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal CDF `Φ(x)`. Infinite arguments are allowed.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::InvalidArgument("normal CDF argument is NaN".into()));
    }
    Ok(cdf(x))
}

/// Standard normal quantile `Φ⁻¹(p)` for `0 < p < 1`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile requires 0 < p < 1, got {p}")));
    }
    Ok(quantile(p))
}

/// Quantile without domain checking. Caller guarantees `0 < p < 1`.
pub(crate) fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        // 1 - p is exact here, and the lower tail keeps full relative precision.
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

fn lower_quantile(p: f64) -> f64 {
    let x = wichura_as241(p);
    if x == 0.0 {
        return 0.0;
    }
    // One Newton step against the CDF.
    x - (cdf(x) - p) / pdf(x)
}

/// Wichura's AS 241 (PPND16) rational approximation, about 1e-16 relative.
fn wichura_as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_4e3,
        1.373_169_376_550_946_1e4,
        4.592_195_393_154_987_1e4,
        6.726_577_092_700_870_1e4,
        3.343_057_558_358_812_8e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_1e1,
        6.871_870_074_920_579_1e2,
        5.394_196_021_424_751_1e3,
        2.121_379_430_158_659_6e4,
        3.930_789_580_009_271_1e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_854_6e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_6,
        4.630_337_846_156_545_3,
        5.769_497_221_460_691_4,
        3.647_848_324_763_204_6,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506_1e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414_1e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_8,
        1.676_384_830_183_803_8,
        6.897_673_349_851_e-1,
        1.481_039_764_274_800_7e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_344_9e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_8,
        5.463_784_911_164_114_4,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_9e-1,
        2.653_218_952_657_612_3e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_4e-1,
        1.369_298_809_227_358_1e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_132_6e-4,
        1.846_318_317_510_054_7e-5,
        1.421_511_758_316_445_9e-7,
        2.044_263_103_389_939_8e-15,
    ];

    fn ratio(num: &[f64; 8], den: &[f64; 8], x: f64) -> f64 {
        let n = num.iter().rev().fold(0.0, |acc, &c| acc * x + c);
        let d = den.iter().rev().fold(0.0, |acc, &c| acc * x + c);
        n / d
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * ratio(&A, &B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        ratio(&C, &D, r - 1.6)
    } else {
        ratio(&E, &F, r - 5.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss–Legendre half rules (negative abscissae) with 6, 12 and 20 points.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

fn half_rule(abs_rho: f64) -> &'static [(f64, f64)] {
    if abs_rho < 0.3 {
        &GL6
    } else if abs_rho < 0.75 {
        &GL12
    } else {
        &GL20
    }
}

/// Upper orthant probability evaluator for one fixed correlation.
///
/// Building the kernel does the correlation-dependent trigonometry once, so
/// repeated evaluations at many `(h, k)` (the calibration grid) are cheap.
#[derive(Debug, Clone)]
pub struct OrthantKernel {
    rho: f64,
    kind: KernelKind,
}

#[derive(Debug, Clone)]
enum KernelKind {
    MinusOne,
    Independent,
    PlusOne,
    /// |ρ| < 0.925: (weight, sin, 1 / (1 - sin²)) per node.
    Moderate(Vec<(f64, f64, f64)>),
    /// 0.925 ≤ |ρ| < 1: (weight·a, x², √(1 - x²)) per node.
    Strong {
        a_sq: f64,
        a: f64,
        nodes: Vec<(f64, f64, f64)>,
    },
}

impl OrthantKernel {
    pub fn new(rho: Correlation) -> Self {
        let r = rho.value();
        let kind = if r == -1.0 {
            KernelKind::MinusOne
        } else if r == 1.0 {
            KernelKind::PlusOne
        } else if r == 0.0 {
            KernelKind::Independent
        } else if r.abs() < 0.925 {
            let asr = r.asin();
            let nodes = half_rule(r.abs())
                .iter()
                .flat_map(|&(w, x)| [(w, x), (w, -x)])
                .map(|(w, x)| {
                    let sn = (asr * (1.0 + x) / 2.0).sin();
                    (w * asr / (4.0 * PI), sn, 1.0 / (1.0 - sn * sn))
                })
                .collect();
            KernelKind::Moderate(nodes)
        } else {
            let a_sq = (1.0 - r) * (1.0 + r);
            let a = a_sq.sqrt();
            let half = a / 2.0;
            let nodes = GL20
                .iter()
                .flat_map(|&(w, x)| [(w, x), (w, -x)])
                .map(|(w, x)| {
                    let xs = (half * (1.0 + x)).powi(2);
                    (half * w, xs, (1.0 - xs).sqrt())
                })
                .collect();
            KernelKind::Strong { a_sq, a, nodes }
        };
        OrthantKernel { rho: r, kind }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `P(X₁ > h, X₂ > k)`. Arguments may be infinite; NaN gives NaN.
    pub fn upper(&self, h: f64, k: f64) -> f64 {
        if h.is_nan() || k.is_nan() {
            return f64::NAN;
        }
        if h == f64::INFINITY || k == f64::INFINITY {
            return 0.0;
        }
        if h == f64::NEG_INFINITY {
            return cdf(-k);
        }
        if k == f64::NEG_INFINITY {
            return cdf(-h);
        }
        let p = match &self.kind {
            KernelKind::Independent => cdf(-h) * cdf(-k),
            KernelKind::PlusOne => cdf(-h.max(k)),
            KernelKind::MinusOne => {
                // X₂ = -X₁, so the event is h < X₁ < -k.
                if h >= -k {
                    0.0
                } else if h > 0.0 {
                    cdf(-h) - cdf(k)
                } else {
                    cdf(-k) - cdf(h)
                }
            }
            KernelKind::Moderate(nodes) => {
                let hk = h * k;
                let hs = (h * h + k * k) / 2.0;
                let sum: f64 = nodes
                    .iter()
                    .map(|&(w, sn, inv)| w * ((sn * hk - hs) * inv).exp())
                    .sum();
                sum + cdf(-h) * cdf(-k)
            }
            KernelKind::Strong { a_sq, a, nodes } => self.strong(h, k, *a_sq, *a, nodes),
        };
        p.clamp(0.0, 1.0)
    }

    fn strong(&self, h: f64, k: f64, a_sq: f64, a: f64, nodes: &[(f64, f64, f64)]) -> f64 {
        const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
        let r = self.rho;
        let (k, hk) = if r < 0.0 { (-k, -h * k) } else { (k, h * k) };
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;

        let mut bvn = a
            * (-(bs / a_sq + hk) / 2.0).exp()
            * (1.0 - c * (bs - a_sq) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * SQRT_2PI
                * cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        for &(aw, xs, rs) in nodes {
            bvn += aw
                * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                    - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / (2.0 * PI);

        if r > 0.0 {
            bvn + cdf(-h.max(k))
        } else {
            let mut p = -bvn;
            if k > h {
                p += if h < 0.0 {
                    cdf(k) - cdf(h)
                } else {
                    cdf(-h) - cdf(-k)
                };
            }
            p
        }
    }
}

/// `P(X₁ > h, X₂ > k)` for a standard bivariate normal with correlation `rho`.
pub fn bvn_upper_orthant(h: f64, k: f64, rho: Correlation) -> Result<f64> {
    if h.is_nan() || k.is_nan() {
        return Err(Error::InvalidArgument("orthant bound is NaN".into()));
    }
    Ok(OrthantKernel::new(rho).upper(h, k))
}

/// Draws per RNG stream in the chunked samplers.
pub const CHUNK: usize = 1 << 14;

/// The generator for one stream of a seeded computation.
///
/// Stream `i` is ChaCha8 keyed by `seed` (expanded with `seed_from_u64`) with
/// its 64-bit stream id set to `i`. Work split into chunks uses the chunk index
/// as the stream id, so results never depend on how chunks are scheduled.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Affine map from independent standard normals to a correlated pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairTransform {
    m1: f64,
    m2: f64,
    s1: f64,
    s2_rho: f64,
    s2_perp: f64,
}

impl PairTransform {
    pub(crate) fn new(mean: (f64, f64), cov: &Covariance2) -> Self {
        let r = cov.rho.value();
        PairTransform {
            m1: mean.0,
            m2: mean.1,
            s1: cov.sigma1,
            s2_rho: cov.sigma2 * r,
            s2_perp: cov.sigma2 * ((1.0 - r) * (1.0 + r)).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (
            self.m1 + self.s1 * z1,
            self.m2 + self.s2_rho * z1 + self.s2_perp * z2,
        )
    }
}

/// `count` i.i.d. draws from `N(mean, cov)`, reproducible for a fixed seed
/// regardless of thread count.
pub fn sample_bvn(mean: (f64, f64), cov: &Covariance2, count: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let cov = Covariance2::new(cov.sigma1, cov.sigma2, cov.rho)?;
    if !(mean.0.is_finite() && mean.1.is_finite()) {
        return Err(Error::Domain("mean must be finite".into()));
    }
    let t = PairTransform::new(mean, &cov);
    let chunks = count.div_ceil(CHUNK);
    let mut out: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let len = CHUNK.min(count - i * CHUNK);
            let mut rng = stream_rng(seed, i as u64);
            (0..len).map(|_| t.draw(&mut rng)).collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(count);
    for chunk in out.iter_mut() {
        flat.append(chunk);
    }
    Ok(flat)
}
