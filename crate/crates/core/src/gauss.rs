//! Standard normal CDF, quantile and log-CDF.
//!
//! `Φ` is evaluated through the complementary error function on the side
//! where it does not cancel, so the result carries full relative accuracy in
//! the lower tail and `Φ(x) + Φ(-x) = 1` holds to rounding. The quantile starts
//! from Acklam's rational approximation and is polished by Halley steps
//! against `Φ` itself.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            domain(format!("probability must lie in [0, 1], got {value}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Checked `Φ(x)`. Non-finite input is a domain error.
pub fn std_normal_cdf(x: f64) -> Result<Probability> {
    if !x.is_finite() {
        return domain(format!("normal cdf requires a finite argument, got {x}"));
    }
    Ok(Probability(phi(x)))
}

/// Checked `Φ⁻¹(p)`. `p = 0` and `p = 1` map to `-∞` and `+∞`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("normal quantile requires p in [0, 1], got {p}"));
    }
    Ok(phi_inv(p))
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Unchecked `Φ(x)`; saturates to 0/1 at `∓∞` and propagates NaN.
#[inline]
pub fn phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// `ln Φ(x)`, accurate far into the lower tail where `Φ` underflows.
pub fn log_phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        // ln(1 - Φ(-x))
        return (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p();
    }
    if x > -30.0 {
        return phi(x).ln();
    }
    // Mills-ratio asymptotic series: Φ(x) = φ(x)/|x| · Σ (-1)^k (2k-1)!! / x^{2k}
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=10 {
        term *= -((2 * k - 1) as f64) * inv_x2;
        sum += term;
    }
    -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + sum.ln()
}

/// Unchecked `Φ⁻¹(p)`: `-∞` at 0, `+∞` at 1, NaN outside `[0, 1]`.
pub fn phi_inv(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    // Refine on the lower half where p itself is represented exactly.
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

fn lower_quantile(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..3 {
        let step = if p < 1e-280 {
            // Work in log space where Φ(x) would underflow the error term.
            let log_ratio = log_phi(x) - p.ln();
            // d/dx ln Φ(x) = φ(x)/Φ(x)
            let hazard = (pdf_log(x) - log_phi(x)).exp();
            log_ratio / hazard
        } else {
            let e = phi(x) - p;
            let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
            u / (1.0 + 0.5 * x * u)
        };
        if !step.is_finite() {
            break;
        }
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[inline]
fn pdf_log(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Acklam's rational approximation, relative error about 1.15e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values (mpmath ncdf), rounded to 20 significant digits.
    #[allow(clippy::excessive_precision)]
    const CDF_REFERENCE: &[(f64, f64)] = &[
        (-37.0, 5.725_571_222_524_576_8e-300),
        (-30.0, 4.906_713_927_148_187e-198),
        (-20.0, 2.753_624_118_606_233_7e-89),
        (-10.0, 7.619_853_024_160_526e-24),
        (-8.0, 6.220_960_574_271_784e-16),
        (-5.0, 2.866_515_718_791_939e-7),
        (-3.0, 0.001_349_898_031_630_094_5),
        (-2.0, 0.022_750_131_948_179_207),
        (-1.5, 0.066_807_201_268_858_066),
        (-1.0, 0.158_655_253_931_457_05),
        (-0.5, 0.308_537_538_725_986_9),
        (-0.001, 0.499_601_057_786_088_94),
        (0.25, 0.598_706_325_682_923_7),
        (0.5, 0.691_462_461_274_013_1),
        (1.0, 0.841_344_746_068_542_9),
        (2.0, 0.977_249_868_051_820_8),
        (3.0, 0.998_650_101_968_369_9),
        (5.0, 0.999_999_713_348_428_1),
        (8.0, 0.999_999_999_999_999_4),
    ];

    #[test]
    fn cdf_matches_high_precision_reference() {
        for &(x, want) in CDF_REFERENCE {
            let got = std_normal_cdf(x).unwrap().value();
            assert!((got - want).abs() <= 1e-14, "x={x} got={got} want={want}");
            if want < 1e-3 {
                // lower tail keeps relative accuracy as well
                assert!(((got - want) / want).abs() < 1e-12, "x={x} rel err");
            }
        }
    }

    #[test]
    fn cdf_named_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap().value(), 0.5);
        assert!((std_normal_cdf(-1.0).unwrap().value() - 0.158_655_253_931).abs() < 1e-12);
        assert_eq!(std_normal_cdf(40.0).unwrap().value(), 1.0);
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn quantile_named_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let x = std_normal_quantile(std_normal_cdf(1.959_964).unwrap().value()).unwrap();
        assert!((x - 1.959_964).abs() < 1e-12, "{x}");
        let x = std_normal_quantile(0.158_655_253_931).unwrap();
        assert!((x + 1.0).abs() < 1e-10, "{x}");
        assert_eq!(std_normal_quantile(0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(std_normal_quantile(1.0).unwrap(), f64::INFINITY);
        assert!(std_normal_quantile(-0.1).is_err());
        assert!(std_normal_quantile(1.5).is_err());
    }

    #[test]
    fn quantile_tail_reference() {
        // mpmath findroot on ln Φ at 60 digits
        let cases = [
            (1e-300, -37.047_096_299_361_2),
            (1e-20, -9.262_340_089_798_408),
            (0.02, -2.053_748_910_631_823),
            (0.3, -0.524_400_512_708_040_8),
            (0.975, 1.959_963_984_540_054),
        ];
        for (p, want) in cases {
            let got = phi_inv(p);
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "p={p} got={got}");
        }
    }

    #[test]
    fn round_trip_grid() {
        let n = 10_000;
        let mut prev_p = 0.0;
        let mut prev_x = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = -8.0 + 16.0 * i as f64 / n as f64;
            let p = phi(x);
            let back = phi_inv(p);
            // p near 1 holds only absolute precision: one ulp moves x by eps / pdf
            let tol = if x > 0.0 { 1e-10 + f64::EPSILON / pdf(x) } else { 1e-10 };
            assert!((back - x).abs() <= tol, "x={x} back={back}");
            if x > 0.0 {
                assert!((phi_inv(phi(-x)) + x).abs() <= 1e-10, "x={x}");
            }
            assert!(p >= prev_p);
            assert!((phi(x) + phi(-x) - 1.0).abs() <= 1e-15, "symmetry at {x}");
            prev_p = p;
            if i > 0 {
                // Φ saturates at 1 near x=8; compare quantiles where p < 1
                if p < 1.0 {
                    assert!(back >= prev_x, "quantile decreasing at {x}");
                }
            }
            prev_x = back;
        }
    }

    #[test]
    fn quantile_inverts_cdf_to_1e13() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = phi_inv(p);
            assert!((phi(x) - p).abs() <= 1e-13, "p={p}");
        }
    }

    #[test]
    fn log_phi_tail_matches_reference() {
        for &(x, want) in CDF_REFERENCE {
            let got = log_phi(x);
            assert!((got - want.ln()).abs() < 1e-12 * want.ln().abs().max(1.0), "x={x}");
        }
        // Φ(-40) underflows, ln Φ does not: ln Φ(-40) from mpmath = -804.60844201375379
        let got = log_phi(-40.0);
        assert!((got + 804.608_442_013_753_8).abs() < 1e-9, "{got}");
    }

    #[test]
    fn probability_bounds() {
        assert!(Probability::new(0.0).is_ok());
        assert!(Probability::new(1.0).is_ok());
        assert!(Probability::new(1.0 + 1e-12).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }
}
