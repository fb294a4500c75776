//! Standard normal density and distribution function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Below this the tail quantities switch to the asymptotic series.
const TAIL_SWITCH: f64 = -30.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `Φ(x) = ½·erfc(−x/√2)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `Φ(x) − Φ(−x) = erf(x/√2)`, accurate for small `x`.
pub fn std_normal_central(x: f64) -> f64 {
    libm::erf(x * FRAC_1_SQRT_2)
}

/// `1 − 1/z² + 3/z⁴ − …` with `Φ(z) ≈ φ(z)/(−z) · series` for `z → −∞`.
fn mills_series(z: f64) -> f64 {
    let r = 1.0 / (z * z);
    1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))))
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        std_normal_log_pdf(x) - (-x).ln() + mills_series(x).ln()
    } else if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else {
        std_normal_cdf(x).ln()
    }
}

/// `φ(z)/Φ(z)`, finite for every finite `z`.
pub fn inverse_mills_ratio(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        -z / mills_series(z)
    } else {
        std_normal_pdf(z) / std_normal_cdf(z)
    }
}
