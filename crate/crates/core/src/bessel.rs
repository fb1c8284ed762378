//! Bessel functions of the first kind `J_ν(z)` for real `z ≥ 0`.
//!
//! Supported orders: `ν = -1/2`, any integer or half-integer `ν ≥ 0`, and any
//! real `ν ∈ [0, 10]`.
//!
//! Evaluation paths:
//! * half-integer orders: closed trigonometric forms, lifted by upward
//!   recurrence when `z` exceeds the order;
//! * `z ≤ SERIES_MAX`: ascending series;
//! * moderate `z`: Miller backward recurrence normalized by a Neumann sum;
//! * large `z`: Hankel asymptotic expansion.

use crate::error::{Error, Result};

const SERIES_MAX: f64 = 8.0;
const HANKEL_MIN: f64 = 30.0;

fn is_half_integer(nu: f64) -> bool {
    (2.0 * nu).fract() == 0.0 && nu.fract() != 0.0
}

fn is_supported(nu: f64) -> bool {
    if !nu.is_finite() {
        return false;
    }
    if nu == -0.5 {
        return true;
    }
    if nu < 0.0 {
        return false;
    }
    nu <= 10.0 || (2.0 * nu).fract() == 0.0
}

/// `J_ν(z)`. Absolute error below about `1e-13` for `z ≤ 200`.
pub fn bessel_j(nu: f64, z: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("bessel_j argument z = {z} must be finite and >= 0")));
    }
    if !is_supported(nu) {
        return Err(Error::Domain(format!("bessel_j order nu = {nu} unsupported")));
    }
    if z == 0.0 {
        return Ok(if nu == 0.0 {
            1.0
        } else if nu > 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    if is_half_integer(nu) {
        return Ok(half_integer(nu, z));
    }
    Ok(general(nu, z))
}

/// `J_{l+1/2}(z)` from `sin`/`cos` closed forms.
fn half_integer(nu: f64, z: f64) -> f64 {
    let l = (nu - 0.5).round() as i64;
    let pref = (2.0 / (std::f64::consts::PI * z)).sqrt();
    if l == -1 {
        return pref * z.cos();
    }
    if l == 0 {
        return pref * z.sin();
    }
    if z > l as f64 {
        // Riccati–Bessel upward recurrence: s_{k+1} = (2k+1)/z s_k - s_{k-1}
        let mut prev = z.cos();
        let mut cur = z.sin();
        for k in 0..l {
            let next = (2 * k + 1) as f64 / z * cur - prev;
            prev = cur;
            cur = next;
        }
        return pref * cur;
    }
    general(nu, z)
}

fn general(nu: f64, z: f64) -> f64 {
    if z <= SERIES_MAX {
        series(nu, z)
    } else if z >= HANKEL_MIN + nu * nu {
        hankel(nu, z)
    } else {
        miller(nu, z)
    }
}

/// Ascending series `Σ (-1)^k (z/2)^{2k+ν} / (k! Γ(k+ν+1))`.
pub(crate) fn series(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let mut term = half.powf(nu) / libm::tgamma(nu + 1.0);
    let mut sum = term;
    let q = half * half;
    for k in 1..400 {
        let kf = k as f64;
        term *= -q / (kf * (kf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && kf > q.sqrt() {
            break;
        }
    }
    sum
}

fn hankel(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * z);
        let a = term.abs();
        if a > last {
            break;
        }
        last = a;
        // a_k enters P for even k, Q for odd k, with alternating signs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if a < 1e-17 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Miller backward recurrence on orders `μ + k`, `μ = frac(ν)`, normalized by
/// `(z/2)^μ = Σ_k (μ+2k) Γ(μ+k)/k! J_{μ+2k}(z)`.
fn miller(nu: f64, z: f64) -> f64 {
    let m = nu.floor() as usize;
    let mu = nu - m as f64;
    let start = (z + 12.0 * z.cbrt() + 40.0).ceil() as usize + m;
    let start = start + (start % 2);
    let mut upper = 0.0f64;
    let mut cur = 1e-300f64;
    let mut target = 0.0f64;
    let mut norm = 0.0f64;
    // c_0 = Γ(μ+1); c_k = (μ+2k) g_k with g_k = Γ(μ+k)/k!
    let gamma1 = libm::tgamma(mu + 1.0);
    let mut coefs = Vec::with_capacity(start / 2 + 1);
    coefs.push(gamma1);
    let mut g = gamma1;
    for k in 1..=start / 2 {
        if k > 1 {
            g *= (mu + (k - 1) as f64) / k as f64;
        }
        coefs.push((mu + 2.0 * k as f64) * g);
    }
    for k in (0..=start).rev() {
        if k == m {
            target = cur;
        }
        if k % 2 == 0 {
            norm += coefs[k / 2] * cur;
        }
        if k == 0 {
            break;
        }
        let order = mu + k as f64;
        let lower = 2.0 * order / z * cur - upper;
        upper = cur;
        cur = lower;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            upper *= 1e-250;
            target *= 1e-250;
            norm *= 1e-250;
        }
    }
    target * (0.5 * z).powf(mu) / norm
}
