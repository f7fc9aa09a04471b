//! Sums of products over multisets of frequencies.
//!
//! Every permutation-weighted series in this crate reduces to
//! `sum over multisets {h_1, ..., h_s} of Z` of `prod_v (c_v!)^gamma * prod sigma(h_i)`,
//! where `c_v` counts how often `v` occurs. Its generating function is
//! `prod_h sum_c (c!)^gamma sigma(h)^c t^c`, whose logarithm only involves the
//! power sums `sum_h sigma(h)^k`. Those have tight enclosures, so the whole
//! computation carries rigorous bounds.

use crate::enclosure::Enclosure;
use crate::error::{Error, Result};
use crate::perm::{factorial_f64, PermStructure};
use crate::weights::SpectralWeight;

/// `sum_{h in Z} r(h)^{-power k}`.
pub fn power_sum(w: &SpectralWeight, power: f64, k: u32) -> Result<Enclosure> {
    w.univariate_inv_sum(power * k as f64, true)
}

fn power_sum_from(w: &SpectralWeight, power: f64, k: u32, include_zero: bool) -> Result<Enclosure> {
    w.univariate_inv_sum(power * k as f64, include_zero)
}

/// Coefficients `b_k` of `log(sum_c a_c x^c)` with `a_0 = 1`, for `k = 1..=n`.
fn log_coefficients(a: &[f64], n: usize) -> Vec<f64> {
    let coef = |c: usize| a.get(c).copied().unwrap_or(0.0);
    let mut b = vec![0.0; n + 1];
    for k in 1..=n {
        let mut v = k as f64 * coef(k);
        for j in 1..k {
            v -= j as f64 * b[j] * coef(k - j);
        }
        b[k] = v / k as f64;
    }
    b
}

/// Coefficients of `exp(sum_{k >= 1} l_k t^k)` up to degree `n`.
fn exp_series(l: &[Enclosure], n: usize) -> Vec<Enclosure> {
    let mut f = vec![Enclosure::point(0.0); n + 1];
    f[0] = Enclosure::point(1.0);
    for m in 1..=n {
        let mut acc = Enclosure::point(0.0);
        for k in 1..=m {
            acc = acc + (l[k] * f[m - k]).scale(k as f64);
        }
        f[m] = acc.scale(1.0 / m as f64);
    }
    f
}

/// `sum over multisets of size s from Z` of `prod_v (c_v!)^gamma prod_i sigma(h_i)`
/// with `sigma(h) = r(h)^{-power}`.
pub fn multiset_sum(w: &SpectralWeight, power: f64, s: usize, gamma: f64) -> Result<Enclosure> {
    multiset_sum_over(w, power, s, gamma, true)
}

/// As [`multiset_sum`], drawing from `Z \ {0}` when `include_zero` is false.
pub fn multiset_sum_over(
    w: &SpectralWeight,
    power: f64,
    s: usize,
    gamma: f64,
    include_zero: bool,
) -> Result<Enclosure> {
    if s == 0 {
        return Ok(Enclosure::point(1.0));
    }
    if !(w.alpha() * power > 0.5) {
        return Err(Error::Domain(format!(
            "sum of r^(-{power}) diverges for alpha = {}",
            w.alpha()
        )));
    }
    let a: Vec<f64> = (0..=s).map(|c| factorial_f64(c).powf(gamma)).collect();
    let b = log_coefficients(&a, s);
    let mut l = vec![Enclosure::point(0.0); s + 1];
    for k in 1..=s {
        l[k] = power_sum_from(w, power, k as u32, include_zero)?.scale(b[k]);
    }
    let f = exp_series(&l, s);
    Ok(f[s].inflate(64.0 * s as f64 * f64::EPSILON).clamp_nonneg())
}

/// `sum_{j} lambda_{d,j}^{power}` over the eigenvalues of the `I_d`-invariant
/// space: the non-invariant coordinates contribute a plain power of the
/// univariate sum, the invariant block a multiset sum.
pub fn eigenvalue_power_sum(w: &SpectralWeight, ps: &PermStructure, power: f64) -> Result<Enclosure> {
    let uni = power_sum(w, power, 1)?;
    let free = uni.powi((ps.d() - ps.s()) as i32);
    Ok(free * multiset_sum(w, power, ps.s(), 0.0)?)
}

/// `sum_{h in Z^d} (M_d(h)! / #S_d)^{1/lambda} r(h)^{-1/lambda}`, including `h = 0`.
pub fn weighted_lattice_sum(w: &SpectralWeight, ps: &PermStructure, lambda: f64) -> Result<Enclosure> {
    let power = 1.0 / lambda;
    let gamma = power - 1.0;
    let uni = power_sum(w, power, 1)?;
    let free = uni.powi((ps.d() - ps.s()) as i32);
    let block = multiset_sum(w, power, ps.s(), gamma)?.scale(factorial_f64(ps.s()).powf(-gamma));
    Ok(free * block)
}
