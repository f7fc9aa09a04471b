//! Reproducing kernels of the weighted Korobov-type spaces and their
//! permutation-invariant and shift-invariant variants.
//!
//! Every kernel is built from the univariate series
//! `omega_L(t) = 2 beta1^L sum_{m >= 1} cos(2 pi m t) R(m)^{-2 alpha L}`
//! (and `g_L = beta0^L + omega_L`), evaluated either in closed form via
//! Bernoulli polynomials or by a truncated series with a certified remainder.

use crate::error::{Error, Result};
use crate::perm::{cycle_sum, factorial_f64, sym_perm_sum, PermStructure, DEFAULT_PERMANENT_CAP};
use crate::weights::{integer_value, Generator, SpectralWeight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Largest Bernoulli degree evaluated from the coefficient table; higher
/// degrees converge so fast that the series is cheaper and as accurate.
pub const MAX_BERNOULLI_DEGREE: u32 = 16;

/// Largest invariant block for the cycle-type sums (`3^s` work).
pub const CYCLE_SUM_CAP: usize = 16;

/// Per-factor remainder target when the spectral half-width is automatic.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;

const MAX_HALF_WIDTH: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    ClosedForm,
    /// Truncated series; `half_width = None` picks the truncation per
    /// argument so the certified remainder stays below the default tolerance.
    Spectral { half_width: Option<u64> },
}

/// A value with a bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub value: f64,
    pub certificate: f64,
}

impl Evaluated {
    pub fn exact(value: f64) -> Self {
        Evaluated { value, certificate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub weight: SpectralWeight,
    pub perm: PermStructure,
    pub mode: EvalMode,
    #[serde(default = "default_cap")]
    pub permanent_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_PERMANENT_CAP
}

impl KernelSpec {
    pub fn new(weight: SpectralWeight, perm: PermStructure, mode: EvalMode) -> Result<Self> {
        if mode == EvalMode::ClosedForm && !weight.has_closed_form() {
            return Err(Error::InvalidParameter(
                "closed-form kernels need R(m) = 2 pi m and an integer alpha".into(),
            ));
        }
        Ok(KernelSpec { weight, perm, mode, permanent_cap: DEFAULT_PERMANENT_CAP })
    }

    /// Closed form when available, automatic spectral truncation otherwise.
    pub fn auto(weight: SpectralWeight, perm: PermStructure) -> Self {
        let mode = if weight.has_closed_form() {
            EvalMode::ClosedForm
        } else {
            EvalMode::Spectral { half_width: None }
        };
        KernelSpec { weight, perm, mode, permanent_cap: DEFAULT_PERMANENT_CAP }
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    /// `omega_L(t)` under this spec's evaluation mode.
    pub fn omega(&self, l: u32, t: f64) -> Evaluated {
        omega(&self.weight, l, t, self.mode)
    }

    /// `g_L(t) = beta0^L + omega_L(t)`.
    pub fn g(&self, l: u32, t: f64) -> Evaluated {
        let o = self.omega(l, t);
        Evaluated { value: self.weight.beta0().powi(l as i32) + o.value, certificate: o.certificate }
    }
}

const BERNOULLI: [(f64, f64); 17] = [
    (1.0, 1.0),
    (-1.0, 2.0),
    (1.0, 6.0),
    (0.0, 1.0),
    (-1.0, 30.0),
    (0.0, 1.0),
    (1.0, 42.0),
    (0.0, 1.0),
    (-1.0, 30.0),
    (0.0, 1.0),
    (5.0, 66.0),
    (0.0, 1.0),
    (-691.0, 2730.0),
    (0.0, 1.0),
    (7.0, 6.0),
    (0.0, 1.0),
    (-3617.0, 510.0),
];

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernoulli polynomial `B_n(x)` for `n <= 16`, by Horner on the expansion
/// `sum_k binom(n, k) B_k x^{n-k}`.
pub fn bernoulli_poly(n: u32, x: f64) -> f64 {
    assert!(n <= MAX_BERNOULLI_DEGREE);
    let mut acc = 0.0;
    for k in 0..=n {
        let (num, den) = BERNOULLI[k as usize];
        acc = acc * x + binomial(n, k) * num / den;
    }
    acc
}

fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `sum_{m >= 1} cos(2 pi m t) / (2 pi m)^{2k}` from the Bernoulli identity.
fn korobov_series_closed(k: u32, t: f64) -> f64 {
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * bernoulli_poly(2 * k, frac(t)) / (2.0 * factorial_f64(2 * k as usize))
}

fn closed_form_validated(k: u32) -> bool {
    const UNCHECKED: OnceLock<bool> = OnceLock::new();
    static CHECKS: [OnceLock<bool>; MAX_BERNOULLI_DEGREE as usize / 2 + 1] =
        [UNCHECKED; MAX_BERNOULLI_DEGREE as usize / 2 + 1];
    match CHECKS.get(k as usize) {
        Some(cell) if k >= 1 => *cell.get_or_init(|| {
            let w = SpectralWeight::sobolev(1.0).expect("valid weight");
            validate_closed_form(&w, k)
        }),
        _ => false,
    }
}

/// Compare the Bernoulli closed form with the certified truncated series at
/// 64 random arguments.
fn validate_closed_form(w: &SpectralWeight, k: u32) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + k as u64);
    (0..64).all(|_| {
        let t: f64 = rng.gen_range(0.0..1.0);
        let closed = korobov_series_closed(k, t);
        let series = series_sum(w.generator(), 2.0 * k as f64, t, Some(2_000));
        (closed - series.value).abs() <= series.certificate + 1e-13
    })
}

/// Half-width needed so that `a_{H+1} / |sin(pi t)| <= tol`, using the growth
/// bound `R(m) >= R(1) m / c_R`.
fn auto_half_width(generator: &Generator, c_r: f64, p: f64, t: f64, tol: f64) -> u64 {
    let s = (PI * frac(t)).sin().abs();
    let r1 = generator.eval(1);
    let target = if s > 1e-3 { tol * s } else { tol };
    // (c_R / (R(1) m))^p <= target
    let m = c_r / r1 * target.powf(-1.0 / p);
    (m.ceil() as u64).clamp(generator.table_len().max(8), MAX_HALF_WIDTH)
}

/// `sum_{m >= 1} cos(2 pi m t) R(m)^{-p}` truncated at `H` with a certified
/// remainder.
fn series_sum(generator: &Generator, p: f64, t: f64, half_width: Option<u64>) -> Evaluated {
    series_sum_with_cr(generator, 1.0, p, t, half_width)
}

fn series_sum_with_cr(generator: &Generator, c_r: f64, p: f64, t: f64, half_width: Option<u64>) -> Evaluated {
    let t = frac(t);
    let h = half_width.unwrap_or_else(|| auto_half_width(generator, c_r, p, t, DEFAULT_SPECTRAL_TOL));
    let int_p = integer_value(p).map(|k| k as i32);
    let term = |m: u64| {
        let g = generator.eval(m);
        match int_p {
            Some(k) => 1.0 / g.powi(k),
            None => g.powf(-p),
        }
    };
    let theta = 2.0 * PI * t;
    let (mut c, mut s) = (1.0f64, 0.0f64);
    let (cs, sn) = (theta.cos(), theta.sin());
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut abs_sum = 0.0;
    for m in 1..=h {
        if m % 256 == 0 {
            let a = theta * m as f64;
            c = a.cos();
            s = a.sin();
        } else {
            let nc = c * cs - s * sn;
            s = s * cs + c * sn;
            c = nc;
        }
        let a = term(m);
        let x = c * a;
        let tt = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - tt) + x } else { (x - tt) + sum };
        sum = tt;
        abs_sum += a;
    }
    sum += comp;
    let rounding = 512.0 * f64::EPSILON * abs_sum;
    if t == 0.0 {
        // cos = 1 throughout: the remainder is the tail sum itself
        let a_next = (h + 1) as f64;
        let (lo, hi) = tail_power_bounds(generator, c_r, p, a_next, term(h + 1));
        return Evaluated { value: sum + 0.5 * (lo + hi), certificate: 0.5 * (hi - lo) + rounding };
    }
    let tail_total = {
        let (_, hi) = tail_power_bounds(generator, c_r, p, (h + 1) as f64, term(h + 1));
        hi
    };
    let abel = term(h + 1) / (PI * t).sin().abs();
    Evaluated { value: sum, certificate: abel.min(tail_total) + rounding }
}

/// Bounds on `sum_{m >= a} R(m)^{-p}`, where `first = R(a)^{-p}`.
fn tail_power_bounds(generator: &Generator, c_r: f64, p: f64, a: f64, first: f64) -> (f64, f64) {
    if (a as u64) <= generator.table_len() {
        // inside the table only the growth bound R(m) >= R(1) m / c_R is known
        let r1 = generator.eval(1);
        let rest = (c_r / r1).powf(p) * a.powf(1.0 - p) / (p - 1.0);
        return (first, first + rest);
    }
    // R(m) = c m from here on; convex integral bounds
    let c = generator.slope();
    let anti = |x: f64| c.powf(-p) * x.powf(1.0 - p) / (p - 1.0);
    (anti(a) + 0.5 * first, anti(a - 0.5).max(anti(a) + 0.5 * first))
}

/// `omega_L(t) = 2 beta1^L sum_{m >= 1} cos(2 pi m t) R(m)^{-2 alpha L}`.
pub fn omega(w: &SpectralWeight, l: u32, t: f64, mode: EvalMode) -> Evaluated {
    let scale = 2.0 * w.beta1().powi(l as i32);
    let p = 2.0 * w.alpha() * l as f64;
    let closed_k = integer_value(w.alpha() * l as f64);
    let use_closed = mode == EvalMode::ClosedForm
        && w.has_closed_form()
        && closed_k.is_some_and(|k| 2 * k <= MAX_BERNOULLI_DEGREE && closed_form_validated(k));
    if use_closed {
        let k = closed_k.unwrap();
        return Evaluated::exact(scale * korobov_series_closed(k, t));
    }
    let hw = match mode {
        EvalMode::Spectral { half_width } => half_width,
        EvalMode::ClosedForm => None,
    };
    let e = series_sum_with_cr(w.generator(), w.c_r(), p, t, hw);
    Evaluated { value: scale * e.value, certificate: scale * e.certificate }
}

/// Univariate kernel `K_1(x, y) = beta0 + omega_1(x - y)`.
pub fn kernel_univariate(x: f64, y: f64, w: &SpectralWeight, mode: EvalMode) -> Evaluated {
    let o = omega(w, 1, x - y, mode);
    Evaluated { value: w.beta0() + o.value, certificate: o.certificate }
}

/// `(prod (|a_i| + e_i) - prod |a_i|)`: the error bound for a product of
/// certified factors.
fn product_certificate(factors: &[Evaluated]) -> f64 {
    let with: f64 = factors.iter().map(|f| f.value.abs() + f.certificate).product();
    let without: f64 = factors.iter().map(|f| f.value.abs()).product();
    (with - without).max(0.0)
}

/// Tensor-product kernel `K_d(x, y) = prod_l K_1(x_l, y_l)`.
pub fn kernel_tensor(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<Evaluated> {
    check_dims(spec, x, y)?;
    let f: Vec<Evaluated> =
        x.iter().zip(y).map(|(&a, &b)| kernel_univariate(a, b, &spec.weight, spec.mode)).collect();
    Ok(Evaluated { value: f.iter().map(|e| e.value).product(), certificate: product_certificate(&f) })
}

fn check_dims(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<()> {
    for v in [x, y] {
        if v.len() != spec.d() {
            return Err(Error::DimensionMismatch { expected: spec.d(), found: v.len() });
        }
    }
    Ok(())
}

/// `K_{d,I_d}(x, y) = (1/#S_d) sum_P prod_l K_1(x_{P(l)}, y_l)`: a permanent on
/// the invariant block times the remaining univariate factors.
pub fn kernel_perminv(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<Evaluated> {
    check_dims(spec, x, y)?;
    let inv = spec.perm.invariant();
    let s = inv.len();
    if s > spec.permanent_cap {
        return Err(Error::PermanentCap { size: s, cap: spec.permanent_cap });
    }
    let mut max_entry = 0.0f64;
    let mut max_cert = 0.0f64;
    let a: Vec<Vec<f64>> = inv
        .iter()
        .map(|&i| {
            inv.iter()
                .map(|&j| {
                    let e = kernel_univariate(x[i], y[j], &spec.weight, spec.mode);
                    max_entry = max_entry.max(e.value.abs());
                    max_cert = max_cert.max(e.certificate);
                    e.value
                })
                .collect()
        })
        .collect();
    let fixed: Vec<Evaluated> = spec
        .perm
        .free()
        .into_iter()
        .map(|l| kernel_univariate(x[l], y[l], &spec.weight, spec.mode))
        .collect();
    let fixed_vals: Vec<f64> = fixed.iter().map(|e| e.value).collect();
    let value = sym_perm_sum(&a, &fixed_vals, spec.permanent_cap)? / factorial_f64(s);
    let block_with = (max_entry + max_cert).powi(s as i32);
    let block_without = max_entry.powi(s as i32);
    let free_with: f64 = fixed.iter().map(|f| f.value.abs() + f.certificate).product();
    let free_without: f64 = fixed.iter().map(|f| f.value.abs()).product();
    let certificate = (block_with * free_with - block_without * free_without).max(0.0);
    Ok(Evaluated { value, certificate })
}

/// Shift-invariant kernel as a function of `v = x - y`:
/// `sum_h (M_d(h)! / #S_d) r(h)^{-1} exp(2 pi i h . v)`.
///
/// Grouping by the permutations that fix `h`, each cycle `C` contributes
/// `g_{|C|}(sum_{l in C} v_l)`, so the value is a cycle-type sum over the
/// invariant block times `g_1(v_l)` on the other coordinates.
pub fn kernel_shift_invariant_at(v: &[f64], spec: &KernelSpec) -> Result<Evaluated> {
    if v.len() != spec.d() {
        return Err(Error::DimensionMismatch { expected: spec.d(), found: v.len() });
    }
    let inv = spec.perm.invariant();
    let s = inv.len();
    if s > CYCLE_SUM_CAP {
        return Err(Error::SubsetCap { len: s, cap: CYCLE_SUM_CAP });
    }
    let mut table = vec![Evaluated::exact(0.0); 1 << s];
    for (mask, slot) in table.iter_mut().enumerate().skip(1) {
        let t: f64 = (0..s).filter(|&b| mask >> b & 1 == 1).map(|b| v[inv[b]]).sum();
        *slot = spec.g((mask as u32).count_ones(), t);
    }
    let value = cycle_sum(s, |m| table[m as usize].value);
    let with = cycle_sum(s, |m| table[m as usize].value.abs() + table[m as usize].certificate);
    let without = cycle_sum(s, |m| table[m as usize].value.abs());
    let fixed: Vec<Evaluated> = spec.perm.free().into_iter().map(|l| spec.g(1, v[l])).collect();
    let free_val: f64 = fixed.iter().map(|f| f.value).product();
    let free_with: f64 = fixed.iter().map(|f| f.value.abs() + f.certificate).product();
    let free_without: f64 = fixed.iter().map(|f| f.value.abs()).product();
    let norm = factorial_f64(s);
    Ok(Evaluated {
        value: value * free_val / norm,
        certificate: ((with * free_with - without * free_without) / norm).max(0.0),
    })
}

/// `K^shinv(x, y)`; depends on `x - y` only.
pub fn kernel_shift_invariant(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<Evaluated> {
    check_dims(spec, x, y)?;
    let v: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    kernel_shift_invariant_at(&v, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::PermStructure;

    fn naive_perminv(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
        // average over all permutations of the invariant coordinates
        fn perms(v: Vec<usize>) -> Vec<Vec<usize>> {
            if v.len() <= 1 {
                return vec![v];
            }
            let mut out = Vec::new();
            for i in 0..v.len() {
                let mut rest = v.clone();
                let head = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let inv = spec.perm.invariant().to_vec();
        let all = perms(inv.clone());
        let mut total = 0.0;
        for p in &all {
            let mut px = x.to_vec();
            for (k, &i) in inv.iter().enumerate() {
                px[i] = x[p[k]];
            }
            total += px
                .iter()
                .zip(y)
                .map(|(&a, &b)| kernel_univariate(a, b, &spec.weight, spec.mode).value)
                .product::<f64>();
        }
        total / all.len() as f64
    }

    #[test]
    fn bernoulli_low_degrees() {
        let x = 0.3;
        assert!((bernoulli_poly(2, x) - (x * x - x + 1.0 / 6.0)).abs() < 1e-15);
        let b4 = x.powi(4) - 2.0 * x.powi(3) + x * x - 1.0 / 30.0;
        assert!((bernoulli_poly(4, x) - b4).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_pass_validation() {
        for k in 1..=8 {
            assert!(closed_form_validated(k), "degree {}", 2 * k);
        }
    }

    #[test]
    fn diagonal_sobolev_value() {
        let w = SpectralWeight::sobolev(1.0).unwrap();
        let k = kernel_univariate(0.4, 0.4, &w, EvalMode::ClosedForm);
        assert!((k.value - (1.0 + 1.0 / 12.0)).abs() < 1e-15);
        let s = kernel_univariate(0.4, 0.4, &w, EvalMode::Spectral { half_width: Some(1000) });
        assert!((s.value - (1.0 + 1.0 / 12.0)).abs() <= s.certificate + 1e-15);
        assert!(s.certificate < 1e-8);
    }

    #[test]
    fn zero_beta1_gives_constant_kernel() {
        let w = SpectralWeight::korobov(1.0, 2.5, 1e-300).unwrap();
        let k = kernel_univariate(0.1, 0.8, &w, EvalMode::ClosedForm);
        assert!((k.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn closed_and_spectral_agree_alpha_two() {
        let w = SpectralWeight::korobov(2.0, 1.0, 1.0).unwrap();
        let c = kernel_univariate(0.3, 0.7, &w, EvalMode::ClosedForm);
        let s = kernel_univariate(0.3, 0.7, &w, EvalMode::Spectral { half_width: Some(1_000_000) });
        assert!((c.value - s.value).abs() < 1e-10);
        assert!((c.value - s.value).abs() <= s.certificate + 1e-14);
    }

    #[test]
    fn spectral_certificate_shrinks_when_doubling() {
        let w = SpectralWeight::korobov(1.5, 1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        let exact = kernel_univariate(0.2, 0.65, &w, EvalMode::Spectral { half_width: Some(4_000_000) });
        for h in [1000, 2000, 4000, 8000] {
            let e = kernel_univariate(0.2, 0.65, &w, EvalMode::Spectral { half_width: Some(h) });
            assert!(e.certificate < prev);
            assert!((e.value - exact.value).abs() <= e.certificate + exact.certificate);
            prev = e.certificate;
        }
    }

    #[test]
    fn perminv_matches_naive_average() {
        let w = SpectralWeight::sobolev(1.0).unwrap();
        let spec = KernelSpec::new(w, PermStructure::full(3).unwrap(), EvalMode::ClosedForm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let fast = kernel_perminv(&x, &y, &spec).unwrap().value;
            let slow = naive_perminv(&x, &y, &spec);
            assert!((fast - slow).abs() <= 1e-12 * slow.abs());
            let swapped = [x[1], x[0], x[2]];
            let s = kernel_perminv(&swapped, &y, &spec).unwrap().value;
            assert!((s - fast).abs() <= 1e-12 * fast.abs());
        }
    }

    #[test]
    fn no_invariance_is_tensor_product() {
        let w = SpectralWeight::korobov(2.0, 1.0, 0.7).unwrap();
        let spec = KernelSpec::new(w, PermStructure::none(3).unwrap(), EvalMode::ClosedForm).unwrap();
        let x = [0.1, 0.5, 0.9];
        let y = [0.3, 0.2, 0.25];
        let a = kernel_perminv(&x, &y, &spec).unwrap().value;
        let b = kernel_tensor(&x, &y, &spec).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn shift_invariant_two_dim_brute_force() {
        // (1/2)[K1(v1) K1(v2) + g_2(v1 + v2)] written out from the dual sum
        let w = SpectralWeight::sobolev(1.0).unwrap();
        let spec = KernelSpec::new(w.clone(), PermStructure::full(2).unwrap(), EvalMode::ClosedForm).unwrap();
        let v = [0.21, 0.67];
        let k = kernel_shift_invariant_at(&v, &spec).unwrap().value;
        let h = 200i64;
        let mut brute = 0.0;
        for a in -h..=h {
            for b in -h..=h {
                let m = if a == b { 2.0 } else { 1.0 };
                brute += m / 2.0 * w.r_inv(&[a, b]) * (2.0 * PI * (a as f64 * v[0] + b as f64 * v[1])).cos();
            }
        }
        assert!((k - brute).abs() < 2e-4, "{k} vs {brute}");
        let exact = 0.5
            * (kernel_univariate(v[0], 0.0, &w, EvalMode::ClosedForm).value
                * kernel_univariate(v[1], 0.0, &w, EvalMode::ClosedForm).value
                + spec.g(2, v[0] + v[1]).value);
        assert!((k - exact).abs() < 1e-14);
    }

    #[test]
    fn shift_invariant_equals_average_over_shifts() {
        let w = SpectralWeight::sobolev(1.0).unwrap();
        let spec = KernelSpec::new(w, PermStructure::full(2).unwrap(), EvalMode::ClosedForm).unwrap();
        let x = [0.13, 0.58];
        let y = [0.77, 0.31];
        // average of K_{d,I}({x+D}, {y+D}) over a fine grid of shifts
        let n = 400;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let xs: Vec<f64> = x.iter().zip(&d).map(|(a, b)| frac(a + b)).collect();
                let ys: Vec<f64> = y.iter().zip(&d).map(|(a, b)| frac(a + b)).collect();
                acc += kernel_perminv(&xs, &ys, &spec).unwrap().value;
            }
        }
        acc /= (n * n) as f64;
        let k = kernel_shift_invariant(&x, &y, &spec).unwrap().value;
        assert!((acc - k).abs() < 1e-5, "{acc} vs {k}");
    }

    #[test]
    fn shift_invariant_diagonal_is_constant() {
        let w = SpectralWeight::korobov(2.0, 1.0, 0.5).unwrap();
        let spec = KernelSpec::new(w, PermStructure::full(3).unwrap(), EvalMode::ClosedForm).unwrap();
        let a = kernel_shift_invariant(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], &spec).unwrap().value;
        let b = kernel_shift_invariant(&[0.9, 0.4, 0.0], &[0.9, 0.4, 0.0], &spec).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gram_matrix_is_positive_semidefinite() {
        let w = SpectralWeight::sobolev(1.0).unwrap();
        let spec = KernelSpec::new(w, PermStructure::from_one_based(3, &[1, 2]).unwrap(), EvalMode::ClosedForm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
        let g = nalgebra::DMatrix::from_fn(12, 12, |i, j| kernel_perminv(&pts[i], &pts[j], &spec).unwrap().value);
        assert!((g.clone() - g.transpose()).abs().max() < 1e-14);
        let eig = g.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));
    }
}
