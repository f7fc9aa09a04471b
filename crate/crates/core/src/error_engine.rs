//! Worst-case and mean-squared errors, the component-by-component objective
//! and the constants entering the error bounds.
//!
//! Each squared error is available through at least two routes: kernel sums
//! over the nodes and truncated dual-lattice sums with an explicit bound on
//! the omitted spectral mass.

use crate::enclosure::Enclosure;
use crate::error::{Error, Result};
use crate::kernels::{kernel_perminv, kernel_shift_invariant_at, Evaluated, KernelSpec, CYCLE_SUM_CAP};
use crate::lattice::{LatticeRule, WeightedCubature};
use crate::perm::{cycle_sum, factorial_f64};
use crate::symsum::{multiset_sum_over, weighted_lattice_sum};
use crate::weights::EtaStar;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

/// Largest `l - 1` for which the `2^{l-1}` subsets of the CBC objective are
/// enumerated.
pub const SUBSET_CAP: usize = 20;

/// Largest number of lattice points visited by a truncated dual sum.
pub const MAX_BOX_POINTS: u64 = 400_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    KernelSum,
    SpectralDualSum,
    SubsetDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: ErrorMethod,
    /// Squared error.
    pub value: f64,
    /// Bound on the omitted spectral mass and truncation error.
    pub certificate: f64,
    /// Seconds.
    pub wall_time: f64,
    #[serde(default)]
    pub flagged: bool,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl ErrorReport {
    fn new(method: ErrorMethod, value: f64, certificate: f64, start: Instant) -> Self {
        ErrorReport {
            method,
            value: value.max(0.0),
            certificate,
            wall_time: start.elapsed().as_secs_f64(),
            flagged: false,
            params: serde_json::Value::Null,
        }
    }

    /// Agreement within the two certificates plus round-off.
    pub fn agrees_with(&self, other: &ErrorReport) -> bool {
        let scale = self.value.abs().max(other.value.abs());
        (self.value - other.value).abs() <= self.certificate + other.certificate + 1e-12 * scale + 1e-15
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Initial error `e(0, d)^2 = beta0^d`.
pub fn initial_error_sq(spec: &KernelSpec) -> f64 {
    spec.weight.beta0().powi(spec.d() as i32)
}

/// `(1/N^2) sum_{i,j} w_i w_j K(t_i, t_j)`, row sums in parallel and combined
/// in order so the result does not depend on the thread count.
fn kernel_double_sum<F>(rule: &WeightedCubature, kernel: F) -> Result<Evaluated>
where
    F: Fn(&[f64], &[f64]) -> Result<Evaluated> + Sync,
{
    let n = rule.len();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut v, mut c) = (0.0, 0.0);
            let ti = &rule.nodes[i];
            for j in i..n {
                let k = kernel(ti, &rule.nodes[j])?;
                let f = if i == j { 1.0 } else { 2.0 };
                let ww = rule.weights[i] * rule.weights[j];
                v += f * ww * k.value;
                c += f * ww.abs() * k.certificate;
            }
            Ok((v, c))
        })
        .collect::<Result<_>>()?;
    let nn = (n * n) as f64;
    let (v, c) = rows.iter().fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1));
    Ok(Evaluated { value: v / nn, certificate: c / nn })
}

fn check_rule_dim(rule: &WeightedCubature, spec: &KernelSpec) -> Result<()> {
    match rule.d() {
        Some(d) if d != spec.d() => Err(Error::DimensionMismatch { expected: spec.d(), found: d }),
        _ => Ok(()),
    }
}

/// `e^wor(Q)^2 = int int K - (2/N) sum_j w_j int K(x, t_j) dx + (1/N^2) sum w_i w_j K(t_i, t_j)`
/// for the invariant kernel; both integrals equal `beta0^d`.
pub fn worst_case_error_sq(rule: &WeightedCubature, spec: &KernelSpec) -> Result<ErrorReport> {
    let start = Instant::now();
    check_rule_dim(rule, spec)?;
    let b0d = initial_error_sq(spec);
    if rule.is_empty() {
        return Ok(ErrorReport::new(ErrorMethod::KernelSum, b0d, 0.0, start));
    }
    let double = kernel_double_sum(rule, |x, y| kernel_perminv(x, y, spec))?;
    let single: f64 = rule.weights.iter().sum::<f64>() / rule.len() as f64;
    let value = b0d - 2.0 * single * b0d + double.value;
    let rounding = 1e-14 * (b0d + double.value.abs());
    Ok(ErrorReport::new(ErrorMethod::KernelSum, value, double.certificate + rounding, start))
}

/// Worst-case error in the shift-invariant space for a general rule.
pub fn shift_invariant_error_sq(rule: &WeightedCubature, spec: &KernelSpec) -> Result<ErrorReport> {
    let start = Instant::now();
    check_rule_dim(rule, spec)?;
    let b0d = initial_error_sq(spec);
    if rule.is_empty() {
        return Ok(ErrorReport::new(ErrorMethod::KernelSum, b0d, 0.0, start));
    }
    let double = kernel_double_sum(rule, |x, y| {
        let v: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        kernel_shift_invariant_at(&v, spec)
    })?;
    let single: f64 = rule.weights.iter().sum::<f64>() / rule.len() as f64;
    let value = b0d - 2.0 * single * b0d + double.value;
    let rounding = 1e-14 * (b0d + double.value.abs());
    Ok(ErrorReport::new(ErrorMethod::KernelSum, value, double.certificate + rounding, start))
}

/// Mean squared worst-case error over all shifts of an unshifted lattice
/// rule, by the kernel route: differences of lattice points are lattice
/// points, so `E^2 = (1/n) sum_j K^shinv(t_j) - beta0^d`.
pub fn mean_sq_error_kernel(rule: &LatticeRule, spec: &KernelSpec) -> Result<ErrorReport> {
    let start = Instant::now();
    if rule.d() != spec.d() {
        return Err(Error::DimensionMismatch { expected: spec.d(), found: rule.d() });
    }
    let base = rule.unshifted();
    let vals: Vec<Evaluated> = (0..base.n())
        .into_par_iter()
        .map(|j| kernel_shift_invariant_at(&base.point(j), spec))
        .collect::<Result<_>>()?;
    let n = base.n() as f64;
    let (v, c) = vals.iter().fold((0.0, 0.0), |a, e| (a.0 + e.value, a.1 + e.certificate));
    let b0d = initial_error_sq(spec);
    let mut r = ErrorReport::new(ErrorMethod::KernelSum, v / n - b0d, c / n + 1e-14 * v / n, start);
    r.flagged = is_degenerate(rule);
    Ok(r)
}

fn is_degenerate(rule: &LatticeRule) -> bool {
    rule.z().iter().all(|&z| z == 0)
}

/// `omega_L(k / n)` for `L = 1..=max_l` and `k = 0..n`.
#[derive(Debug, Clone)]
pub struct OmegaTable {
    n: u64,
    values: Vec<f64>,
    certs: Vec<f64>,
    exact: bool,
}

impl OmegaTable {
    pub fn new(spec: &KernelSpec, n: u64, max_l: usize) -> Self {
        let max_l = max_l.max(1);
        let nn = n as usize;
        let evals: Vec<Evaluated> = (0..max_l * nn)
            .into_par_iter()
            .map(|idx| {
                let l = (idx / nn + 1) as u32;
                let k = (idx % nn) as f64;
                spec.omega(l, k / n as f64)
            })
            .collect();
        let exact = evals.iter().all(|e| e.certificate == 0.0);
        OmegaTable {
            n,
            values: evals.iter().map(|e| e.value).collect(),
            certs: evals.iter().map(|e| e.certificate).collect(),
            exact,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    #[inline]
    fn value(&self, l: usize, k: u64) -> f64 {
        self.values[(l - 1) * self.n as usize + k as usize]
    }

    #[inline]
    fn cert(&self, l: usize, k: u64) -> f64 {
        self.certs[(l - 1) * self.n as usize + k as usize]
    }
}

/// `sum_{h_u in (Z \ 0)^u, dual} (M_u(h_u)! / #S_u) r^{-1}(h_u)` for the
/// coordinates `u` with generating-vector entries `zu`, via
/// `(1/n) sum_j` of a cycle-type sum of `omega` values.
fn block_sum(zu: &[u64], invariant: &[bool], table: &OmegaTable) -> Result<Evaluated> {
    let n = table.n;
    let inv_z: Vec<u64> = zu.iter().zip(invariant).filter(|(_, &i)| i).map(|(&z, _)| z).collect();
    let free_z: Vec<u64> = zu.iter().zip(invariant).filter(|(_, &i)| !i).map(|(&z, _)| z).collect();
    let s = inv_z.len();
    if s > CYCLE_SUM_CAP {
        return Err(Error::SubsetCap { len: s, cap: CYCLE_SUM_CAP });
    }
    let mut zsum = vec![0u64; 1 << s];
    for mask in 1..(1usize << s) {
        let low = mask.trailing_zeros() as usize;
        zsum[mask] = (zsum[mask & (mask - 1)] + inv_z[low]) % n;
    }
    let norm = factorial_f64(s);
    let (mut total, mut cert) = (0.0, 0.0);
    for j in 0..n {
        let arg = |zz: u64| ((j as u128 * zz as u128) % n as u128) as u64;
        let inv_val = cycle_sum(s, |m| table.value(m.count_ones() as usize, arg(zsum[m as usize])));
        let free_val: f64 = free_z.iter().map(|&z| table.value(1, arg(z))).product();
        total += inv_val * free_val;
        if !table.exact {
            let with = cycle_sum(s, |m| {
                let k = arg(zsum[m as usize]);
                let l = m.count_ones() as usize;
                table.value(l, k).abs() + table.cert(l, k)
            });
            let without = cycle_sum(s, |m| table.value(m.count_ones() as usize, arg(zsum[m as usize])).abs());
            let fw: f64 = free_z.iter().map(|&z| table.value(1, arg(z)).abs() + table.cert(1, arg(z))).product();
            let fo: f64 = free_z.iter().map(|&z| table.value(1, arg(z)).abs()).product();
            cert += with * fw - without * fo;
        }
    }
    let nf = n as f64;
    Ok(Evaluated {
        value: total / (nf * norm),
        certificate: cert.max(0.0) / (nf * norm) + 1e-15 * total.abs() / (nf * norm),
    })
}

/// The CBC objective `B_{I_d,l}(z_1, ..., z_l)` for `l = prefix.len()`,
/// evaluated exactly from a table of `omega` values.
pub fn cbc_objective(prefix: &[u64], spec: &KernelSpec, table: &OmegaTable) -> Result<Evaluated> {
    let l = prefix.len();
    if l == 0 || l > spec.d() {
        return Err(Error::InvalidParameter(format!("prefix length {l} outside 1..={}", spec.d())));
    }
    if l - 1 > SUBSET_CAP {
        return Err(Error::SubsetCap { len: l - 1, cap: SUBSET_CAP });
    }
    let n = table.n;
    let beta0 = spec.weight.beta0();
    let (mut value, mut cert) = (0.0, 0.0);
    for lower in 0u64..(1u64 << (l - 1)) {
        let u_mask = lower | (1u64 << (l - 1));
        let coords: Vec<usize> = (0..l).filter(|&c| u_mask >> c & 1 == 1).collect();
        let zu: Vec<u64> = coords.iter().map(|&c| prefix[c] % n).collect();
        let inv: Vec<bool> = coords.iter().map(|&c| spec.perm.is_invariant(c)).collect();
        let c_u = spec.perm.restriction(u_mask, beta0).constant;
        let b = block_sum(&zu, &inv, table)?;
        value += b.value / c_u;
        cert += b.certificate / c_u;
    }
    Ok(Evaluated { value, certificate: cert })
}

fn table_for(spec: &KernelSpec, n: u64) -> OmegaTable {
    OmegaTable::new(spec, n, spec.perm.s())
}

/// `E^2 = beta0^d sum_l B_{I_d,l}(z_1..z_l)`.
pub fn mean_sq_error_decomposed(rule: &LatticeRule, spec: &KernelSpec) -> Result<ErrorReport> {
    let start = Instant::now();
    if rule.d() != spec.d() {
        return Err(Error::DimensionMismatch { expected: spec.d(), found: rule.d() });
    }
    let table = table_for(spec, rule.n());
    let b0d = initial_error_sq(spec);
    let (mut v, mut c) = (0.0, 0.0);
    for l in 1..=rule.d() {
        let b = cbc_objective(&rule.z()[..l], spec, &table)?;
        v += b.value;
        c += b.certificate;
    }
    let mut r = ErrorReport::new(ErrorMethod::SubsetDecomposition, b0d * v, b0d * c, start);
    r.flagged = is_degenerate(rule);
    Ok(r)
}

/// Univariate `r^{-1}(k)` for `k in -h..=h`.
fn univariate_table(spec: &KernelSpec, h: i64) -> Vec<f64> {
    (-h..=h).map(|k| spec.weight.r_inv_factor(k)).collect()
}

fn check_box(d: usize, h: u64) -> Result<()> {
    let side = 2 * h + 1;
    let pts = (side as f64).powi(d as i32);
    if pts > MAX_BOX_POINTS as f64 {
        return Err(Error::InvalidParameter(format!(
            "truncation box with half-width {h} in dimension {d} has {pts:.3e} points"
        )));
    }
    Ok(())
}

/// `M(h)! / s!` for the invariant entries `vals` (sorted in place).
fn multiplicity_ratio(vals: &mut [i64], fact: &[f64]) -> f64 {
    vals.sort_unstable();
    let mut m = 1.0;
    let mut run = 1;
    for i in 1..vals.len() {
        if vals[i] == vals[i - 1] {
            run += 1;
        } else {
            m *= fact[run];
            run = 1;
        }
    }
    if !vals.is_empty() {
        m *= fact[run];
    }
    m / fact[vals.len()]
}

/// Visit every `h` in `[-H, H]^d` (or with zero excluded per coordinate),
/// splitting the work over the first coordinate. `f` receives `h` and must
/// return a pair of partial sums.
fn box_sum<F>(d: usize, h: i64, skip_zero: bool, f: F) -> (f64, f64)
where
    F: Fn(&[i64]) -> (f64, f64) + Sync,
{
    let vals: Vec<i64> = (-h..=h).filter(|&v| !(skip_zero && v == 0)).collect();
    let parts: Vec<(f64, f64)> = vals
        .par_iter()
        .map(|&first| {
            let mut idx = vec![0usize; d - 1];
            let mut cur = vec![first; d];
            let (mut a, mut b) = (0.0, 0.0);
            loop {
                for (c, &i) in idx.iter().enumerate() {
                    cur[c + 1] = vals[i];
                }
                let (x, y) = f(&cur);
                a += x;
                b += y;
                let mut c = 0;
                loop {
                    if c == d - 1 {
                        return (a, b);
                    }
                    idx[c] += 1;
                    if idx[c] < vals.len() {
                        break;
                    }
                    idx[c] = 0;
                    c += 1;
                }
            }
        })
        .collect();
    parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

/// Mean squared error by the truncated dual-lattice sum
/// `sum_{0 != h in [-H,H]^d, h.z = 0 mod n} (M_d(h)! / #S_d) r^{-1}(h)`.
/// The certificate is the total weight outside the box.
pub fn mean_sq_error_spectral(rule: &LatticeRule, spec: &KernelSpec, h: u64) -> Result<ErrorReport> {
    let start = Instant::now();
    let d = spec.d();
    if rule.d() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rule.d() });
    }
    check_box(d, h)?;
    let hh = h as i64;
    let uni = univariate_table(spec, hh);
    let fact: Vec<f64> = (0..=d).map(factorial_f64).collect();
    let inv = spec.perm.invariant().to_vec();
    let z = rule.z().to_vec();
    let n = rule.n() as i128;
    let (dual, all) = box_sum(d, hh, false, |hv| {
        if hv.iter().all(|&x| x == 0) {
            return (0.0, 0.0);
        }
        let r: f64 = hv.iter().map(|&x| uni[(x + hh) as usize]).product();
        let mut iv: Vec<i64> = inv.iter().map(|&i| hv[i]).collect();
        let w = multiplicity_ratio(&mut iv, &fact) * r;
        let dot = hv.iter().zip(&z).fold(0i128, |a, (&x, &zz)| a + x as i128 * zz as i128);
        if dot.rem_euclid(n) == 0 {
            (w, w)
        } else {
            (0.0, w)
        }
    });
    let b0d = initial_error_sq(spec);
    let total = weighted_lattice_sum(&spec.weight, &spec.perm, 1.0)?.hi - b0d;
    let certificate = (total - all).max(0.0) + 1e-13 * total;
    let mut r = ErrorReport::new(ErrorMethod::SpectralDualSum, dual, certificate, start);
    r.flagged = is_degenerate(rule) || certificate > r.value;
    r.params = serde_json::json!({ "half_width": h });
    Ok(r)
}

/// `B_{I_d,l}` by enumerating `h_u` in the truncated box for every `u`.
pub fn cbc_objective_spectral(prefix: &[u64], spec: &KernelSpec, n: u64, h: u64) -> Result<Evaluated> {
    let l = prefix.len();
    if l == 0 || l > spec.d() {
        return Err(Error::InvalidParameter(format!("prefix length {l} outside 1..={}", spec.d())));
    }
    if l - 1 > SUBSET_CAP {
        return Err(Error::SubsetCap { len: l - 1, cap: SUBSET_CAP });
    }
    check_box(l, h)?;
    let hh = h as i64;
    let uni = univariate_table(spec, hh);
    let w = &spec.weight;
    let fact: Vec<f64> = (0..=l).map(factorial_f64).collect();
    let nonzero_sum = w.univariate_inv_sum(1.0, false)?;
    let (mut value, mut cert) = (0.0, 0.0);
    for lower in 0u64..(1u64 << (l - 1)) {
        let u_mask = lower | (1u64 << (l - 1));
        let coords: Vec<usize> = (0..l).filter(|&c| u_mask >> c & 1 == 1).collect();
        let zu: Vec<i128> = coords.iter().map(|&c| (prefix[c] % n) as i128).collect();
        let inv_pos: Vec<usize> =
            (0..coords.len()).filter(|&k| spec.perm.is_invariant(coords[k])).collect();
        let su = inv_pos.len();
        let (dual, all) = box_sum(coords.len(), hh, true, |hv| {
            let r: f64 = hv.iter().map(|&x| uni[(x + hh) as usize]).product();
            let mut iv: Vec<i64> = inv_pos.iter().map(|&k| hv[k]).collect();
            let wt = multiplicity_ratio(&mut iv, &fact) * r;
            let dot = hv.iter().zip(&zu).fold(0i128, |a, (&x, &zz)| a + x as i128 * zz);
            if dot.rem_euclid(n as i128) == 0 {
                (wt, wt)
            } else {
                (0.0, wt)
            }
        });
        let total = nonzero_sum.powi((coords.len() - su) as i32) * multiset_sum_over(w, 1.0, su, 0.0, false)?;
        let c_u = spec.perm.restriction(u_mask, w.beta0()).constant;
        value += dual / c_u;
        cert += ((total.hi - all).max(0.0) + 1e-13 * total.hi) / c_u;
    }
    Ok(Evaluated { value, certificate: cert })
}

/// Worst-case error of a shifted lattice rule in the invariant space from
/// the spectral side: a sum over orbits `k` of
/// `(r^{-1}(k) M(k)! / #S) |sum_{h in orbit(k), dual} exp(2 pi i h . Delta)|^2`.
pub fn shifted_error_sq_spectral(rule: &LatticeRule, spec: &KernelSpec, h: u64) -> Result<ErrorReport> {
    let start = Instant::now();
    let d = spec.d();
    if rule.d() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rule.d() });
    }
    check_box(d, h)?;
    let hh = h as i64;
    let uni = univariate_table(spec, hh);
    let inv = spec.perm.invariant().to_vec();
    let fact: Vec<f64> = (0..=d).map(factorial_f64).collect();
    let delta: Vec<f64> = rule.shift().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; d]);
    let z = rule.z().to_vec();
    let n = rule.n() as i128;
    let perms = permutations(inv.len());
    let (value, inbox) = box_sum(d, hh, false, |hv| {
        if hv.iter().all(|&x| x == 0) {
            return (0.0, 0.0);
        }
        let r: f64 = hv.iter().map(|&x| uni[(x + hh) as usize]).product();
        if !inv.windows(2).all(|w| hv[w[0]] <= hv[w[1]]) {
            return (0.0, r);
        }
        // distinct orbit members of the sorted representative
        let mut members: Vec<Vec<i64>> = perms
            .iter()
            .map(|p| {
                let mut q = hv.to_vec();
                for (k, &i) in inv.iter().enumerate() {
                    q[i] = hv[inv[p[k]]];
                }
                q
            })
            .collect();
        members.sort();
        members.dedup();
        let mut acc = Complex64::new(0.0, 0.0);
        for q in &members {
            let dot = q.iter().zip(&z).fold(0i128, |a, (&x, &zz)| a + x as i128 * zz as i128);
            if dot.rem_euclid(n) == 0 {
                let ph: f64 = q.iter().zip(&delta).map(|(&x, &dl)| x as f64 * dl).sum();
                acc += Complex64::from_polar(1.0, 2.0 * PI * ph);
            }
        }
        let mut iv: Vec<i64> = inv.iter().map(|&i| hv[i]).collect();
        let m = multiplicity_ratio(&mut iv, &fact);
        (r * m * acc.norm_sqr(), r)
    });
    let tensor_total = spec.weight.univariate_inv_sum(1.0, true)?.hi.powi(d as i32) - initial_error_sq(spec);
    let certificate = (tensor_total - inbox).max(0.0) + 1e-13 * tensor_total;
    let mut r = ErrorReport::new(ErrorMethod::SpectralDualSum, value, certificate, start);
    r.params = serde_json::json!({ "half_width": h });
    Ok(r)
}

fn permutations(s: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 0..s {
        let mut next = Vec::new();
        for p in &out {
            for pos in 0..=p.len() {
                let mut q: Vec<usize> = p.clone();
                q.insert(pos, k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// `C_{d,lambda} = (sum_{h != 0} [(M_d(h)! / #S_d) r^{-1}(h)]^{1/lambda})^lambda`.
pub fn bound_constant_cdl(spec: &KernelSpec, lambda: f64) -> Result<Enclosure> {
    if !(lambda >= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be at least 1")));
    }
    if lambda >= 2.0 * spec.weight.alpha() {
        return Err(Error::Domain(format!(
            "C_(d,lambda) diverges for lambda = {lambda} >= 2 alpha = {}",
            2.0 * spec.weight.alpha()
        )));
    }
    let full = weighted_lattice_sum(&spec.weight, &spec.perm, lambda)?;
    let zero = spec.weight.beta0().powf(spec.d() as f64 / lambda);
    Ok(full.sub_point(zero).clamp_nonneg().powf(lambda))
}

/// Constants of the CBC and existence bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_dl: Enclosure,
    pub lambda: f64,
    pub v_star: Option<u64>,
    pub eta_star: Option<Enclosure>,
}

pub fn bound_constants(spec: &KernelSpec, lambda: f64, max_v: u64) -> Result<BoundConstants> {
    let c_dl = bound_constant_cdl(spec, lambda)?;
    let eta: Option<EtaStar> = spec.weight.minimal_v_star(max_v)?;
    Ok(BoundConstants {
        c_dl,
        lambda,
        v_star: eta.as_ref().map(|e| e.v_star),
        eta_star: eta.map(|e| e.value),
    })
}

/// `(1 + c_R)^lambda C_{d,lambda} max{1, #I_d} / n^lambda`.
pub fn cbc_bound(c_dl: f64, c_r: f64, s: usize, n: u64, lambda: f64) -> f64 {
    (1.0 + c_r).powf(lambda) * c_dl * s.max(1) as f64 / (n as f64).powf(lambda)
}

/// `[max{1,#I}^{1/lambda} (c_R/n)^{2 alpha/lambda} + 1/n]^lambda C_{d,lambda}`.
pub fn refined_cbc_bound(c_dl: f64, c_r: f64, s: usize, alpha: f64, n: u64, lambda: f64) -> f64 {
    let n = n as f64;
    let a = (s.max(1) as f64).powf(1.0 / lambda) * (c_r / n).powf(2.0 * alpha / lambda);
    (a + 1.0 / n).powf(lambda) * c_dl
}

/// `n >= c_R max{1,#I}^{1/(2 alpha - lambda)}`.
pub fn refined_bound_applies(c_r: f64, s: usize, alpha: f64, n: u64, lambda: f64) -> bool {
    n as f64 >= c_r * (s.max(1) as f64).powf(1.0 / (2.0 * alpha - lambda))
}

/// Lower bound `beta0^{d-1} 2 beta1 N_R(alpha) max{d - #I_d, 1} n^{-2 alpha}`
/// on the mean squared error of any `n`-point lattice rule.
pub fn mse_lower_bound(spec: &KernelSpec, n: u64) -> Result<f64> {
    let w = &spec.weight;
    let d = spec.d();
    let nr = w.n_r()?.lo;
    let free = (d - spec.perm.s()).max(1) as f64;
    Ok(w.beta0().powi(d as i32 - 1) * 2.0 * w.beta1() * nr * free * (n as f64).powf(-2.0 * w.alpha()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::EvalMode;
    use crate::perm::PermStructure;
    use crate::weights::{Generator, SpectralWeight};
    use proptest::prelude::*;

    fn spec(d: usize, inv: &[usize], alpha: f64) -> KernelSpec {
        let w = SpectralWeight::korobov(alpha, 1.0, 1.0).unwrap();
        KernelSpec::new(w, PermStructure::from_one_based(d, inv).unwrap(), EvalMode::ClosedForm).unwrap()
    }

    #[test]
    fn empty_rule_gives_initial_error() {
        let s = spec(3, &[1, 2], 1.0);
        let r = worst_case_error_sq(&WeightedCubature::empty(), &s).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn single_node_rule() {
        let s = spec(2, &[1, 2], 1.0);
        let t = vec![0.3, 0.8];
        let rule = WeightedCubature::equal_weight(vec![t.clone()]);
        let r = worst_case_error_sq(&rule, &s).unwrap();
        let k = kernel_perminv(&t, &t, &s).unwrap().value;
        assert!((r.value - (k - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_mean_square_error() {
        let s = spec(1, &[], 1.0);
        let rule = LatticeRule::new(5, vec![1]).unwrap();
        let expected = 1.0 / 300.0;
        let a = mean_sq_error_decomposed(&rule, &s).unwrap();
        let b = mean_sq_error_kernel(&rule, &s).unwrap();
        let c = mean_sq_error_spectral(&rule, &s, 100_000).unwrap();
        assert!((a.value - expected).abs() < 1e-15);
        assert!((b.value - expected).abs() < 1e-15);
        assert!((c.value - expected).abs() <= c.certificate);
    }

    #[test]
    fn first_objective_is_scaled_one_dimensional_sum() {
        for (inv, binom) in [(vec![], 1.0), (vec![1, 2], 2.0)] {
            let s = spec(2, &inv, 1.0);
            let table = OmegaTable::new(&s, 7, 2);
            let b = cbc_objective(&[3], &s, &table).unwrap();
            // 2 sum_k (2 pi 7 k)^{-2} = 1 / (12 * 49)
            let expected = 1.0 / (12.0 * 49.0) / binom;
            assert!((b.value - expected).abs() < 1e-15, "{} vs {expected}", b.value);
        }
    }

    #[test]
    fn routes_agree_on_small_lattice() {
        let s = spec(2, &[1, 2], 1.0);
        let rule = LatticeRule::new(5, vec![1, 2]).unwrap();
        let a = mean_sq_error_decomposed(&rule, &s).unwrap();
        let b = mean_sq_error_kernel(&rule, &s).unwrap();
        let c = mean_sq_error_spectral(&rule, &s, 400).unwrap();
        let d = shift_invariant_error_sq(&rule.to_cubature(), &s).unwrap();
        assert!(a.agrees_with(&b), "{a:?} {b:?}");
        assert!(a.agrees_with(&c), "{a:?} {c:?}");
        assert!(a.agrees_with(&d), "{a:?} {d:?}");
        assert!(c.certificate < 1e-3);
    }

    #[test]
    fn decomposition_matches_box_sum_with_same_box() {
        let s = spec(3, &[1, 3], 1.0);
        let rule = LatticeRule::new(13, vec![1, 5, 3]).unwrap();
        let h = 20;
        let full = mean_sq_error_spectral(&rule, &s, h).unwrap();
        let mut parts = 0.0;
        for l in 1..=3 {
            parts += cbc_objective_spectral(&rule.z()[..l], &s, 13, h).unwrap().value;
        }
        assert!((parts - full.value).abs() < 1e-13 * full.value);
        let exact = mean_sq_error_decomposed(&rule, &s).unwrap();
        assert!(exact.agrees_with(&full));
    }

    #[test]
    fn objective_routes_agree() {
        let s = spec(2, &[1, 2], 1.0);
        let table = OmegaTable::new(&s, 5, 2);
        for z2 in 0..5 {
            let exact = cbc_objective(&[1, z2], &s, &table).unwrap();
            let box_sum = cbc_objective_spectral(&[1, z2], &s, 5, 300).unwrap();
            assert!((exact.value - box_sum.value).abs() <= box_sum.certificate + 1e-14);
        }
    }

    #[test]
    fn spectral_mode_tables_carry_certificates() {
        let w = SpectralWeight::korobov(1.5, 1.0, 1.0).unwrap();
        let s = KernelSpec::new(w, PermStructure::full(2).unwrap(), EvalMode::Spectral { half_width: None }).unwrap();
        let rule = LatticeRule::new(7, vec![1, 3]).unwrap();
        let a = mean_sq_error_decomposed(&rule, &s).unwrap();
        let b = mean_sq_error_spectral(&rule, &s, 300).unwrap();
        assert!(a.certificate > 0.0 && a.certificate < 1e-9);
        assert!(a.agrees_with(&b));
    }

    #[test]
    fn shifted_rule_routes_agree() {
        let s = spec(2, &[1, 2], 1.0);
        let rule = LatticeRule::new(5, vec![1, 2]).unwrap().with_shift(vec![0.17, 0.61]).unwrap();
        let k = worst_case_error_sq(&rule.to_cubature(), &s).unwrap();
        let sp = shifted_error_sq_spectral(&rule, &s, 150).unwrap();
        assert!(k.agrees_with(&sp), "{k:?} {sp:?}");
    }

    #[test]
    fn degenerate_generating_vector_is_flagged() {
        let s = spec(2, &[], 1.0);
        let rule = LatticeRule::new(5, vec![0, 0]).unwrap();
        let r = mean_sq_error_spectral(&rule, &s, 50).unwrap();
        assert!(r.flagged);
        let total = weighted_lattice_sum(&s.weight, &s.perm, 1.0).unwrap().mid() - 1.0;
        assert!((r.value + r.certificate - total).abs() < 1e-9);
    }

    #[test]
    fn mean_square_error_respects_lower_bound() {
        for inv in [vec![], vec![1, 2, 3], vec![2]] {
            let s = spec(3, &inv, 1.0);
            for (n, z) in [(13u64, vec![1, 5, 8]), (31, vec![1, 12, 7])] {
                let rule = LatticeRule::new(n, z).unwrap();
                let e = mean_sq_error_decomposed(&rule, &s).unwrap().value;
                assert!(e >= mse_lower_bound(&s, n).unwrap());
            }
        }
    }

    #[test]
    fn cdl_examples() {
        let s = spec(1, &[], 1.0);
        let c = bound_constant_cdl(&s, 1.0).unwrap();
        assert!((c.mid() - 1.0 / 12.0).abs() < 1e-12);
        assert!(c.contains(1.0 / 12.0) || c.width() < 1e-12);
        assert!(matches!(bound_constant_cdl(&s, 2.0), Err(Error::Domain(_))));
        assert!(bound_constant_cdl(&s, 0.5).is_err());
        // singleton invariance: tensor power of the one-dimensional sum
        let s = spec(3, &[2], 1.0);
        for lambda in [1.0, 1.5] {
            let c = bound_constant_cdl(&s, lambda).unwrap();
            let uni = s.weight.univariate_inv_sum(1.0 / lambda, true).unwrap().mid();
            let expected = (uni.powi(3) - 1.0).powf(lambda);
            assert!((c.mid() - expected).abs() < 1e-10 * expected);
        }
    }

    #[test]
    fn cdl_matches_orbit_box_sum() {
        let s = spec(3, &[1, 2, 3], 2.0);
        let h = 25i64;
        for (lambda, tol) in [(1.0, 1e-4), (1.3, 5e-3)] {
            let mut brute = 0.0;
            for a in -h..=h {
                for b in a..=h {
                    for c in b..=h {
                        if a == 0 && b == 0 && c == 0 {
                            continue;
                        }
                        let k = [a, b, c];
                        let m = s.perm.multiplicity_f64(&k);
                        let orbit = 6.0 / m;
                        brute += orbit * (m / 6.0 * s.weight.r_inv(&k)).powf(1.0 / lambda);
                    }
                }
            }
            let c = bound_constant_cdl(&s, lambda).unwrap();
            let b = brute.powf(lambda);
            assert!(b <= c.hi * (1.0 + 1e-12));
            assert!((c.mid() - b).abs() < tol * b, "lambda={lambda}: {c:?} vs {b}");
        }
    }

    #[test]
    fn cdl_at_one_equals_shift_invariant_diagonal() {
        let s = spec(4, &[1, 2, 4], 1.0);
        let c = bound_constant_cdl(&s, 1.0).unwrap();
        let k0 = kernel_shift_invariant_at(&[0.0; 4], &s).unwrap().value - 1.0;
        assert!((c.mid() - k0).abs() < 1e-12);
    }

    #[test]
    fn adding_a_free_coordinate_never_decreases_mse() {
        let s2 = spec(2, &[1, 2], 1.0);
        let s3 = spec(3, &[1, 2], 1.0);
        let base = mean_sq_error_decomposed(&LatticeRule::new(11, vec![1, 4]).unwrap(), &s2).unwrap().value;
        for z3 in 0..11 {
            let e = mean_sq_error_decomposed(&LatticeRule::new(11, vec![1, 4, z3]).unwrap(), &s3).unwrap().value;
            assert!(e >= base - 1e-15);
        }
    }

    #[test]
    fn parallel_results_are_reproducible() {
        let s = spec(3, &[1, 2, 3], 1.0);
        let rule = LatticeRule::new(31, vec![1, 12, 7]).unwrap().with_shift(vec![0.1, 0.2, 0.3]).unwrap();
        let a = worst_case_error_sq(&rule.to_cubature(), &s).unwrap().value;
        let b = worst_case_error_sq(&rule.to_cubature(), &s).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn report_json_fields() {
        let s = spec(1, &[], 1.0);
        let r = mean_sq_error_kernel(&LatticeRule::new(5, vec![1]).unwrap(), &s).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["method"], "kernel_sum");
        assert!(v["value"].is_number() && v["certificate"].is_number() && v.get("params").is_some());
    }

    proptest! {
        #[test]
        fn jensen_inequality(a in proptest::collection::vec(0.0f64..10.0, 1..30), q in 0.1f64..3.0, extra in 0.0f64..3.0) {
            let p = q + extra;
            let lp = a.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p);
            let lq = a.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q);
            prop_assert!(lp <= lq * (1.0 + 1e-12));
        }

        #[test]
        fn scaled_index_weight_bound(k in 1i64..500, n in 1u64..200, lambda in 1.0f64..1.99, tab in proptest::bool::ANY) {
            let w = if tab {
                SpectralWeight::new(1.0, 1.0, 1.0, Generator::Tabulated { values: vec![2.5, 4.5, 6.5], slope: 2.0 }, 1.25).unwrap()
            } else {
                SpectralWeight::sobolev(1.0).unwrap()
            };
            prop_assume!(n as f64 >= w.c_r());
            let lhs = w.r_inv_factor(n as i64 * k).powf(1.0 / lambda);
            let rhs = w.c_r() / n as f64 * w.r_inv_factor(k).powf(1.0 / lambda);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
