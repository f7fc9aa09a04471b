//! Eigenpairs of the integral operator of the invariant kernel.
//!
//! The univariate eigenvalues are `r(h)^{-1}`, `h in Z`, with the real
//! trigonometric eigenfunctions `1, sqrt2 cos(2 pi m x), sqrt2 sin(2 pi m x)`.
//! They are addressed by their rank in the non-increasing order. A
//! multivariate eigenpair is labelled by a rank vector whose invariant
//! coordinates are non-decreasing; its eigenfunction is the normalized
//! symmetrization of the tensor product.

use crate::enclosure::Enclosure;
use crate::error::{Error, Result};
use crate::perm::{permanent, PermStructure};
use crate::symsum::{eigenvalue_power_sum, multiset_sum};
use crate::weights::SpectralWeight;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone)]
pub struct UnivariateSpectrum {
    weight: SpectralWeight,
    /// rank of the constant eigenfunction
    const_rank: u32,
}

impl UnivariateSpectrum {
    pub fn new(weight: &SpectralWeight) -> Self {
        let b0 = weight.beta0();
        let mut above = 0u32;
        let mut m = 1i64;
        while weight.r_inv_factor(m) > b0 {
            above += 1;
            m += 1;
        }
        UnivariateSpectrum { weight: weight.clone(), const_rank: 2 * above }
    }

    pub fn const_rank(&self) -> u32 {
        self.const_rank
    }

    /// Index into the list `1, cos 1, sin 1, cos 2, ...`.
    fn basis_index(&self, rank: u32) -> u32 {
        match rank.cmp(&self.const_rank) {
            Ordering::Less => rank + 1,
            Ordering::Equal => 0,
            Ordering::Greater => rank,
        }
    }

    pub fn eigenvalue(&self, rank: u32) -> f64 {
        let i = self.basis_index(rank);
        self.weight.r_inv_factor(i.div_ceil(2) as i64)
    }

    pub fn basis(&self, rank: u32, x: f64) -> f64 {
        let i = self.basis_index(rank);
        if i == 0 {
            return 1.0;
        }
        let arg = 2.0 * PI * i.div_ceil(2) as f64 * x;
        if i % 2 == 1 {
            SQRT_2 * arg.cos()
        } else {
            SQRT_2 * arg.sin()
        }
    }
}

/// The first `count` univariate eigenvalues, non-increasing.
pub fn univariate_eigenvalues(w: &SpectralWeight, count: usize) -> Vec<f64> {
    let u = UnivariateSpectrum::new(w);
    (0..count as u32).map(|r| u.eigenvalue(r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    value: f64,
    label: Vec<u32>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazily enumerated multivariate spectrum, best first.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    uni: UnivariateSpectrum,
    perm: PermStructure,
    entries: Vec<(f64, Vec<u32>)>,
    heap: BinaryHeap<Candidate>,
    seen: HashSet<Vec<u32>>,
}

impl EigenSpectrum {
    pub fn new(w: &SpectralWeight, perm: &PermStructure) -> Self {
        let uni = UnivariateSpectrum::new(w);
        let start = vec![0u32; perm.d()];
        let mut s = EigenSpectrum {
            uni,
            perm: perm.clone(),
            entries: Vec::new(),
            heap: BinaryHeap::new(),
            seen: HashSet::new(),
        };
        s.push(start);
        s
    }

    fn push(&mut self, label: Vec<u32>) {
        if self.seen.insert(label.clone()) {
            let value = label.iter().map(|&r| self.uni.eigenvalue(r)).product();
            self.heap.push(Candidate { value, label });
        }
    }

    fn sorted_on_invariant(&self, label: &[u32]) -> bool {
        self.perm.invariant().windows(2).all(|w| label[w[0]] <= label[w[1]])
    }

    /// Enumerate at least `m` eigenpairs.
    pub fn ensure(&mut self, m: usize) {
        while self.entries.len() < m {
            let Some(c) = self.heap.pop() else { return };
            for i in 0..c.label.len() {
                let mut next = c.label.clone();
                next[i] += 1;
                if self.sorted_on_invariant(&next) {
                    self.push(next);
                }
            }
            self.entries.push((c.value, c.label));
        }
    }

    /// Eigenvalues enumerated so far.
    pub fn enumerated(&self) -> &[(f64, Vec<u32>)] {
        &self.entries
    }

    /// The `m` largest eigenvalues with their labels.
    pub fn top(&mut self, m: usize) -> &[(f64, Vec<u32>)] {
        self.ensure(m);
        &self.entries[..m]
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    pub fn perm(&self) -> &PermStructure {
        &self.perm
    }

    pub fn univariate(&self) -> &UnivariateSpectrum {
        &self.uni
    }

    /// Label of the constant eigenfunction.
    pub fn constant_label(&self) -> Vec<u32> {
        vec![self.uni.const_rank; self.perm.d()]
    }

    /// Position of the constant eigenfunction among the first `m`.
    pub fn constant_index(&mut self, m: usize) -> Option<usize> {
        let c = self.constant_label();
        self.top(m).iter().position(|(_, l)| *l == c)
    }

    /// `xi_label(x)`.
    pub fn eigenfunction(&self, label: &[u32], x: &[f64]) -> f64 {
        let max_rank = label.iter().copied().max().unwrap_or(0) as usize;
        let table = self.basis_table(max_rank + 1, x);
        self.eigenfunction_from(label, &table)
    }

    /// `table[c][r]` = univariate basis function of rank `r` at `x_c`.
    fn basis_table(&self, ranks: usize, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xc| (0..ranks as u32).map(|r| self.uni.basis(r, xc)).collect())
            .collect()
    }

    fn eigenfunction_from(&self, label: &[u32], table: &[Vec<f64>]) -> f64 {
        let inv = self.perm.invariant();
        let free: f64 = self
            .perm
            .free()
            .iter()
            .map(|&c| table[c][label[c] as usize])
            .product();
        if inv.is_empty() {
            return free;
        }
        let a: Vec<Vec<f64>> = inv
            .iter()
            .map(|&row| inv.iter().map(|&col| table[col][label[row] as usize]).collect())
            .collect();
        let norm = (self.perm.group_order_f64() * self.perm.multiplicity_f64(&label_as_i64(label))).sqrt();
        permanent(&a) * free / norm
    }

    /// `xi_j(x)` for the first `m` eigenpairs.
    pub fn eigenfunctions(&mut self, m: usize, x: &[f64]) -> Vec<f64> {
        self.ensure(m);
        self.eval_top(m, x)
    }

    /// As [`EigenSpectrum::eigenfunctions`] for an already enumerated prefix.
    pub fn eval_top(&self, m: usize, x: &[f64]) -> Vec<f64> {
        assert!(self.entries.len() >= m, "spectrum enumerated only to {}", self.entries.len());
        let ranks = self.entries[..m]
            .iter()
            .flat_map(|(_, l)| l.iter().copied())
            .max()
            .unwrap_or(0) as usize
            + 1;
        let table = self.basis_table(ranks, x);
        self.entries[..m].iter().map(|(_, l)| self.eigenfunction_from(l, &table)).collect()
    }

    /// Upper bound on `sup_x xi_j(x)^2` over all `j`.
    pub fn sup_square_bound(&self) -> f64 {
        self.perm.group_order_f64() * 2f64.powi(self.perm.d() as i32)
    }
}

fn label_as_i64(label: &[u32]) -> Vec<i64> {
    label.iter().map(|&r| r as i64).collect()
}

/// The `m` largest multivariate eigenvalues with their labels.
pub fn multivariate_spectrum(w: &SpectralWeight, ps: &PermStructure, m: usize) -> Vec<(f64, Vec<u32>)> {
    let mut s = EigenSpectrum::new(w, ps);
    s.top(m).to_vec()
}

/// `M_{2,d} = sum_j lambda_{d,j}`.
pub fn trace(w: &SpectralWeight, ps: &PermStructure) -> Result<Enclosure> {
    eigenvalue_power_sum(w, ps, 1.0)
}

/// `rho_tau(U) = 2 (beta1/beta0)^{1/tau} sum_{m > U} R(m)^{-2 alpha/tau}`.
pub fn rho(w: &SpectralWeight, tau: f64, u: u64) -> Result<Enclosure> {
    check_tau(w, tau)?;
    Ok(w.tail_sum(w.alpha() / tau, u + 1)?.scale(2.0 * (w.beta1() / w.beta0()).powf(1.0 / tau)))
}

/// Smallest `U <= max_u` with certified `rho_tau(U) < 1`.
pub fn minimal_u_star(w: &SpectralWeight, tau: f64, max_u: u64) -> Result<Option<(u64, Enclosure)>> {
    for u in 0..=max_u {
        let r = rho(w, tau, u)?;
        if r.hi < 1.0 {
            return Ok(Some((u, r)));
        }
    }
    Ok(None)
}

fn check_tau(w: &SpectralWeight, tau: f64) -> Result<()> {
    if !(tau > 1.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} must exceed 1")));
    }
    if tau >= 2.0 * w.alpha() {
        return Err(Error::Domain(format!(
            "sum of lambda^(1/tau) diverges for tau = {tau} >= 2 alpha = {}",
            2.0 * w.alpha()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TailConstants {
    pub tau: f64,
    /// `sum_j lambda_{d,j}^{1/tau}`
    pub power_sum: Enclosure,
    pub c_d: f64,
    pub p_d: f64,
    pub u: u64,
    pub rho: Enclosure,
    pub u_star: Option<u64>,
}

/// `C_d = 2^{tau-1}/(tau-1) (sum_j lambda_{d,j}^{1/tau})^tau` and `p_d = tau - 1`,
/// together with `rho_tau(U)` and the smallest `U*` with `rho < 1`.
pub fn spectrum_tail_constants(w: &SpectralWeight, ps: &PermStructure, tau: f64, u: u64) -> Result<TailConstants> {
    check_tau(w, tau)?;
    let power_sum = eigenvalue_power_sum(w, ps, 1.0 / tau)?;
    let c_d = 2f64.powf(tau - 1.0) / (tau - 1.0) * power_sum.hi.powf(tau);
    Ok(TailConstants {
        tau,
        power_sum,
        c_d,
        p_d: tau - 1.0,
        u,
        rho: rho(w, tau, u)?,
        u_star: minimal_u_star(w, tau, 64)?.map(|(u, _)| u),
    })
}

/// `sum over sorted k in {1..len(sigma)}^s of prod sigma_{k_l}`, the complete
/// homogeneous symmetric polynomial of degree `s`.
pub fn sorted_product_sum(sigma: &[f64], s: usize) -> f64 {
    let mut h = vec![0.0; s + 1];
    h[0] = 1.0;
    for &x in sigma {
        for l in 1..=s {
            h[l] += x * h[l - 1];
        }
    }
    h[s]
}

/// Right-hand side of the sorted-tuple bound
/// `sigma_1^s s^{2U} (1 + 2U + sum_{L=1}^s sigma_1^{-L} sum_{sorted j >= 2(U+1)} sigma_{L,j})`
/// for a finitely supported sequence whose first entry is its maximum.
pub fn sorted_sum_bound(sigma: &[f64], s: usize, u: usize) -> f64 {
    let s1 = sigma[0];
    let rest = if 2 * u + 1 < sigma.len() { &sigma[2 * u + 1..] } else { &[][..] };
    let mut inner = 1.0 + 2.0 * u as f64;
    for l in 1..=s {
        inner += s1.powi(-(l as i32)) * sorted_product_sum(rest, l);
    }
    s1.powi(s as i32) * (s as f64).powi(2 * u as i32) * inner
}

/// Geometric upper bound
/// `lambda_1^{s/tau} s^{2U} (2U + sum_{L=0}^{s} rho_tau(U)^L)`
/// on `sum over sorted k in N^s of prod lambda_{k_l}^{1/tau}`, paired with
/// the exact value.
pub fn sym_sum_bound(w: &SpectralWeight, s: usize, tau: f64, u: u64) -> Result<(Enclosure, f64)> {
    let r = rho(w, tau, u)?.hi;
    let lam1 = w.beta0();
    let geo: f64 = (0..=s).map(|l| r.powi(l as i32)).sum();
    let bound = lam1.powf(s as f64 / tau) * (s as f64).powi(2 * u as i32) * (2.0 * u as f64 + geo);
    Ok((multiset_sum(w, 1.0 / tau, s, 0.0)?, bound))
}

/// Riemann zeta for real `s > 1`, by Euler-Maclaurin after 16 explicit terms.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    const N: f64 = 16.0;
    let mut sum: f64 = (1..16).map(|k| (k as f64).powf(-s)).sum();
    sum += N.powf(1.0 - s) / (s - 1.0) + 0.5 * N.powf(-s);
    // Bernoulli corrections B_2k / (2k)! * s(s+1)...(s+2k-2) N^{-s-2k+1}
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut rising = s;
    let mut fact = 2.0;
    for (k, &bk) in b.iter().enumerate() {
        let k = k + 1;
        sum += bk / fact * rising * N.powf(-s - 2.0 * k as f64 + 1.0);
        rising *= (s + 2.0 * k as f64 - 1.0) * (s + 2.0 * k as f64);
        fact *= (2 * k + 1) as f64 * (2 * k + 2) as f64;
    }
    sum
}

/// Squared right-hand side of the higher-order error bound for the
/// approximation-based cubature rule with `N` nodes.
pub fn error_bound_new_sq(w: &SpectralWeight, ps: &PermStructure, tau: f64, u: u64, n: u64) -> Result<f64> {
    check_tau(w, tau)?;
    let r = rho(w, tau, u)?.hi;
    if r >= 1.0 {
        return Err(Error::InvalidParameter(format!("rho_tau({u}) = {r} is not below 1")));
    }
    let d = ps.d() as f64;
    let s = ps.s() as f64;
    let a = w.alpha();
    let bracket = 1.0
        + 2.0 * (w.beta1() * w.c_r().powf(2.0 * a) / (w.beta0() * w.generator_value(1).powf(2.0 * a))).powf(1.0 / tau)
            * riemann_zeta(2.0 * a / tau);
    Ok(w.beta0().powf(d)
        * (2.0 * u as f64 + 1.0 / (1.0 - r)).powf(tau)
        * 2f64.powf(tau * (tau * tau - 1.0))
        * (tau / (tau - 1.0)).powf(tau)
        * bracket.powf((d - s) * tau)
        * s.powf(2.0 * tau * u as f64)
        * (n as f64).powf(-tau))
}
