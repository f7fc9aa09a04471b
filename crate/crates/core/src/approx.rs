//! Average-case approximation algorithms built level by level from sampled
//! function values, and the weighted cubature rule derived from them.
//!
//! Every algorithm is linear: `A f = sum_i (G f(X))_i xi_i` for a
//! coefficient matrix `G` over the leading eigenfunctions and the sample
//! points `X`. Its Gaussian average error is then
//! `M_2 - 2 sum_i lambda_i (G Phi^T)_ii + tr(G K G^T)` with
//! `Phi_{ip} = xi_i(x_p)` and the kernel matrix `K` of the sample points.

use crate::enclosure::Enclosure;
use crate::error::{Error, Result};
use crate::error_engine::{initial_error_sq, worst_case_error_sq};
use crate::kernels::{kernel_perminv, KernelSpec};
use crate::lattice::WeightedCubature;
use crate::spectrum::{spectrum_tail_constants, trace, EigenSpectrum, TailConstants};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest basis size used by a single level.
pub const MAX_BASIS: usize = 1 << 14;

/// `omega(y) = y + y^{-p}`.
pub fn omega(y: f64, p: f64) -> f64 {
    y + y.powf(-p)
}

/// `c'(tau) = 2^{tau(tau^2-1)} (tau/(tau-1))^tau`.
pub fn c_prime(tau: f64) -> f64 {
    2f64.powf(tau * (tau * tau - 1.0)) * (tau / (tau - 1.0)).powf(tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub p: f64,
    pub y_p: f64,
    pub omega_y_p: f64,
    pub k_p: u32,
    /// `c(p) = 2^{p(p+1)} (1+p) (1+1/p)^p`
    pub c_p: f64,
    /// `c'(p+1)`
    pub c_prime: f64,
    /// `2^{(p+2)(p+1)} (1+p) (1+1/p)^p`
    pub quad_constant: f64,
}

impl RateConstants {
    /// `c(p) C_d 2^{-k p}`.
    pub fn induction_bound(&self, c_d: f64, k: u32) -> f64 {
        self.c_p * c_d * 2f64.powf(-(k as f64) * self.p)
    }

    /// `2^{(p+2)(p+1)} (1+p)(1+1/p)^p C_d N^{-(p+1)}`.
    pub fn quad_bound(&self, c_d: f64, n: u64) -> f64 {
        self.quad_constant * c_d * (n as f64).powf(-(self.p + 1.0))
    }
}

pub fn rate_constants(p: f64) -> Result<RateConstants> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must be positive")));
    }
    let y_p = p.powf(1.0 / (p + 1.0));
    let w = omega(y_p, p);
    let log2 = (p + 1.0) + (1.0 + 1.0 / p) * w.log2();
    let k_p = (log2 + 1e-12).floor().max(0.0) as u32;
    let c_p = 2f64.powf(p * (p + 1.0)) * (1.0 + p) * (1.0 + 1.0 / p).powf(p);
    Ok(RateConstants {
        p,
        y_p,
        omega_y_p: w,
        k_p,
        c_p,
        c_prime: c_prime(p + 1.0),
        quad_constant: 2f64.powf((p + 2.0) * (p + 1.0)) * (1.0 + p) * (1.0 + 1.0 / p).powf(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxParams {
    pub tau: f64,
    /// accepted slack over the averaged bounds
    pub delta: f64,
    /// candidate point sets per search
    pub search_budget: usize,
    pub seed: u64,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams { tau: 2.0, delta: 0.5, search_budget: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxAlgorithm {
    pub level: u32,
    /// basis size `m` used by the update that produced this level
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    /// rows: leading eigenfunctions, columns: sample points
    pub coefficients: DMatrix<f64>,
    pub e_avg_sq: f64,
    /// `tail(m) + (m/q) e_avg(previous)^2`
    pub bootstrap_bound: Option<f64>,
    /// `c(p) C_d 2^{-kp}`
    pub induction_bound: f64,
    pub candidates: usize,
    pub flagged: bool,
}

impl ApproxAlgorithm {
    pub fn is_zero(&self) -> bool {
        self.points.is_empty()
    }

    /// `e_avg^2 / bootstrap bound`.
    pub fn achieved_slack(&self) -> Option<f64> {
        self.bootstrap_bound.map(|b| self.e_avg_sq / b)
    }

    pub fn summary(&self) -> LevelSummary {
        LevelSummary {
            level: self.level,
            m: self.m,
            samples: self.points.len(),
            e_avg_sq: self.e_avg_sq,
            bootstrap_bound: self.bootstrap_bound,
            induction_bound: self.induction_bound,
            achieved_slack: self.achieved_slack(),
            candidates: self.candidates,
            flagged: self.flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u32,
    pub m: usize,
    pub samples: usize,
    pub e_avg_sq: f64,
    pub bootstrap_bound: Option<f64>,
    pub induction_bound: f64,
    pub achieved_slack: Option<f64>,
    pub candidates: usize,
    pub flagged: bool,
}

/// The sequence of algorithms with what is needed to extend or apply it.
#[derive(Debug, Clone)]
pub struct ApproxSequence {
    pub constants: TailConstants,
    pub rate: RateConstants,
    pub m2: Enclosure,
    pub params: ApproxParams,
    pub levels: Vec<ApproxAlgorithm>,
    spectrum: EigenSpectrum,
}

impl ApproxSequence {
    pub fn spectrum(&self) -> &EigenSpectrum {
        &self.spectrum
    }

    pub fn summaries(&self) -> Vec<LevelSummary> {
        self.levels.iter().map(ApproxAlgorithm::summary).collect()
    }
}

/// `K(a_i, b_j)` for the invariant kernel.
pub fn kernel_matrix(a: &[Vec<f64>], b: &[Vec<f64>], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| kernel_perminv(x, y, spec).map(|e| e.value)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j]))
}

/// `Phi_{ip} = xi_i(x_p)` for the first `rows` eigenfunctions.
pub fn eigen_matrix(spectrum: &EigenSpectrum, rows: usize, points: &[Vec<f64>]) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = points.par_iter().map(|x| spectrum.eval_top(rows, x)).collect();
    DMatrix::from_fn(rows, points.len(), |i, p| cols[p][i])
}

/// Gaussian average squared `L_2` error of `f -> sum_i (G f(X))_i xi_i`.
pub fn avg_error_sq(g: &DMatrix<f64>, lambda: &[f64], phi: &DMatrix<f64>, kmat: &DMatrix<f64>, m2: f64) -> f64 {
    let mut cross = 0.0;
    for i in 0..g.nrows() {
        cross += lambda[i] * g.row(i).dot(&phi.row(i));
    }
    let gk = g * kmat;
    let quad = gk.component_mul(g).sum();
    m2 - 2.0 * cross + quad
}

fn candidate_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 40);
    rng
}

/// `q` points drawn from the density `u_m = (1/m) sum_{j<m} xi_j^2` by
/// rejection from the uniform distribution.
fn sample_density(spectrum: &EigenSpectrum, m: usize, q: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = spectrum.d();
    let sup = spectrum.sup_square_bound();
    let mut out = Vec::with_capacity(q);
    while out.len() < q {
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let u: f64 = spectrum.eval_top(m, &x).iter().map(|v| v * v).sum::<f64>() / m as f64;
        if rng.gen::<f64>() * sup < u {
            out.push(x);
        }
    }
    out
}

/// Cached state of the last built level.
struct Cache {
    kmat: DMatrix<f64>,
}

struct Candidate {
    points: Vec<Vec<f64>>,
    g: DMatrix<f64>,
    kmat: DMatrix<f64>,
    e_avg_sq: f64,
}

fn zero_level(k: u32, m2: f64, rate: &RateConstants, c_d: f64) -> ApproxAlgorithm {
    ApproxAlgorithm {
        level: k,
        m: 0,
        points: Vec::new(),
        coefficients: DMatrix::zeros(0, 0),
        e_avg_sq: m2,
        bootstrap_bound: None,
        induction_bound: rate.induction_bound(c_d, k),
        candidates: 0,
        flagged: false,
    }
}

/// `m_k = floor((C_d 2^k / e_k^2)^{1/(p+1)} y_p)` from the error of level `k`.
pub fn basis_size(c_d: f64, k: u32, e_sq: f64, rate: &RateConstants) -> usize {
    let m = ((c_d * 2f64.powi(k as i32) / e_sq).powf(1.0 / (rate.p + 1.0)) * rate.y_p).floor();
    (m.max(1.0) as usize).min(MAX_BASIS)
}

/// Build `A^(0), ..., A^(k_max)`. Levels up to `K_p` are the zero algorithm;
/// each further level adds `2^{k-1}` points drawn from `u_m` and is accepted
/// once its exact error is within `(1 + delta)` of the averaged bound.
pub fn build_approx_sequence(spec: &KernelSpec, k_max: u32, params: ApproxParams) -> Result<ApproxSequence> {
    if !(params.delta >= 0.0) || params.search_budget == 0 {
        return Err(Error::InvalidParameter("delta must be non-negative and the budget positive".into()));
    }
    let w = &spec.weight;
    let constants = spectrum_tail_constants(w, &spec.perm, params.tau, 0)?;
    let rate = rate_constants(constants.p_d)?;
    let m2 = trace(w, &spec.perm)?;
    let mut spectrum = EigenSpectrum::new(w, &spec.perm);
    let c_d = constants.c_d;
    let mut levels = Vec::new();
    let mut cache = Cache { kmat: DMatrix::zeros(0, 0) };
    for k in 0..=k_max {
        if k <= rate.k_p {
            levels.push(zero_level(k, m2.mid(), &rate, c_d));
            continue;
        }
        let prev: &ApproxAlgorithm = levels.last().expect("level K_p exists");
        let m = basis_size(c_d, k - 1, prev.e_avg_sq, &rate);
        let q = 1usize << (k - 1);
        let rows_prev = prev.coefficients.nrows();
        spectrum.ensure(m.max(rows_prev));
        let lambda: Vec<f64> = spectrum.enumerated()[..m].iter().map(|e| e.0).collect();
        let tail = m2.mid() - lambda.iter().sum::<f64>();
        let bootstrap = tail.max(0.0) + m as f64 / q as f64 * prev.e_avg_sq;
        let target = (1.0 + params.delta) * bootstrap;
        let phi_prev = eigen_matrix(&spectrum, m, &prev.points);
        let em_gs = {
            let mut t = DMatrix::zeros(m, prev.points.len());
            for i in 0..m.min(rows_prev) {
                t.set_row(i, &prev.coefficients.row(i));
            }
            t
        };
        let evaluate = |idx: usize| -> Result<Candidate> {
            let mut rng = candidate_rng(params.seed, k as u64, idx);
            let t = sample_density(&spectrum, m, q, &mut rng);
            let rows_t = m.max(rows_prev);
            let xi_t = eigen_matrix(&spectrum, rows_t, &t);
            let mut wmat = DMatrix::zeros(m, q);
            for l in 0..q {
                let col = xi_t.column(l);
                let u: f64 = col.rows(0, m).iter().map(|v| v * v).sum::<f64>() / m as f64;
                if u > 0.0 {
                    for j in 0..m {
                        wmat[(j, l)] = col[j] / (q as f64 * u);
                    }
                }
            }
            let n_s = prev.points.len();
            let mut g = DMatrix::zeros(m, n_s + q);
            if n_s > 0 {
                let psi = xi_t.rows(0, rows_prev).transpose();
                let correction = &wmat * (psi * &prev.coefficients);
                g.columns_mut(0, n_s).copy_from(&(&em_gs - correction));
            }
            g.columns_mut(n_s, q).copy_from(&wmat);
            let k_st = kernel_matrix(&prev.points, &t, spec)?;
            let k_tt = kernel_matrix(&t, &t, spec)?;
            let mut kmat = DMatrix::zeros(n_s + q, n_s + q);
            kmat.view_mut((0, 0), (n_s, n_s)).copy_from(&cache.kmat);
            kmat.view_mut((0, n_s), (n_s, q)).copy_from(&k_st);
            kmat.view_mut((n_s, 0), (q, n_s)).copy_from(&k_st.transpose());
            kmat.view_mut((n_s, n_s), (q, q)).copy_from(&k_tt);
            let mut phi = DMatrix::zeros(m, n_s + q);
            phi.columns_mut(0, n_s).copy_from(&phi_prev);
            phi.columns_mut(n_s, q).copy_from(&xi_t.rows(0, m));
            let e = avg_error_sq(&g, &lambda, &phi, &kmat, m2.mid());
            let mut points = prev.points.clone();
            points.extend(t);
            Ok(Candidate { points, g, kmat, e_avg_sq: e })
        };
        let (best, tried) = search(params.search_budget, evaluate, |c| c.e_avg_sq, target)?;
        cache.kmat = best.kmat;
        levels.push(ApproxAlgorithm {
            level: k,
            m,
            points: best.points,
            coefficients: best.g,
            e_avg_sq: best.e_avg_sq,
            bootstrap_bound: Some(bootstrap),
            induction_bound: rate.induction_bound(c_d, k),
            candidates: tried,
            flagged: best.e_avg_sq > target,
        });
    }
    Ok(ApproxSequence { constants, rate, m2, params, levels, spectrum })
}

/// Evaluate candidates in parallel batches, returning the first one in index
/// order whose score is at most `target`, or the best of the budget.
fn search<C: Send, F, S>(budget: usize, eval: F, score: S, target: f64) -> Result<(C, usize)>
where
    F: Fn(usize) -> Result<C> + Sync,
    S: Fn(&C) -> f64,
{
    let batch = rayon::current_num_threads().max(1);
    let mut best: Option<C> = None;
    let mut start = 0;
    while start < budget {
        let end = (start + batch).min(budget);
        let found: Vec<C> = (start..end).into_par_iter().map(&eval).collect::<Result<_>>()?;
        for (off, c) in found.into_iter().enumerate() {
            if score(&c) <= target {
                return Ok((c, start + off + 1));
            }
            if best.as_ref().is_none_or(|b| score(&c) < score(b)) {
                best = Some(c);
            }
        }
        start = end;
    }
    Ok((best.expect("budget is positive"), budget))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledRule {
    pub rule: WeightedCubature,
    pub n_requested: u64,
    pub kappa: u32,
    /// squared worst-case error from the kernel formula
    pub e_wor_sq: f64,
    pub e_wor_certificate: f64,
    /// the same quantity as a Gaussian average over the approximation algebra
    pub e_avg_sq: f64,
    /// `e_avg(A^(kappa))^2 / r`
    pub search_target: f64,
    /// `2^{(p+2)(p+1)} (1+p)(1+1/p)^p C_d N^{-(p+1)}`
    pub quad_bound: f64,
    /// `quad_bound` times the accumulated search slack `(1+delta)^{p+2}`
    pub certified_bound: f64,
    pub candidates: usize,
    pub flagged: bool,
    pub params: ApproxParams,
    pub constants: TailConstants,
    pub rate: RateConstants,
    pub levels: Vec<LevelSummary>,
}

impl AssembledRule {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            n_requested: u64,
            nodes: usize,
            kappa: u32,
            e_wor_sq: f64,
            e_wor_certificate: f64,
            e_avg_sq: f64,
            search_target: f64,
            quad_bound: f64,
            certified_bound: f64,
            candidates: usize,
            flagged: bool,
            params: &'a ApproxParams,
            constants: &'a TailConstants,
            rate: &'a RateConstants,
            levels: &'a [LevelSummary],
        }
        serde_json::to_string_pretty(&Sidecar {
            n_requested: self.n_requested,
            nodes: self.rule.len(),
            kappa: self.kappa,
            e_wor_sq: self.e_wor_sq,
            e_wor_certificate: self.e_wor_certificate,
            e_avg_sq: self.e_avg_sq,
            search_target: self.search_target,
            quad_bound: self.quad_bound,
            certified_bound: self.certified_bound,
            candidates: self.candidates,
            flagged: self.flagged,
            params: &self.params,
            constants: &self.constants,
            rate: &self.rate,
            levels: &self.levels,
        })
        .expect("sidecar serializes")
    }

    /// The squared error is within the certified bound.
    pub fn bound_holds(&self) -> bool {
        self.e_wor_sq <= self.certified_bound + self.e_wor_certificate
    }
}

/// Node weights of `Q f = int A f + (1/r) sum_l (f - A f)(t_l)`: the sample
/// points get `G^T (e_0 - (1/r) sum_l xi(t_l))`, every `t_l` gets `1/r`.
fn rule_weights(alg: &ApproxAlgorithm, const_row: Option<usize>, xi_t: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let r = xi_t.ncols();
    let rows = alg.coefficients.nrows();
    let mut c = DVector::zeros(rows);
    if let Some(i0) = const_row {
        c[i0] = 1.0;
    }
    if rows > 0 {
        c -= xi_t.rows(0, rows).column_sum() / r as f64;
    }
    (alg.coefficients.transpose() * c, 1.0 / r as f64)
}

/// Gaussian average of `(Int f - Q f)^2`, expanded over the covariances of
/// `f - A f` rather than through the assembled weights.
fn structured_avg_error_sq(
    spec: &KernelSpec,
    alg: &ApproxAlgorithm,
    const_row: Option<usize>,
    xi_t: &DMatrix<f64>,
    t: &[Vec<f64>],
) -> Result<f64> {
    let b = initial_error_sq(spec);
    let r = t.len() as f64;
    let k_tt = kernel_matrix(t, t, spec)?;
    let mean_tt = k_tt.sum() / (r * r);
    if alg.is_zero() {
        return Ok(b - 2.0 * b + mean_tt);
    }
    let g = &alg.coefficients;
    let rows = g.nrows();
    let k_xx = kernel_matrix(&alg.points, &alg.points, spec)?;
    let k_xt = kernel_matrix(&alg.points, t, spec)?;
    let mut e0 = DVector::zeros(rows);
    if let Some(i0) = const_row {
        e0[i0] = 1.0;
    }
    let a = g.transpose() * e0;
    let z = g.transpose() * xi_t.rows(0, rows);
    let zbar = z.column_sum() / r;
    let kbar = k_xt.column_sum() / r;
    let ones_a = a.sum();
    let ones_z = zbar.sum();
    let int_int = b - 2.0 * b * ones_a + a.dot(&(&k_xx * &a));
    let int_pt = b - b * ones_z - a.dot(&kbar) + a.dot(&(&k_xx * &zbar));
    let pt_pt = mean_tt - 2.0 * zbar.dot(&kbar) + zbar.dot(&(&k_xx * &zbar));
    Ok(int_int - 2.0 * int_pt + pt_pt)
}

/// The cubature rule `Q_{d,N}` with `kappa = floor(log2 N) - 1`: the
/// approximation `A^(kappa)` plus `2^kappa` uniformly drawn correction points,
/// accepted once the exact worst-case error is within `(1 + delta)` of
/// `e_avg(A^(kappa))^2 / 2^kappa`.
pub fn assemble_qdn(spec: &KernelSpec, n: u64, params: ApproxParams) -> Result<AssembledRule> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("N = {n} must be at least 2")));
    }
    let kappa = 63 - n.leading_zeros() - 1;
    let seq = build_approx_sequence(spec, kappa, params)?;
    let alg = &seq.levels[kappa as usize];
    let r = 1usize << kappa;
    let rows = alg.coefficients.nrows();
    let const_row = {
        let c = seq.spectrum.constant_label();
        seq.spectrum.enumerated()[..rows].iter().position(|(_, l)| *l == c)
    };
    let target = (1.0 + params.delta) * alg.e_avg_sq / r as f64;
    let d = spec.d();
    let eval = |idx: usize| -> Result<(WeightedCubature, f64, f64, Vec<Vec<f64>>, DMatrix<f64>)> {
        let mut rng = candidate_rng(params.seed, u32::MAX as u64, idx);
        let t: Vec<Vec<f64>> = (0..r).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
        let xi_t = eigen_matrix(&seq.spectrum, rows, &t);
        let (vx, vt) = rule_weights(alg, const_row, &xi_t);
        let mut nodes = alg.points.clone();
        nodes.extend(t.iter().cloned());
        let total = nodes.len() as f64;
        let mut weights: Vec<f64> = vx.iter().map(|v| v * total).collect();
        weights.extend(std::iter::repeat_n(vt * total, r));
        let rule = WeightedCubature::new(nodes, weights)?;
        let e = worst_case_error_sq(&rule, spec)?;
        Ok((rule, e.value, e.certificate, t, xi_t))
    };
    let (best, tried) = search(params.search_budget, eval, |c| c.1, target)?;
    let (rule, e_wor_sq, cert, t, xi_t) = best;
    let e_avg_sq = structured_avg_error_sq(spec, alg, const_row, &xi_t, &t)?;
    let c_d = seq.constants.c_d;
    let quad_bound = seq.rate.quad_bound(c_d, n);
    let slack = (1.0 + params.delta).powf(seq.rate.p + 2.0);
    Ok(AssembledRule {
        rule,
        n_requested: n,
        kappa,
        e_wor_sq,
        e_wor_certificate: cert,
        e_avg_sq,
        search_target: target / (1.0 + params.delta),
        quad_bound,
        certified_bound: slack * quad_bound,
        candidates: tried,
        flagged: e_wor_sq > target || seq.levels.iter().any(|l| l.flagged),
        params,
        constants: seq.constants.clone(),
        rate: seq.rate,
        levels: seq.summaries(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::PermStructure;
    use crate::weights::SpectralWeight;

    fn spec(d: usize, inv: &[usize], alpha: f64) -> KernelSpec {
        let w = SpectralWeight::korobov(alpha, 1.0, 1.0).unwrap();
        KernelSpec::auto(w, PermStructure::from_one_based(d, inv).unwrap())
    }

    fn params(seed: u64) -> ApproxParams {
        ApproxParams { tau: 2.0, delta: 0.5, search_budget: 16, seed }
    }

    #[test]
    fn rate_constant_values() {
        let r1 = rate_constants(1.0).unwrap();
        assert_eq!(r1.c_p, 16.0);
        assert_eq!(r1.k_p, 4);
        let r2 = rate_constants(2.0).unwrap();
        assert_eq!(r2.c_p, 432.0);
        assert_eq!(r2.k_p, (12.0 * 3f64.sqrt()).log2().floor() as u32);
        assert_eq!(r2.k_p, 4);
        assert_eq!(c_prime(2.0), 256.0);
        for p in [0.1, 0.5, 1.0, 2.5, 7.0] {
            let r = rate_constants(p).unwrap();
            assert!(r.omega_y_p > 1.0);
            for y in [0.1, 0.9, r.y_p, 3.0] {
                assert!(omega(y, p) >= r.omega_y_p - 1e-12);
            }
            // omega(y_p)^{p+1} = (1+p)(1+1/p)^p
            let lhs = r.omega_y_p.powf(p + 1.0);
            assert!((lhs - (1.0 + p) * (1.0 + 1.0 / p).powf(p)).abs() < 1e-10 * lhs);
        }
        assert!(rate_constants(0.0).is_err());
    }

    #[test]
    fn c_prime_is_moderate_on_the_stated_range() {
        let mut tau = 1.003;
        while tau <= 2.04 {
            assert!(c_prime(tau) <= 350.0, "{tau}");
            tau += 0.001;
        }
    }

    #[test]
    fn zero_levels_have_trace_error() {
        let s = spec(2, &[1, 2], 2.0);
        let seq = build_approx_sequence(&s, 4, params(1)).unwrap();
        assert_eq!(seq.levels.len(), 5);
        for l in &seq.levels {
            assert!(l.is_zero());
            assert_eq!(l.e_avg_sq, seq.m2.mid());
            assert!(l.e_avg_sq <= l.induction_bound);
        }
    }

    #[test]
    fn bootstrap_levels_respect_bounds() {
        let s = spec(2, &[1, 2], 2.0);
        let seq = build_approx_sequence(&s, 7, params(3)).unwrap();
        for l in &seq.levels {
            assert!(l.points.len() <= 1 << l.level);
            if let Some(b) = l.bootstrap_bound {
                assert!(!l.flagged);
                assert!(l.e_avg_sq <= 1.5 * b);
            }
            assert!(l.e_avg_sq <= 1.5 * l.induction_bound, "{:?}", l.summary());
        }
        let last = seq.levels.last().unwrap();
        assert!(last.e_avg_sq < 0.1 * seq.m2.mid());
    }

    #[test]
    fn closed_form_matches_gaussian_sampling() {
        // on a truncated spectrum the identity is exact for every linear algorithm
        let s = spec(2, &[1, 2], 2.0);
        let seq = build_approx_sequence(&s, 6, params(5)).unwrap();
        let alg = &seq.levels[6];
        let mut spectrum = seq.spectrum().clone();
        let big = 40;
        spectrum.ensure(big);
        let lambda: Vec<f64> = spectrum.enumerated()[..big].iter().map(|e| e.0).collect();
        let phi = eigen_matrix(&spectrum, big, &alg.points);
        let kmat = phi.transpose() * DMatrix::from_diagonal(&DVector::from_vec(lambda.clone())) * &phi;
        let m2: f64 = lambda.iter().sum();
        let rows = alg.coefficients.nrows();
        let closed = avg_error_sq(&alg.coefficients, &lambda, &phi.rows(0, rows).into_owned(), &kmat, m2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr_normal();
        let trials = 10_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..trials {
            let coef: Vec<f64> = lambda.iter().map(|l| l.sqrt() * normal(&mut rng)).collect();
            let samples = phi.transpose() * DVector::from_vec(coef.clone());
            let approx = &alg.coefficients * samples;
            let mut err = 0.0;
            for j in 0..big {
                let a = if j < rows { approx[j] } else { 0.0 };
                err += (coef[j] - a).powi(2);
            }
            for j in big..rows {
                err += approx[j].powi(2);
            }
            sum += err;
            sum2 += err * err;
        }
        let mean = sum / trials as f64;
        let se = ((sum2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - closed).abs() <= 3.0 * se, "{mean} vs {closed} (se {se})");
    }

    /// Standard normal draws by Box-Muller.
    fn rand_distr_normal() -> impl Fn(&mut ChaCha8Rng) -> f64 {
        |rng: &mut ChaCha8Rng| {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen::<f64>();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    #[test]
    fn small_n_is_plain_qmc() {
        let s = spec(2, &[1, 2], 2.0);
        for n in [2u64, 3, 7, 31] {
            let q = assemble_qdn(&s, n, params(2)).unwrap();
            assert_eq!(q.rule.len(), 1 << q.kappa);
            assert!(q.rule.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15));
            assert!(q.rule.len() as u64 <= n);
        }
    }

    #[test]
    fn assembled_rule_properties() {
        let s = spec(2, &[1, 2], 2.0);
        for n in [32u64, 64, 100] {
            let q = assemble_qdn(&s, n, params(9)).unwrap();
            assert!(q.rule.len() as u64 <= n);
            let rel = (q.e_wor_sq - q.e_avg_sq).abs() / q.e_wor_sq;
            assert!(rel < 1e-8, "{} vs {}", q.e_wor_sq, q.e_avg_sq);
            assert!(q.bound_holds());
            assert!(q.e_wor_sq <= q.quad_bound);
            // integrating 1 is off by at most the norm of 1 times the error
            let sum = q.rule.apply(|_| 1.0);
            assert!((sum - 1.0).abs() <= q.e_wor_sq.sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn assembly_is_reproducible() {
        let s = spec(3, &[1, 2, 3], 2.0);
        let a = assemble_qdn(&s, 40, params(4)).unwrap();
        let b = assemble_qdn(&s, 40, params(4)).unwrap();
        assert_eq!(a.rule.to_text(), b.rule.to_text());
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert!(v["levels"].is_array() && v["certified_bound"].is_number());
    }
}
