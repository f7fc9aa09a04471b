//! Test integrands with known integrals and space norms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_engine::worst_case_error_sq;
use crate::kernels::KernelSpec;
use crate::lattice::{LatticeRule, WeightedCubature};
use crate::perm::PermStructure;
use crate::spectrum::EigenSpectrum;
use crate::weights::SpectralWeight;

/// Largest invariant block a cosine integrand may be symmetrized over.
const MAX_SYMMETRIZED: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub coefficient: f64,
    pub frequencies: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum IntegrandSpec {
    Constant {
        value: f64,
    },
    /// `sum_t a_t prod_l cos(2 pi h_l x_l)`, averaged over the invariant
    /// coordinates unless `symmetrize` is false.
    CosineProduct {
        terms: Vec<CosineTerm>,
        #[serde(default = "yes")]
        symmetrize: bool,
    },
    /// Random combination of the leading eigenfunctions with coefficients
    /// scaled so that the norm stays moderate.
    SpectralSample {
        terms: usize,
        seed: u64,
    },
}

fn yes() -> bool {
    true
}

enum Repr {
    /// `f(x) = sum_k c_k cos(2 pi k . x)` with `c_k = c_{-k}`.
    Fourier(Vec<(Vec<i64>, f64)>),
    Spectral { spectrum: EigenSpectrum, coef: Vec<f64> },
}

pub struct Integrand {
    d: usize,
    repr: Repr,
    pub exact_integral: f64,
    /// Norm in the weighted space, exact up to rounding.
    pub norm: f64,
}

impl Integrand {
    pub fn build(spec: &IntegrandSpec, w: &SpectralWeight, ps: &PermStructure) -> Result<Self> {
        let d = ps.d();
        match spec {
            IntegrandSpec::Constant { value } => Ok(Integrand {
                d,
                repr: Repr::Fourier(vec![(vec![0; d], *value)]),
                exact_integral: *value,
                norm: value.abs() * w.beta0().powf(-(d as f64) / 2.0),
            }),
            IntegrandSpec::CosineProduct { terms, symmetrize } => {
                let mut coef: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
                for t in terms {
                    if t.frequencies.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, found: t.frequencies.len() });
                    }
                    for (k, c) in expand_cosine(&t.frequencies, t.coefficient) {
                        if *symmetrize {
                            for (k2, c2) in symmetrize_term(&k, c, ps)? {
                                *coef.entry(k2).or_insert(0.0) += c2;
                            }
                        } else {
                            *coef.entry(k).or_insert(0.0) += c;
                        }
                    }
                }
                coef.retain(|_, c| *c != 0.0);
                let mut norm_sq = 0.0;
                for (k, c) in &coef {
                    let half = if k.iter().all(|&v| v == 0) { 1.0 } else { 0.5 };
                    norm_sq += half * w.r_weight(k)? * c * c;
                }
                let exact_integral = coef.get(&vec![0; d]).copied().unwrap_or(0.0);
                Ok(Integrand {
                    d,
                    repr: Repr::Fourier(coef.into_iter().collect()),
                    exact_integral,
                    norm: norm_sq.sqrt(),
                })
            }
            IntegrandSpec::SpectralSample { terms, seed } => {
                if *terms == 0 {
                    return Err(Error::InvalidParameter("a spectral sample needs at least one term".into()));
                }
                let mut spectrum = EigenSpectrum::new(w, ps);
                spectrum.ensure(*terms);
                let constant = spectrum.constant_label();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut coef = Vec::with_capacity(*terms);
                let mut norm_sq = 0.0;
                let mut integral = 0.0;
                for (lambda, label) in spectrum.top(*terms).iter() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let c = g * lambda.sqrt();
                    if *label == constant {
                        integral = c;
                    }
                    norm_sq += c * c / lambda;
                    coef.push(c);
                }
                Ok(Integrand {
                    d,
                    repr: Repr::Spectral { spectrum, coef },
                    exact_integral: integral,
                    norm: norm_sq.sqrt(),
                })
            }
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Repr::Fourier(coef) => coef
                .iter()
                .map(|(k, c)| {
                    let dot: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                    c * (2.0 * std::f64::consts::PI * dot).cos()
                })
                .sum(),
            Repr::Spectral { spectrum, coef } => {
                let xi = spectrum.eval_top(coef.len(), x);
                xi.iter().zip(coef).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// Compare `f(x)` with `f(sigma x)` for random transpositions of the
    /// invariant coordinates.
    pub fn is_invariant(&self, ps: &PermStructure, samples: usize, seed: u64) -> bool {
        let inv = ps.invariant();
        if inv.len() < 2 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples).all(|_| {
            let x: Vec<f64> = (0..self.d).map(|_| rng.gen()).collect();
            let a = inv[rng.gen_range(0..inv.len())];
            let b = inv[rng.gen_range(0..inv.len())];
            let mut y = x.clone();
            y.swap(a, b);
            let (fx, fy) = (self.eval(&x), self.eval(&y));
            (fx - fy).abs() <= 1e-10 * (1.0 + fx.abs())
        })
    }
}

/// `prod_l cos(2 pi h_l x_l)` as `sum_k c_k cos(2 pi k . x)` over sign patterns
/// with the first nonzero entry positive.
fn expand_cosine(h: &[i64], a: f64) -> Vec<(Vec<i64>, f64)> {
    let nz: Vec<usize> = (0..h.len()).filter(|&i| h[i] != 0).collect();
    if nz.is_empty() {
        return vec![(h.to_vec(), a)];
    }
    let patterns = 1usize << (nz.len() - 1);
    let c = a / patterns as f64;
    (0..patterns)
        .map(|mask| {
            let mut k = h.iter().map(|v| v.abs()).collect::<Vec<_>>();
            for (bit, &i) in nz.iter().skip(1).enumerate() {
                if mask >> bit & 1 == 1 {
                    k[i] = -k[i];
                }
            }
            (k, c)
        })
        .collect()
}

/// Average of `c cos(2 pi k . x)` over all permutations of the invariant
/// coordinates, folded so every frequency keeps its first nonzero entry positive.
fn symmetrize_term(k: &[i64], c: f64, ps: &PermStructure) -> Result<Vec<(Vec<i64>, f64)>> {
    let inv = ps.invariant();
    if inv.len() > MAX_SYMMETRIZED {
        return Err(Error::InvalidParameter(format!(
            "symmetrizing over {} coordinates exceeds the limit of {MAX_SYMMETRIZED}",
            inv.len()
        )));
    }
    let mut vals: Vec<i64> = inv.iter().map(|&i| k[i]).collect();
    vals.sort_unstable();
    let mut orbit = Vec::new();
    loop {
        let mut k2 = k.to_vec();
        for (&i, &v) in inv.iter().zip(&vals) {
            k2[i] = v;
        }
        if k2.iter().find(|&&v| v != 0).is_some_and(|&v| v < 0) {
            k2.iter_mut().for_each(|v| *v = -*v);
        }
        orbit.push(k2);
        if !next_permutation(&mut vals) {
            break;
        }
    }
    let share = c / orbit.len() as f64;
    Ok(orbit.into_iter().map(|k2| (k2, share)).collect())
}

fn next_permutation(v: &mut [i64]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("a larger entry exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Either kind of rule file.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleFile {
    Lattice(LatticeRule),
    Weighted(WeightedCubature),
}

impl RuleFile {
    pub fn parse(text: &str) -> Result<Self> {
        match LatticeRule::from_text(text) {
            Ok(rule) => Ok(RuleFile::Lattice(rule)),
            Err(lattice_err) => WeightedCubature::from_text(text)
                .map(RuleFile::Weighted)
                .map_err(|e| Error::Parse(format!("not a lattice rule ({lattice_err}) nor a weighted rule ({e})"))),
        }
    }

    pub fn to_cubature(&self) -> WeightedCubature {
        match self {
            RuleFile::Lattice(r) => r.to_cubature(),
            RuleFile::Weighted(w) => w.clone(),
        }
    }

    pub fn d(&self) -> Option<usize> {
        match self {
            RuleFile::Lattice(r) => Some(r.d()),
            RuleFile::Weighted(w) => w.d(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub value: f64,
    pub exact: f64,
    pub error: f64,
    pub norm: f64,
    pub e_wor_sq: f64,
    pub e_wor_certificate: f64,
    /// `norm * sqrt(e_wor^2 + certificate)`
    pub bound: f64,
    pub within_bound: bool,
    pub invariant: bool,
}

/// Apply `rule` to `f` and compare against the worst-case guarantee.
pub fn integrate(rule: &WeightedCubature, f: &Integrand, spec: &KernelSpec) -> Result<IntegrationReport> {
    if let Some(d) = rule.d() {
        if d != f.d() {
            return Err(Error::DimensionMismatch { expected: f.d(), found: d });
        }
    }
    let value = rule.apply(|x| f.eval(x));
    let wce = worst_case_error_sq(rule, spec)?;
    let bound = f.norm * (wce.value + wce.certificate).sqrt();
    let error = (value - f.exact_integral).abs();
    let rounding = 1e-12 * (1.0 + f.exact_integral.abs() + value.abs());
    Ok(IntegrationReport {
        value,
        exact: f.exact_integral,
        error,
        norm: f.norm,
        e_wor_sq: wce.value,
        e_wor_certificate: wce.certificate,
        bound,
        within_bound: error <= bound + rounding,
        invariant: f.is_invariant(&spec.perm, 32, 0),
    })
}
