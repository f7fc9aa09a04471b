//! The weight sequence `r(k)` that defines the periodic function space, its
//! generator `R`, and the scalar constants obtained from tail sums of
//! `R(m)^{-2a}`.
//!
//! The univariate weight is `1/beta0` on the zero frequency and
//! `R(|k|)^{2 alpha} / beta1` elsewhere; multivariate weights are products.

use crate::enclosure::Enclosure;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default cutoff for explicit partial sums in [`SpectralWeight::tail_sum`].
pub const DEFAULT_TAIL_CUTOFF: u64 = 1_000_000;

/// Largest `n * m` probed when checking the growth condition on `R`.
const GROWTH_CHECK_LIMIT: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `R(m) = 2 pi m`.
    KorobovLinear,
    /// `R(m) = m`.
    PlainLinear,
    /// `R(m) = values[m - 1]` for `m <= values.len()`, then `slope * m`.
    Tabulated { values: Vec<f64>, slope: f64 },
}

impl Generator {
    pub fn eval(&self, m: u64) -> f64 {
        debug_assert!(m >= 1);
        match self {
            Generator::KorobovLinear => 2.0 * PI * m as f64,
            Generator::PlainLinear => m as f64,
            Generator::Tabulated { values, slope } => {
                if (m as usize) <= values.len() {
                    values[m as usize - 1]
                } else {
                    slope * m as f64
                }
            }
        }
    }

    /// Number of leading values that do not follow the linear asymptote.
    pub fn table_len(&self) -> u64 {
        match self {
            Generator::Tabulated { values, .. } => values.len() as u64,
            _ => 0,
        }
    }

    /// Slope `c` of the linear regime `R(m) = c m`.
    pub fn slope(&self) -> f64 {
        match self {
            Generator::KorobovLinear => 2.0 * PI,
            Generator::PlainLinear => 1.0,
            Generator::Tabulated { slope, .. } => *slope,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Generator::Tabulated { values, slope } = self {
            if !(slope.is_finite() && *slope > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tabulated generator slope must be positive, got {slope}"
                )));
            }
            let mut prev = 0.0;
            for (i, &v) in values.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "R({}) = {v} must be positive",
                        i + 1
                    )));
                }
                if v < prev {
                    return Err(Error::InvalidParameter(format!(
                        "R must be non-decreasing, R({}) = {v} < {prev}",
                        i + 1
                    )));
                }
                prev = v;
            }
            let next = slope * (values.len() + 1) as f64;
            if next < prev {
                return Err(Error::InvalidParameter(format!(
                    "linear continuation {next} falls below the last tabulated value {prev}"
                )));
            }
        }
        Ok(())
    }
}

/// The weight system `(alpha, beta0, beta1, R, c_R)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralWeight {
    alpha: f64,
    beta0: f64,
    beta1: f64,
    generator: Generator,
    c_r: f64,
}

#[derive(Deserialize)]
struct RawWeight {
    alpha: f64,
    beta0: f64,
    beta1: f64,
    generator: Generator,
    #[serde(default)]
    c_r: Option<f64>,
}

impl<'de> Deserialize<'de> for SpectralWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawWeight::deserialize(d)?;
        let c_r = match (raw.c_r, &raw.generator) {
            (Some(c), _) => c,
            (None, Generator::Tabulated { .. }) => {
                return Err(serde::de::Error::custom(
                    "a tabulated generator needs an explicit c_r",
                ))
            }
            (None, _) => 1.0,
        };
        SpectralWeight::new(raw.alpha, raw.beta0, raw.beta1, raw.generator, c_r)
            .map_err(serde::de::Error::custom)
    }
}

impl SpectralWeight {
    pub fn new(alpha: f64, beta0: f64, beta1: f64, generator: Generator, c_r: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1/2, got {alpha}")));
        }
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta0 must be positive, got {beta0}")));
        }
        if !(beta1 > 0.0 && beta1.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta1 must be positive, got {beta1}")));
        }
        if !(c_r >= 1.0 && c_r.is_finite()) {
            return Err(Error::InvalidParameter(format!("c_R must be at least 1, got {c_r}")));
        }
        generator.validate()?;
        let w = SpectralWeight { alpha, beta0, beta1, generator, c_r };
        w.check_growth()?;
        Ok(w)
    }

    /// Periodic unanchored Sobolev-type space: `beta0 = beta1 = 1`, `R(m) = 2 pi m`.
    pub fn sobolev(alpha: f64) -> Result<Self> {
        Self::korobov(alpha, 1.0, 1.0)
    }

    pub fn korobov(alpha: f64, beta0: f64, beta1: f64) -> Result<Self> {
        Self::new(alpha, beta0, beta1, Generator::KorobovLinear, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta0(&self) -> f64 {
        self.beta0
    }
    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn generator(&self) -> &Generator {
        &self.generator
    }
    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    /// Same space with `beta1` replaced.
    pub fn with_beta1(&self, beta1: f64) -> Result<Self> {
        Self::new(self.alpha, self.beta0, beta1, self.generator.clone(), self.c_r)
    }

    /// `R(m) / c_R <= R(n m) / n <= R(m)` on all probed `n, m`.
    fn check_growth(&self) -> Result<()> {
        let limit = GROWTH_CHECK_LIMIT.max(4 * self.generator.table_len());
        let tol = 1e-12;
        for m in 1..=limit {
            let rm = self.generator.eval(m);
            let mut n = 1;
            while n * m <= limit {
                let ratio = self.generator.eval(n * m) / n as f64;
                if ratio > rm * (1.0 + tol) || ratio < rm / self.c_r * (1.0 - tol) {
                    return Err(Error::InvalidParameter(format!(
                        "growth condition R(m)/c_R <= R(nm)/n <= R(m) fails at m={m}, n={n}"
                    )));
                }
                n += 1;
            }
        }
        Ok(())
    }

    /// `R(m)` for `m >= 1`.
    pub fn generator_value(&self, m: u64) -> f64 {
        self.generator.eval(m)
    }

    /// Univariate weight `r(k)`.
    pub fn r_factor(&self, k: i64) -> f64 {
        if k == 0 {
            1.0 / self.beta0
        } else {
            self.generator.eval(k.unsigned_abs()).powf(2.0 * self.alpha) / self.beta1
        }
    }

    /// `ln r(k)` for one coordinate.
    pub fn ln_r_factor(&self, k: i64) -> f64 {
        if k == 0 {
            -self.beta0.ln()
        } else {
            2.0 * self.alpha * self.generator.eval(k.unsigned_abs()).ln() - self.beta1.ln()
        }
    }

    /// `r(k)^{-power}` for one coordinate, computed in the log domain.
    pub fn r_inv_pow_factor(&self, k: i64, power: f64) -> f64 {
        (-power * self.ln_r_factor(k)).exp()
    }

    /// `r(k)^{-1}` for one coordinate.
    pub fn r_inv_factor(&self, k: i64) -> f64 {
        if k == 0 {
            self.beta0
        } else {
            self.beta1 * self.generator.eval(k.unsigned_abs()).powf(-2.0 * self.alpha)
        }
    }

    /// Multivariate weight `r(k)`. Saturates with an error instead of
    /// returning infinity.
    pub fn r_weight(&self, k: &[i64]) -> Result<f64> {
        if k.is_empty() {
            return Err(Error::InvalidParameter("empty index vector".into()));
        }
        let ln: f64 = k.iter().map(|&ki| self.ln_r_factor(ki)).sum();
        let v = ln.exp();
        if !v.is_finite() {
            return Err(Error::Overflow(format!("r(k) = exp({ln}) for k = {k:?}")));
        }
        Ok(v)
    }

    /// `r(k)^{-1}` accumulated in the log domain, so it never overflows.
    pub fn r_inv(&self, k: &[i64]) -> f64 {
        let ln: f64 = k.iter().map(|&ki| self.ln_r_factor(ki)).sum();
        (-ln).exp()
    }

    /// `r(k)^{-power}` for a multi-index.
    pub fn r_inv_pow(&self, k: &[i64], power: f64) -> f64 {
        let ln: f64 = k.iter().map(|&ki| self.ln_r_factor(ki)).sum();
        (-power * ln).exp()
    }

    /// `sum_{m >= start} R(m)^{-2 exponent}` with the default cutoff.
    pub fn tail_sum(&self, exponent: f64, start: u64) -> Result<Enclosure> {
        self.tail_sum_with_cutoff(exponent, start, DEFAULT_TAIL_CUTOFF)
    }

    /// Enclosure of `sum_{m >= start} R(m)^{-2 exponent}`.
    ///
    /// Terms up to `max(cutoff, table length)` are summed explicitly; the
    /// remainder lies in the linear regime `R(m) = c m`, where
    /// `f(x) = (c x)^{-2e}` is convex and decreasing, so
    /// `int_{M+1}^inf f + f(M+1)/2 <= sum_{m > M} f(m) <= int_{M+1/2}^inf f`.
    pub fn tail_sum_with_cutoff(&self, exponent: f64, start: u64, cutoff: u64) -> Result<Enclosure> {
        if !(exponent > 0.5) {
            return Err(Error::Domain(format!(
                "sum of R(m)^(-2*{exponent}) diverges for a linearly growing generator"
            )));
        }
        let start = start.max(1);
        let last = cutoff.max(self.generator.table_len()).max(start - 1);
        let p = 2.0 * exponent;
        let mut partial = 0.0f64;
        let mut comp = 0.0f64;
        let int_p = integer_value(p).filter(|&k| k <= 64).map(|k| k as i32);
        let mut m = last;
        while m >= start {
            let g = self.generator.eval(m);
            let x = match int_p {
                Some(k) => 1.0 / g.powi(k),
                None => g.powf(-p),
            };
            let t = partial + x;
            comp += if partial.abs() >= x.abs() { (partial - t) + x } else { (x - t) + partial };
            partial = t;
            m -= 1;
        }
        partial += comp;
        // per-term powf rounding plus the compensated-sum error
        let slack = 8.0 * f64::EPSILON * partial;
        let c = self.generator.slope();
        let antideriv = |a: f64| c.powf(-p) * a.powf(1.0 - p) / (p - 1.0);
        let a = (last + 1) as f64;
        let lower = antideriv(a) + 0.5 * (c * a).powf(-p);
        let upper = antideriv(a - 0.5);
        Ok(Enclosure::new(
            (partial - slack + lower).max(0.0),
            partial + slack + upper.max(lower),
        ))
    }

    /// `N_R(alpha) = sum_{m >= 1} R(m)^{-2 alpha}`.
    pub fn n_r(&self) -> Result<Enclosure> {
        self.tail_sum(self.alpha, 1)
    }

    /// Enclosure of `sum_{h in Z} r(h)^{-power}`; with `include_zero = false`
    /// the `h = 0` term is left out.
    pub fn univariate_inv_sum(&self, power: f64, include_zero: bool) -> Result<Enclosure> {
        let tail = self.tail_sum(self.alpha * power, 1)?;
        let mut s = tail.scale(2.0 * self.beta1.powf(power));
        if include_zero {
            s = s + Enclosure::point(self.beta0.powf(power));
        }
        Ok(s)
    }

    /// `eta*(V) = (2 beta1 / beta0) sum_{m > V} R(m)^{-2 alpha}`.
    pub fn eta_star(&self, v: u64) -> Result<EtaStar> {
        let value = self.tail_sum(self.alpha, v + 1)?.scale(2.0 * self.beta1 / self.beta0);
        Ok(EtaStar { v_star: v, value, below_one: value.hi < 1.0 })
    }

    /// Smallest `V <= max_v` with a certified `eta*(V) < 1`.
    pub fn minimal_v_star(&self, max_v: u64) -> Result<Option<EtaStar>> {
        for v in 0..=max_v {
            let eta = self.eta_star(v)?;
            if eta.below_one {
                return Ok(Some(eta));
            }
        }
        Ok(None)
    }

    /// `2 beta1 / (beta0 R(m)^{2 alpha}) <= 1` for all `m`; by monotonicity of
    /// `R` it is enough to test `m = 1`.
    pub fn satisfies_assump(&self) -> bool {
        2.0 * self.beta1 / (self.beta0 * self.generator.eval(1).powf(2.0 * self.alpha)) <= 1.0
    }

    /// The weaker condition `beta1 / (beta0 R(m)^{2 alpha}) <= 1`.
    pub fn satisfies_assump_new(&self) -> bool {
        self.beta1 / (self.beta0 * self.generator.eval(1).powf(2.0 * self.alpha)) <= 1.0
    }

    /// True when `alpha` is an integer and `R(m) = 2 pi m`, which enables the
    /// Bernoulli-polynomial closed forms.
    pub fn has_closed_form(&self) -> bool {
        matches!(self.generator, Generator::KorobovLinear) && integer_value(self.alpha).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaStar {
    pub v_star: u64,
    pub value: Enclosure,
    pub below_one: bool,
}

pub(crate) fn integer_value(x: f64) -> Option<u32> {
    let r = x.round();
    if (x - r).abs() < 1e-12 && (1.0..64.0).contains(&r) {
        Some(r as u32)
    } else {
        None
    }
}
