//! Rank-1 lattice rules, shifts, dual lattices and general weighted
//! cubature rules.

use crate::error::{Error, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in SMALL {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes in `lo..=hi`.
pub fn primes_between(lo: u64, hi: u64) -> Vec<u64> {
    (lo..=hi).filter(|&n| is_prime(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRule {
    n: u64,
    z: Vec<u64>,
    shift: Option<Vec<f64>>,
}

impl LatticeRule {
    pub fn new(n: u64, z: Vec<u64>) -> Result<Self> {
        if !is_prime(n) {
            return Err(Error::NotPrime(n));
        }
        if z.is_empty() {
            return Err(Error::InvalidParameter("generating vector is empty".into()));
        }
        let z = z.into_iter().map(|c| c % n).collect();
        Ok(LatticeRule { n, z, shift: None })
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != self.z.len() {
            return Err(Error::DimensionMismatch { expected: self.z.len(), found: shift.len() });
        }
        if shift.iter().any(|&s| !(0.0..1.0).contains(&s)) {
            return Err(Error::InvalidParameter("shift entries must lie in [0, 1)".into()));
        }
        self.shift = Some(shift);
        Ok(self)
    }

    pub fn unshifted(&self) -> LatticeRule {
        LatticeRule { n: self.n, z: self.z.clone(), shift: None }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[u64] {
        &self.z
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    /// `t^(j) = {z j / n + Delta}`, from the exact residue `j z mod n`.
    pub fn point(&self, j: u64) -> Vec<f64> {
        let n = self.n as u128;
        self.z
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                let base = ((j as u128 * c as u128) % n) as f64 / self.n as f64;
                match &self.shift {
                    Some(s) => wrap(base + s[l]),
                    None => base,
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// `h . z == 0 (mod n)` in exact integer arithmetic.
    pub fn dual_contains(&self, h: &[i64]) -> bool {
        dual_membership(h, &self.z, self.n)
    }

    pub fn to_cubature(&self) -> WeightedCubature {
        WeightedCubature::equal_weight(self.points())
    }

    /// Plain-text form: `n d`, then `z`, then the shift if present.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.d());
        let zs: Vec<String> = self.z.iter().map(|c| c.to_string()).collect();
        s.push_str(&zs.join(" "));
        s.push('\n');
        if let Some(shift) = &self.shift {
            let ds: Vec<String> = shift.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&ds.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty lattice file".into()))?;
        let hv = parse_ints(header)?;
        if hv.len() != 2 {
            return Err(Error::Parse(format!("expected 'n d', found '{header}'")));
        }
        let (n, d) = (hv[0], hv[1] as usize);
        let z = parse_ints(lines.next().ok_or_else(|| Error::Parse("missing generating vector".into()))?)?;
        if z.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: z.len() });
        }
        let rule = LatticeRule::new(n, z)?;
        match lines.next() {
            Some(line) => rule.with_shift(parse_floats(line)?),
            None => Ok(rule),
        }
    }
}

fn parse_ints(line: &str) -> Result<Vec<u64>> {
    line.split_whitespace()
        .map(|t| t.parse::<u64>().map_err(|e| Error::Parse(format!("'{t}': {e}"))))
        .collect()
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("'{t}': {e}"))))
        .collect()
}

fn wrap(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

pub fn dual_membership(h: &[i64], z: &[u64], n: u64) -> bool {
    let n = n as i128;
    let dot = h.iter().zip(z).fold(0i128, |acc, (&hi, &zi)| (acc + hi as i128 * zi as i128).rem_euclid(n));
    dot == 0
}

/// `(1/n) sum_j exp(2 pi i h j / n)`: 1 if `n | h`, otherwise `1/n`
/// for the prime-modulus averages used in the constructions.
pub fn character_average(h: i64, n: u64) -> Ratio<u64> {
    if h.rem_euclid(n as i64) == 0 {
        Ratio::from_integer(1)
    } else {
        Ratio::new(1, n)
    }
}

/// Nodes with real weights; the rule is `(1/N) sum_j w_j f(t_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCubature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedCubature {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len(), found: weights.len() });
        }
        if let Some(d) = nodes.first().map(Vec::len) {
            if let Some(bad) = nodes.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
            }
        }
        Ok(WeightedCubature { nodes, weights })
    }

    pub fn equal_weight(nodes: Vec<Vec<f64>>) -> Self {
        let weights = vec![1.0; nodes.len()];
        WeightedCubature { nodes, weights }
    }

    pub fn empty() -> Self {
        WeightedCubature { nodes: Vec::new(), weights: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn d(&self) -> Option<usize> {
        self.nodes.first().map(Vec::len)
    }

    /// Effective weights `w_j / N`.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.weights.iter().map(|w| w / n).collect()
    }

    pub fn apply(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(t)).sum();
        s / self.len() as f64
    }

    /// Header `N d`, then one line `w t_1 ... t_d` per node.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.d().unwrap_or(0));
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            write!(s, "{w:.16e}").unwrap();
            for v in t {
                write!(s, " {v:.16e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty rule file".into()))?;
        let hv = parse_ints(header)?;
        if hv.len() != 2 {
            return Err(Error::Parse(format!("expected 'N d', found '{header}'")));
        }
        let (n, d) = (hv[0] as usize, hv[1] as usize);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for line in lines {
            let v = parse_floats(line)?;
            if v.len() != d + 1 {
                return Err(Error::DimensionMismatch { expected: d + 1, found: v.len() });
            }
            weights.push(v[0]);
            nodes.push(v[1..].to_vec());
        }
        if nodes.len() != n {
            return Err(Error::Parse(format!("header announces {n} nodes, found {}", nodes.len())));
        }
        WeightedCubature::new(nodes, weights)
    }

    /// Parse either a node/weight file or a lattice file.
    pub fn from_any_text(text: &str) -> Result<Self> {
        let second = text.lines().map(str::trim).filter(|l| !l.is_empty()).nth(1);
        let d = text
            .lines()
            .next()
            .and_then(|h| h.split_whitespace().nth(1))
            .and_then(|t| t.parse::<usize>().ok());
        match (second, d) {
            (Some(line), Some(d)) if line.split_whitespace().count() == d && !line.contains('.') => {
                Ok(LatticeRule::from_text(text)?.to_cubature())
            }
            _ => Self::from_text(text),
        }
    }
}
