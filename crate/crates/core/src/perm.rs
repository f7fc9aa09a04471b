//! Combinatorics of the invariant coordinate set `I_d`: group orders,
//! multiplicities `M_d(k)!`, the fundamental domain `nabla_d`, subset
//! restrictions, permanents, and cycle-type sums over `S_{I_d}`.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Largest invariant block handled by the Ryser permanent.
pub const DEFAULT_PERMANENT_CAP: usize = 24;

/// Dimension plus the set of coordinates on which functions are symmetric.
///
/// Coordinates are 0-based internally; the serialized form and
/// [`PermStructure::from_one_based`] use the 1-based convention.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPerm", into = "RawPerm")]
pub struct PermStructure {
    d: usize,
    invariant: Vec<usize>,
    is_invariant: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawPerm {
    d: usize,
    invariant: Vec<usize>,
}

impl TryFrom<RawPerm> for PermStructure {
    type Error = Error;
    fn try_from(r: RawPerm) -> Result<Self> {
        PermStructure::from_one_based(r.d, &r.invariant)
    }
}

impl From<PermStructure> for RawPerm {
    fn from(p: PermStructure) -> Self {
        RawPerm { d: p.d, invariant: p.invariant.iter().map(|i| i + 1).collect() }
    }
}

impl PermStructure {
    /// `invariant` holds 0-based coordinate indices.
    pub fn new(d: usize, invariant: &[usize]) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let mut inv = invariant.to_vec();
        inv.sort_unstable();
        inv.dedup();
        if inv.len() != invariant.len() {
            return Err(Error::InvalidParameter(format!(
                "invariant set {invariant:?} has repeated entries"
            )));
        }
        if let Some(&bad) = inv.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidParameter(format!(
                "invariant coordinate {} outside 1..={d}",
                bad + 1
            )));
        }
        let mut is_invariant = vec![false; d];
        for &i in &inv {
            is_invariant[i] = true;
        }
        Ok(PermStructure { d, invariant: inv, is_invariant })
    }

    pub fn from_one_based(d: usize, invariant: &[usize]) -> Result<Self> {
        if invariant.contains(&0) {
            return Err(Error::InvalidParameter("coordinates are numbered from 1".into()));
        }
        let zero: Vec<usize> = invariant.iter().map(|i| i - 1).collect();
        Self::new(d, &zero)
    }

    /// All coordinates invariant.
    pub fn full(d: usize) -> Result<Self> {
        Self::new(d, &(0..d).collect::<Vec<_>>())
    }

    /// No symmetry: the plain tensor-product space.
    pub fn none(d: usize) -> Result<Self> {
        Self::new(d, &[])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sorted 0-based invariant coordinates.
    pub fn invariant(&self) -> &[usize] {
        &self.invariant
    }

    pub fn is_invariant(&self, coord: usize) -> bool {
        self.is_invariant[coord]
    }

    /// Coordinates outside `I_d`, ascending.
    pub fn free(&self) -> Vec<usize> {
        (0..self.d).filter(|&i| !self.is_invariant[i]).collect()
    }

    /// `#I_d`.
    pub fn s(&self) -> usize {
        self.invariant.len()
    }

    /// `max{1, #I_d}`.
    pub fn max_one_s(&self) -> usize {
        self.s().max(1)
    }

    /// `#S_d = (#I_d)!`.
    pub fn group_order(&self) -> BigUint {
        factorial(self.s())
    }

    /// `#S_d` as a float (exact up to 18!).
    pub fn group_order_f64(&self) -> f64 {
        factorial_f64(self.s())
    }

    /// `M_d(k)! = #{P in S_d : P(k) = k}`: product of factorials of the
    /// repetition counts among the invariant coordinates.
    pub fn multiplicity(&self, k: &[i64]) -> BigUint {
        debug_assert_eq!(k.len(), self.d);
        run_lengths(self.invariant.iter().map(|&i| k[i]))
            .into_iter()
            .fold(BigUint::one(), |acc, c| acc * factorial(c))
    }

    pub fn multiplicity_f64(&self, k: &[i64]) -> f64 {
        run_lengths(self.invariant.iter().map(|&i| k[i]))
            .into_iter()
            .map(factorial_f64)
            .product()
    }

    /// `M_d(k)! / #S_d` as a float; the big integers never overflow.
    pub fn multiplicity_ratio(&self, k: &[i64]) -> f64 {
        ratio_f64(&self.multiplicity(k), &self.group_order())
    }

    /// Sort the invariant coordinates ascending; others stay in place.
    pub fn normalize_to_nabla(&self, k: &[i64]) -> Vec<i64> {
        debug_assert_eq!(k.len(), self.d);
        let mut vals: Vec<i64> = self.invariant.iter().map(|&i| k[i]).collect();
        vals.sort_unstable();
        let mut out = k.to_vec();
        for (&i, v) in self.invariant.iter().zip(vals) {
            out[i] = v;
        }
        out
    }

    pub fn in_nabla(&self, k: &[i64]) -> bool {
        self.invariant.windows(2).all(|w| k[w[0]] <= k[w[1]])
    }

    /// Restriction to a subset `u` of coordinates, given as a bitmask over
    /// `0..d`.
    pub fn restriction(&self, u_mask: u64, beta0: f64) -> SubsetRestriction {
        let size = u_mask.count_ones() as usize;
        let inter = self.invariant.iter().filter(|&&i| u_mask >> i & 1 == 1).count();
        let binom = binomial_f64(self.s(), inter);
        SubsetRestriction {
            u_mask,
            size,
            intersection: inter,
            constant: beta0.powi(size as i32) * binom,
        }
    }

    /// `M_{u,I_d}(h_u)!`: repetition factorials among coordinates of
    /// `u` that are invariant. `h` is indexed by the full coordinate range.
    pub fn restricted_multiplicity_f64(&self, h: &[i64], u_mask: u64) -> f64 {
        run_lengths(self.invariant.iter().filter(|&&i| u_mask >> i & 1 == 1).map(|&i| h[i]))
            .into_iter()
            .map(factorial_f64)
            .product()
    }
}

/// `u`, `s = #(I_d ∩ u)` and `c_{u,I_d} = beta0^{#u} binom(#I_d, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetRestriction {
    pub u_mask: u64,
    pub size: usize,
    pub intersection: usize,
    pub constant: f64,
}

fn run_lengths(vals: impl Iterator<Item = i64>) -> Vec<usize> {
    let mut v: Vec<i64> = vals.collect();
    v.sort_unstable();
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        out.push(j - i);
        i = j;
    }
    out
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

pub fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// `a / b` for big integers without intermediate overflow.
pub fn ratio_f64(a: &BigUint, b: &BigUint) -> f64 {
    if b.is_zero() {
        return f64::INFINITY;
    }
    match (a.to_f64(), b.to_f64()) {
        (Some(x), Some(y)) if x.is_finite() && y.is_finite() && y > 0.0 => x / y,
        _ => {
            let shift = b.bits().saturating_sub(60);
            let (a2, b2) = (a >> shift, b >> shift);
            a2.to_f64().unwrap_or(f64::INFINITY) / b2.to_f64().unwrap_or(f64::INFINITY)
        }
    }
}

/// Scalars accepted by the permanent routines.
pub trait PermScalar: Copy + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn negate(self) -> Self;
}

impl PermScalar for f64 {
    fn negate(self) -> Self {
        -self
    }
}

impl PermScalar for Complex64 {
    fn negate(self) -> Self {
        -self
    }
}

/// Permanent of a square matrix given as rows, by Ryser's inclusion-exclusion
/// formula with Gray-code column updates: `O(2^s s)` operations.
pub fn permanent<T: PermScalar>(a: &[Vec<T>]) -> T {
    let s = a.len();
    if s == 0 {
        return T::one();
    }
    debug_assert!(a.iter().all(|r| r.len() == s));
    if s == 1 {
        return a[0][0];
    }
    if s == 2 {
        return a[0][0] * a[1][1] + a[0][1] * a[1][0];
    }
    let mut row_sums = vec![T::zero(); s];
    let mut total = T::zero();
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << s) {
        let next = step ^ (step >> 1);
        let col = (next ^ gray).trailing_zeros() as usize;
        let adding = next & (1 << col) != 0;
        for (rs, row) in row_sums.iter_mut().zip(a) {
            *rs = if adding { *rs + row[col] } else { *rs - row[col] };
        }
        gray = next;
        let prod = row_sums.iter().fold(T::one(), |acc, &x| acc * x);
        // sign (-1)^{s - |S|}
        if (s as u32 - next.count_ones()).is_multiple_of(2) {
            total = total + prod;
        } else {
            total = total - prod;
        }
    }
    total
}

/// `perm(A) * prod(fixed)`: the sum over permutations of the invariant block
/// of products of univariate factors, times the factors of the remaining
/// coordinates.
pub fn sym_perm_sum<T: PermScalar>(a: &[Vec<T>], fixed: &[T], cap: usize) -> Result<T> {
    if a.len() > cap {
        return Err(Error::PermanentCap { size: a.len(), cap });
    }
    if a.iter().any(|r| r.len() != a.len()) {
        return Err(Error::InvalidParameter("permanent needs a square matrix".into()));
    }
    let rest = fixed.iter().fold(T::one(), |acc, &x| acc * x);
    Ok(permanent(a) * rest)
}

/// `sum_{P in Sym(B)} prod_{cycles C of P} f(C)` for a block `B` of size `s`,
/// with cycles passed to `f` as bitmasks over `0..s`.
///
/// Grouping permutations by the set partition formed by their cycles gives
/// `sum_{partitions} prod_{blocks} (|B| - 1)! f(B)`, evaluated by a subset
/// recursion in `O(3^s)`.
pub fn cycle_sum(s: usize, mut f: impl FnMut(u32) -> f64) -> f64 {
    assert!(s <= 20, "cycle_sum over {s} elements");
    if s == 0 {
        return 1.0;
    }
    let full = (1u32 << s) - 1;
    let mut block = vec![0.0; 1 << s];
    for (mask, b) in block.iter_mut().enumerate().skip(1) {
        let k = (mask as u32).count_ones() as usize;
        *b = factorial_f64(k - 1) * f(mask as u32);
    }
    let mut acc = vec![0.0; 1 << s];
    acc[0] = 1.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // subsets of `mask` containing its lowest element
        let mut sub = rest;
        let mut total = 0.0;
        loop {
            let blk = sub | low;
            total += block[blk as usize] * acc[(mask ^ blk) as usize];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        acc[mask as usize] = total;
    }
    acc[full as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_perms(s: usize) -> Vec<Vec<usize>> {
        if s == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_perms(s - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, s - 1);
                out.push(q);
            }
        }
        out
    }

    fn naive_permanent(a: &[Vec<Complex64>]) -> Complex64 {
        all_perms(a.len())
            .iter()
            .map(|p| p.iter().enumerate().fold(Complex64::new(1.0, 0.0), |acc, (i, &j)| acc * a[i][j]))
            .sum()
    }

    /// Count permutations of the invariant coordinates that fix `k`.
    fn brute_multiplicity(ps: &PermStructure, k: &[i64]) -> usize {
        let inv = ps.invariant();
        all_perms(inv.len())
            .iter()
            .filter(|p| p.iter().enumerate().all(|(i, &j)| k[inv[i]] == k[inv[j]]))
            .count()
    }

    #[test]
    fn multiplicity_examples() {
        let ps = PermStructure::none(3).unwrap();
        assert_eq!(ps.multiplicity(&[1, 1, 1]), BigUint::one());
        let ps = PermStructure::full(3).unwrap();
        assert_eq!(ps.multiplicity(&[3, 3, 3]), BigUint::from(6u32));
        let ps = PermStructure::from_one_based(4, &[1, 2, 3]).unwrap();
        let k = [1, 2, 2, 5];
        assert_eq!(ps.multiplicity(&k), BigUint::from(2u32));
        assert_eq!(brute_multiplicity(&ps, &k), 2);
    }

    #[test]
    fn big_group_orders_do_not_overflow() {
        let ps = PermStructure::full(25).unwrap();
        assert!(ps.group_order() > BigUint::from(u64::MAX));
        let k = vec![0i64; 25];
        assert_eq!(ps.multiplicity_ratio(&k), 1.0);
        let mut k: Vec<i64> = (0..25).collect();
        k[0] = 1;
        let r = ps.multiplicity_ratio(&k);
        assert!((r - 2.0 / factorial_f64(25)).abs() < 1e-12 * r);
    }

    #[test]
    fn invalid_structures() {
        assert!(PermStructure::new(0, &[]).is_err());
        assert!(PermStructure::new(3, &[3]).is_err());
        assert!(PermStructure::new(3, &[1, 1]).is_err());
        assert!(PermStructure::from_one_based(3, &[0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let ps = PermStructure::from_one_based(3, &[1, 2]).unwrap();
        assert_eq!(ps.normalize_to_nabla(&[5, 1, 9]), vec![1, 5, 9]);
        assert_eq!(ps.normalize_to_nabla(&[1, 5, 9]), vec![1, 5, 9]);
    }

    #[test]
    fn normalize_matches_orbit_minimum() {
        let ps = PermStructure::from_one_based(4, &[1, 3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k: Vec<i64> = (0..4).map(|_| rng.gen_range(-3..=3)).collect();
            let inv = ps.invariant();
            let orbit_min = all_perms(inv.len())
                .into_iter()
                .map(|p| {
                    let mut q = k.clone();
                    for (i, &j) in p.iter().enumerate() {
                        q[inv[i]] = k[inv[j]];
                    }
                    q
                })
                .filter(|q| ps.in_nabla(q))
                .min()
                .unwrap();
            assert_eq!(ps.normalize_to_nabla(&k), orbit_min);
        }
    }

    #[test]
    fn restriction_constants() {
        let ps = PermStructure::from_one_based(4, &[2, 3]).unwrap();
        let r = ps.restriction(0b0001, 0.5);
        assert_eq!(r.intersection, 0);
        assert_eq!(r.constant, 0.5);
        let r = ps.restriction(0b0111, 2.0);
        assert_eq!(r.intersection, 2);
        assert_eq!(r.constant, 8.0);
        let r = ps.restriction(0b0011, 1.0);
        assert_eq!(r.constant, 2.0);
    }

    #[test]
    fn permanent_small_cases() {
        let c = |x: f64| Complex64::new(x, 0.0);
        assert_eq!(sym_perm_sum(&[vec![c(3.0)]], &[c(2.0)], 24).unwrap(), c(6.0));
        let (a, b, cc, d) = (c(1.5), c(-2.0), c(0.25), c(4.0));
        let p = permanent(&[vec![a, b], vec![cc, d]]);
        assert_eq!(p, a * d + b * cc);
        let m3 = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        assert_eq!(permanent(&m3), 450.0);
        assert!(matches!(
            sym_perm_sum(&vec![vec![1.0; 3]; 3], &[], 2),
            Err(Error::PermanentCap { size: 3, cap: 2 })
        ));
    }

    #[test]
    fn permanent_matches_naive_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<Vec<Complex64>> = (0..6)
            .map(|_| (0..6).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let r = permanent(&a);
        let n = naive_permanent(&a);
        assert!((r - n).norm() <= 1e-12 * n.norm(), "{r} vs {n}");
    }

    #[test]
    fn cycle_sum_counts_and_matches_brute_force() {
        // f = 1 counts permutations
        for s in 0..7 {
            assert_eq!(cycle_sum(s, |_| 1.0), factorial_f64(s));
        }
        // weight every cycle by a function of its element set and compare
        let w = |mask: u32| 1.0 + 0.1 * mask as f64 + 0.37 * (mask.count_ones() as f64).powi(2);
        for s in 1..6 {
            let brute: f64 = all_perms(s)
                .iter()
                .map(|p| {
                    let mut seen = 0u32;
                    let mut prod = 1.0;
                    for start in 0..s {
                        if seen >> start & 1 == 1 {
                            continue;
                        }
                        let mut mask = 0u32;
                        let mut j = start;
                        while mask >> j & 1 == 0 {
                            mask |= 1 << j;
                            j = p[j];
                        }
                        seen |= mask;
                        prod *= w(mask);
                    }
                    prod
                })
                .sum();
            let fast = cycle_sum(s, w);
            assert!((fast - brute).abs() < 1e-10 * brute, "s={s}: {fast} vs {brute}");
        }
    }

    proptest! {
        #[test]
        fn multiplicity_invariant_under_normalization(k in proptest::collection::vec(-4i64..4, 5)) {
            let ps = PermStructure::from_one_based(5, &[1, 2, 4, 5]).unwrap();
            let nk = ps.normalize_to_nabla(&k);
            prop_assert_eq!(ps.multiplicity(&k), ps.multiplicity(&nk));
            prop_assert!(ps.in_nabla(&nk));
            prop_assert_eq!(ps.normalize_to_nabla(&nk), nk.clone());
            prop_assert_eq!(ps.multiplicity(&k).to_usize().unwrap(), brute_multiplicity(&ps, &k));
        }

        /// Scaling one invariant entry by n raises M_{u,I}! by at most max{1, #I}.
        #[test]
        fn scaled_entry_multiplicity_bound(
            hv in proptest::collection::vec(prop_oneof![-6i64..=-1, 1i64..=6], 3),
            k in prop_oneof![-6i64..=-1, 1i64..=6],
            n in 2i64..8,
        ) {
            let ps = PermStructure::full(4).unwrap();
            let u = 0b1111u64;
            let mut a = hv.clone();
            a.push(n * k);
            let mut b = hv.clone();
            b.push(k);
            let lhs = ps.restricted_multiplicity_f64(&a, u);
            let rhs = ps.max_one_s() as f64 * ps.restricted_multiplicity_f64(&b, u);
            prop_assert!(lhs <= rhs);
        }

        /// sum_{k in nabla, box} (1/M(k)!) sum_P G(P(k)) = sum_{h in box} G(h)
        #[test]
        fn orbit_sum_identity(seed in 0u64..1000) {
            let ps = PermStructure::from_one_based(3, &[1, 3]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coef: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = |h: &[i64]| (h.iter().zip(&coef).map(|(&x, c)| x as f64 * c).sum::<f64>()).sin() + 0.1 * h[0] as f64;
            let range = -2i64..=2;
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            let inv = ps.invariant().to_vec();
            for a in range.clone() { for b in range.clone() { for c in range.clone() {
                let h = [a, b, c];
                rhs += g(&h);
                if ps.in_nabla(&h) {
                    let m = ps.multiplicity_f64(&h);
                    for p in all_perms(inv.len()) {
                        let mut q = h;
                        for (i, &j) in p.iter().enumerate() { q[inv[i]] = h[inv[j]]; }
                        lhs += g(&q) / m;
                    }
                }
            }}}
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
