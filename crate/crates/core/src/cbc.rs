//! Component-by-component construction of generating vectors and the search
//! for a good random shift.

use crate::error::{Error, Result};
use crate::error_engine::{
    bound_constant_cdl, cbc_bound, cbc_objective, mean_sq_error_decomposed, worst_case_error_sq, OmegaTable,
};
use crate::kernels::KernelSpec;
use crate::lattice::{is_prime, LatticeRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Total trials of a shift search never exceed this multiple of the request.
pub const SHIFT_TRIAL_GROWTH_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum CbcMode {
    #[default]
    Minimize,
    BetterThanAverage { lambda: f64 },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSearch {
    pub rule: LatticeRule,
    pub e2: f64,
    pub certificate: f64,
    /// Mean over all shifts the search tries to beat.
    pub target: f64,
    pub trials_used: usize,
    pub seed: u64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbcResult {
    pub rule: LatticeRule,
    pub mode: CbcMode,
    pub per_step_objective: Vec<f64>,
    pub per_step_certificate: Vec<f64>,
    /// `(1 + c_R) C_{d,1} max{1,#I_d} / n`.
    pub certified_bound: f64,
    #[serde(rename = "achieved_E2")]
    pub achieved_mean_e2: f64,
    pub achieved_mean_e2_certificate: f64,
    pub achieved_e2_shifted: Option<f64>,
    pub shift: Option<ShiftSearch>,
}

impl CbcResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// The mean error respects the certified bound up to its certificate.
    pub fn bound_holds(&self) -> bool {
        self.achieved_mean_e2 <= self.certified_bound + self.achieved_mean_e2_certificate
    }
}

fn check_n(spec: &KernelSpec, n: u64) -> Result<()> {
    if !is_prime(n) {
        return Err(Error::NotPrime(n));
    }
    if (n as f64) < spec.weight.c_r() {
        return Err(Error::InvalidParameter(format!("n = {n} is below c_R = {}", spec.weight.c_r())));
    }
    Ok(())
}

/// Objective values `B(z_1..z_{l-1}, c)` for every `c` in `Z_n`.
pub fn objective_scan(prefix: &[u64], spec: &KernelSpec, table: &OmegaTable) -> Result<Vec<(f64, f64)>> {
    let n = table.n();
    (0..n)
        .into_par_iter()
        .map(|c| {
            let mut z = prefix.to_vec();
            z.push(c);
            cbc_objective(&z, spec, table).map(|e| (e.value, e.certificate))
        })
        .collect()
}

/// Choose `z_1 = 1` and then each further component by minimizing the
/// objective (ties go to the smallest candidate) or by taking the first
/// candidate whose `B^{1/lambda}` is at most the average over `Z_n`.
pub fn cbc_construct(spec: &KernelSpec, n: u64, mode: CbcMode) -> Result<CbcResult> {
    check_n(spec, n)?;
    let d = spec.d();
    if let CbcMode::BetterThanAverage { lambda } = mode {
        if !(lambda >= 1.0 && lambda < 2.0 * spec.weight.alpha()) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} outside [1, 2 alpha)")));
        }
    }
    let table = OmegaTable::new(spec, n, spec.perm.s());
    let mut z = vec![1u64];
    let first = cbc_objective(&z, spec, &table)?;
    let mut objective = vec![first.value];
    let mut certs = vec![first.certificate];
    for _ in 2..=d {
        let scan = objective_scan(&z, spec, &table)?;
        let pick = match mode {
            CbcMode::Minimize => {
                let mut best = 0;
                for (c, v) in scan.iter().enumerate() {
                    if v.0 < scan[best].0 {
                        best = c;
                    }
                }
                best
            }
            CbcMode::BetterThanAverage { lambda } => {
                let avg = scan.iter().map(|v| v.0.powf(1.0 / lambda)).sum::<f64>() / n as f64;
                scan.iter()
                    .position(|v| v.0.powf(1.0 / lambda) <= avg)
                    .expect("some candidate is at most the average")
            }
        };
        z.push(pick as u64);
        objective.push(scan[pick].0);
        certs.push(scan[pick].1);
    }
    let rule = LatticeRule::new(n, z)?;
    let b0d = spec.weight.beta0().powi(d as i32);
    let c_d1 = bound_constant_cdl(spec, 1.0)?;
    Ok(CbcResult {
        rule,
        mode,
        certified_bound: cbc_bound(c_d1.hi, spec.weight.c_r(), spec.perm.s(), n, 1.0),
        achieved_mean_e2: b0d * objective.iter().sum::<f64>(),
        achieved_mean_e2_certificate: b0d * certs.iter().sum::<f64>() + 1e-14 * b0d * objective.iter().sum::<f64>(),
        per_step_objective: objective,
        per_step_certificate: certs,
        achieved_e2_shifted: None,
        shift: None,
    })
}

/// Random shifts drawn uniformly from `[0,1)^d` by a seeded ChaCha stream;
/// the zero shift is always candidate 0. If no candidate reaches the mean
/// over all shifts, the number of trials is doubled until
/// [`SHIFT_TRIAL_GROWTH_CAP`] times the request; the best shift is returned
/// either way and the outcome flagged if the mean was never reached.
pub fn shift_search(rule: &LatticeRule, spec: &KernelSpec, trials: usize, seed: u64) -> Result<ShiftSearch> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one shift trial is needed".into()));
    }
    let base = rule.unshifted();
    let target = mean_sq_error_decomposed(&base, spec)?;
    let d = base.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = worst_case_error_sq(&base.to_cubature(), spec)?;
    let mut best = (vec![0.0; d], zero.value, zero.certificate);
    let mut used = 1;
    let mut budget = trials;
    let cap = trials.saturating_mul(SHIFT_TRIAL_GROWTH_CAP);
    loop {
        while used < budget {
            let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let e = worst_case_error_sq(&base.clone().with_shift(shift.clone())?.to_cubature(), spec)?;
            if e.value < best.1 {
                best = (shift, e.value, e.certificate);
            }
            used += 1;
        }
        if best.1 <= target.value || budget >= cap {
            break;
        }
        budget = (budget * 2).min(cap);
    }
    Ok(ShiftSearch {
        rule: base.with_shift(best.0)?,
        e2: best.1,
        certificate: best.2,
        target: target.value,
        trials_used: used,
        seed,
        flagged: best.1 > target.value,
    })
}

/// CBC construction followed by a shift search.
pub fn cbc_with_shift(spec: &KernelSpec, n: u64, mode: CbcMode, trials: usize, seed: u64) -> Result<CbcResult> {
    let mut res = cbc_construct(spec, n, mode)?;
    let s = shift_search(&res.rule, spec, trials, seed)?;
    res.rule = s.rule.clone();
    res.achieved_e2_shifted = Some(s.e2);
    res.shift = Some(s);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_engine::{mean_sq_error_kernel, refined_bound_applies, refined_cbc_bound};
    use crate::perm::PermStructure;
    use crate::weights::SpectralWeight;

    fn spec(d: usize, inv: &[usize], alpha: f64) -> KernelSpec {
        let w = SpectralWeight::korobov(alpha, 1.0, 1.0).unwrap();
        KernelSpec::auto(w, PermStructure::from_one_based(d, inv).unwrap())
    }

    #[test]
    fn minimizer_matches_exhaustive_search() {
        let s = spec(2, &[1, 2], 1.0);
        let res = cbc_construct(&s, 5, CbcMode::Minimize).unwrap();
        let mut best = (f64::INFINITY, 0);
        for z2 in 0..5 {
            let e = mean_sq_error_kernel(&LatticeRule::new(5, vec![1, z2]).unwrap(), &s).unwrap().value;
            if e < best.0 - 1e-15 {
                best = (e, z2);
            }
        }
        assert_eq!(res.rule.z(), &[1, best.1]);
        assert!((res.achieved_mean_e2 - best.0).abs() < 1e-14);
    }

    #[test]
    fn one_dimension_is_trivial() {
        let s = spec(1, &[], 1.0);
        for n in [5u64, 17, 101] {
            let res = cbc_construct(&s, n, CbcMode::Minimize).unwrap();
            assert_eq!(res.rule.z(), &[1]);
            let expected = 1.0 / (12.0 * (n * n) as f64);
            assert!((res.achieved_mean_e2 - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn every_step_attains_the_minimum() {
        let s = spec(4, &[1, 3, 4], 1.0);
        let res = cbc_construct(&s, 31, CbcMode::Minimize).unwrap();
        let table = OmegaTable::new(&s, 31, 3);
        for l in 2..=4 {
            let scan = objective_scan(&res.rule.z()[..l - 1], &s, &table).unwrap();
            let min = scan.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
            let chosen = res.rule.z()[l - 1] as usize;
            assert_eq!(scan[chosen].0, min);
            assert!(scan[..chosen].iter().all(|v| v.0 > min));
        }
    }

    #[test]
    fn certified_bounds_hold() {
        for (inv, alpha) in [(vec![], 1.0), (vec![1, 2, 3], 1.0), (vec![2, 3], 1.5)] {
            let s = spec(3, &inv, alpha);
            for n in [7u64, 31, 61] {
                let res = cbc_construct(&s, n, CbcMode::Minimize).unwrap();
                assert!(res.bound_holds(), "{res:?}");
                let c = bound_constant_cdl(&s, 1.0).unwrap().hi;
                if refined_bound_applies(1.0, s.perm.s(), alpha, n, 1.0) {
                    assert!(res.achieved_mean_e2 <= refined_cbc_bound(c, 1.0, s.perm.s(), alpha, n, 1.0));
                }
            }
        }
    }

    #[test]
    fn better_than_average_picks_first_admissible() {
        let s = spec(3, &[1, 2], 1.0);
        let lambda = 1.5;
        let res = cbc_construct(&s, 13, CbcMode::BetterThanAverage { lambda }).unwrap();
        let table = OmegaTable::new(&s, 13, 2);
        for l in 2..=3 {
            let scan = objective_scan(&res.rule.z()[..l - 1], &s, &table).unwrap();
            let avg = scan.iter().map(|v| v.0.powf(1.0 / lambda)).sum::<f64>() / 13.0;
            let chosen = res.rule.z()[l - 1] as usize;
            assert!(scan[chosen].0.powf(1.0 / lambda) <= avg);
            assert!(scan[..chosen].iter().all(|v| v.0.powf(1.0 / lambda) > avg));
        }
        assert!(cbc_construct(&s, 13, CbcMode::BetterThanAverage { lambda: 2.0 }).is_err());
    }

    #[test]
    fn precondition_errors() {
        let s = spec(2, &[], 1.0);
        assert!(matches!(cbc_construct(&s, 12, CbcMode::Minimize), Err(Error::NotPrime(12))));
        let w = SpectralWeight::new(1.0, 1.0, 1.0, crate::weights::Generator::KorobovLinear, 20.0).unwrap();
        let s = KernelSpec::auto(w, PermStructure::none(2).unwrap());
        assert!(matches!(cbc_construct(&s, 13, CbcMode::Minimize), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn shift_search_never_worse_than_zero_shift() {
        let s = spec(2, &[1, 2], 1.0);
        let rule = LatticeRule::new(13, vec![1, 5]).unwrap();
        let zero = worst_case_error_sq(&rule.to_cubature(), &s).unwrap().value;
        let res = shift_search(&rule, &s, 1, 3).unwrap();
        assert_eq!(res.trials_used.min(1), 1);
        assert!(res.e2 <= zero);
    }

    #[test]
    fn shift_search_reaches_the_mean() {
        let s = spec(2, &[1, 2], 1.0);
        let res = cbc_with_shift(&s, 13, CbcMode::Minimize, 64, 42).unwrap();
        let sh = res.shift.as_ref().unwrap();
        assert!(!sh.flagged);
        assert!(sh.e2 <= res.achieved_mean_e2);
        let again = shift_search(&res.rule, &s, 64, 42).unwrap();
        assert_eq!(again.e2.to_bits(), sh.e2.to_bits());
    }

    #[test]
    fn two_point_rule_shift_grid_brackets_the_mean() {
        let s = spec(2, &[1, 2], 1.0);
        let rule = LatticeRule::new(2, vec![1, 1]).unwrap();
        let mean = mean_sq_error_decomposed(&rule, &s).unwrap().value;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for a in 0..32 {
            for b in 0..32 {
                let sh = vec![a as f64 / 32.0, b as f64 / 32.0];
                let e = worst_case_error_sq(&rule.clone().with_shift(sh).unwrap().to_cubature(), &s).unwrap().value;
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        assert!(lo <= mean && mean <= hi);
        let found = shift_search(&rule, &s, 256, 7).unwrap();
        assert!(found.e2 <= mean);
        assert!(found.e2 >= lo - 0.05 * (hi - lo));
    }

    #[test]
    fn result_json_has_expected_fields() {
        let s = spec(2, &[1, 2], 1.0);
        let res = cbc_construct(&s, 7, CbcMode::Minimize).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json()).unwrap();
        for key in ["rule", "per_step_objective", "certified_bound", "achieved_E2", "achieved_e2_shifted"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
