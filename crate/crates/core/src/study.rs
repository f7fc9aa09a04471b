//! Convergence studies over lists of rule sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::assemble_qdn;
use crate::cbc::{cbc_construct, cbc_with_shift};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::error_engine::{bound_constant_cdl, initial_error_sq};
use crate::kernels::KernelSpec;
use crate::perm::PermStructure;
use crate::weights::SpectralWeight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Lattice,
    Approx,
}

/// One row of a convergence table. A failed construction keeps its size
/// and the error message; all numeric fields are then empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub kind: RowKind,
    pub n: u64,
    /// mean squared error over all shifts (lattice rows)
    #[serde(rename = "E2")]
    pub mean_e2: Option<f64>,
    /// squared error of the shifted lattice rule or the assembled rule
    pub e2: Option<f64>,
    pub certificate: Option<f64>,
    pub bound: Option<f64>,
    /// error over bound
    pub ratio: Option<f64>,
    pub flagged: bool,
    pub error: Option<String>,
}

impl StudyRow {
    fn failed(kind: RowKind, n: u64, e: &Error) -> Self {
        StudyRow {
            kind,
            n,
            mean_e2: None,
            e2: None,
            certificate: None,
            bound: None,
            ratio: None,
            flagged: true,
            error: Some(e.to_string()),
        }
    }

    /// The certified error does not exceed the bound.
    pub fn bound_holds(&self) -> Option<bool> {
        let err = self.mean_e2.or(self.e2)?;
        Some(err <= self.bound? + self.certificate.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<StudyRow>,
    /// fitted slope of `log E^2` against `log n` over the lattice rows
    pub lattice_slope: Option<f64>,
    /// fitted slope of `log e^2` against `log N` over the assembled rules
    pub approx_slope: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary {
            rows: usize,
            failed: usize,
            lattice_slope: Option<f64>,
            approx_slope: Option<f64>,
        }
        serde_json::to_string_pretty(&Summary {
            rows: self.rows.len(),
            failed: self.rows.iter().filter(|r| r.error.is_some()).count(),
            lattice_slope: self.lattice_slope,
            approx_slope: self.approx_slope,
        })
        .expect("summary serializes")
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn lattice_row(cfg: &ExperimentConfig, spec: &KernelSpec, n: u64) -> Result<StudyRow> {
    let p = &cfg.params;
    let res = if p.trials > 0 {
        cbc_with_shift(spec, n, p.mode, p.trials, p.seed)?
    } else {
        cbc_construct(spec, n, p.mode)?
    };
    let shift_flag = res.shift.as_ref().is_some_and(|s| s.flagged);
    let cert_flag = res.achieved_mean_e2_certificate > p.tol * initial_error_sq(spec);
    Ok(StudyRow {
        kind: RowKind::Lattice,
        n,
        mean_e2: Some(res.achieved_mean_e2),
        e2: res.achieved_e2_shifted,
        certificate: Some(res.achieved_mean_e2_certificate),
        bound: Some(res.certified_bound),
        ratio: Some(res.achieved_mean_e2 / res.certified_bound),
        flagged: !res.bound_holds() || shift_flag || cert_flag,
        error: None,
    })
}

fn approx_row(cfg: &ExperimentConfig, spec: &KernelSpec, n: u64) -> Result<StudyRow> {
    let q = assemble_qdn(spec, n, cfg.approx_params())?;
    Ok(StudyRow {
        kind: RowKind::Approx,
        n,
        mean_e2: None,
        e2: Some(q.e_wor_sq),
        certificate: Some(q.e_wor_certificate),
        bound: Some(q.certified_bound),
        ratio: Some(q.e_wor_sq / q.certified_bound),
        flagged: q.flagged || !q.bound_holds(),
        error: None,
    })
}

/// Lattice rows for every `n`, then assembled-rule rows for every `N`, in
/// input order. Failed constructions are recorded and the study continues.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    let spec = cfg.kernel_spec()?;
    let mut rows: Vec<StudyRow> = cfg
        .params
        .n
        .par_iter()
        .map(|&n| lattice_row(cfg, &spec, n).unwrap_or_else(|e| StudyRow::failed(RowKind::Lattice, n, &e)))
        .collect();
    let approx: Vec<StudyRow> = cfg
        .params
        .big_n
        .par_iter()
        .map(|&n| approx_row(cfg, &spec, n).unwrap_or_else(|e| StudyRow::failed(RowKind::Approx, n, &e)))
        .collect();
    rows.extend(approx);
    let slope = |kind: RowKind, pick: fn(&StudyRow) -> Option<f64>| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.kind == kind)
            .filter_map(|r| pick(r).map(|v| (r.n as f64, v)))
            .collect();
        fit_loglog_slope(&pts)
    };
    let lattice_slope = slope(RowKind::Lattice, |r| r.mean_e2);
    let approx_slope = slope(RowKind::Approx, |r| r.e2);
    Ok(ConvergenceTable { rows, lattice_slope, approx_slope })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub d: usize,
    pub n: u64,
    #[serde(rename = "E2")]
    pub mean_e2: Option<f64>,
    #[serde(rename = "E2_times_n")]
    pub e2_times_n: Option<f64>,
    /// the constant `C_{d,1}` of the lattice bound
    pub c_d1: Option<f64>,
    pub error: Option<String>,
}

/// `E^2 n` at fixed `n` for growing `d` under full invariance.
pub fn dimension_experiment(w: &SpectralWeight, n: u64, dims: &[usize]) -> Vec<DimensionRow> {
    dims.par_iter()
        .map(|&d| {
            let run = || -> Result<(f64, f64)> {
                let spec = KernelSpec::auto(w.clone(), PermStructure::full(d)?);
                let res = cbc_construct(&spec, n, Default::default())?;
                let c = bound_constant_cdl(&spec, 1.0)?;
                Ok((res.achieved_mean_e2, c.hi))
            };
            match run() {
                Ok((e2, c)) => DimensionRow {
                    d,
                    n,
                    mean_e2: Some(e2),
                    e2_times_n: Some(e2 * n as f64),
                    c_d1: Some(c),
                    error: None,
                },
                Err(e) => DimensionRow { d, n, mean_e2: None, e2_times_n: None, c_d1: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}
