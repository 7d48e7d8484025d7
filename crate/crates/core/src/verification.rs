//! Manufactured-solution verification of the direct solver.
//!
//! The manufactured intensity `exp(-sigma_t (x - t)^2)` is isotropic, so it
//! is also its own scalar flux. Its source balances the transport equation
//! only for unit particle speed.

use std::io::Write;

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{MaterialField, SlabGeometry, TimeGrid, TransportProblem};
use crate::quadrature::build_gauss_legendre;
use crate::solver::solve;

/// Points at which the table reports the scalar flux.
pub const TABLE_POINTS: [f64; 3] = [0.0, 0.5, 1.0];
pub const TABLE_KAPPAS: [f64; 3] = [0.9, 0.5, 0.1];

/// Absorption coefficient paired with a fixed total coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub kappa: f64,
    pub sigma_t: f64,
}

impl ManufacturedCase {
    pub fn new(kappa: f64, sigma_t: f64) -> Result<Self> {
        if !(0.0..=sigma_t).contains(&kappa) {
            return Err(Error::invalid(format!("need 0 <= kappa <= sigma_t, got {kappa}, {sigma_t}")));
        }
        Ok(Self { kappa, sigma_t })
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_t - self.kappa
    }
}

pub fn manufactured_intensity(t: f64, x: f64, _mu: f64, sigma_t: f64) -> f64 {
    (-sigma_t * (x - t).powi(2)).exp()
}

pub fn manufactured_source(t: f64, x: f64, mu: f64, kappa: f64, sigma_t: f64) -> f64 {
    (2.0 * sigma_t * (1.0 - mu) * (x - t) + kappa) * (-sigma_t * (x - t).powi(2)).exp()
}

/// `||approx - exact||_2 / ||exact||_2`.
pub fn relative_l2_error(approx: ArrayView1<'_, f64>, exact: ArrayView1<'_, f64>) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", approx.len(), exact.len())));
    }
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("exact values have zero (or non-finite) norm"));
    }
    let diff = approx.iter().zip(exact).map(|(a, e)| (a - e) * (a - e)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

/// Solver settings for the manufactured runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n_x: usize,
    pub n_t: usize,
    pub n_q: usize,
    pub t_f: f64,
    pub sigma_t: f64,
    pub si_tol: f64,
    pub si_max_iter: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_x: 100,
            n_t: 100,
            n_q: 100,
            t_f: 1.0,
            sigma_t: 1.0,
            si_tol: crate::problem::DEFAULT_SI_TOL,
            si_max_iter: crate::problem::DEFAULT_SI_MAX_ITER,
        }
    }
}

/// Manufactured problem on `[0, 1]` with boundary and initial data sampled
/// from the manufactured intensity.
pub fn manufactured_problem(case: ManufacturedCase, cfg: &VerifyConfig) -> Result<TransportProblem> {
    let geometry = SlabGeometry::new(0.0, 1.0, cfg.n_x)?;
    let material = MaterialField::homogeneous(0.0, 1.0, case.kappa, case.sigma_s())?;
    let time = TimeGrid::new(cfg.t_f, cfg.n_t)?;
    let (a, b, st, kappa) = (geometry.a(), geometry.b(), case.sigma_t, case.kappa);
    Ok(TransportProblem::new(geometry, material, time)?
        .with_si(cfg.si_tol, cfg.si_max_iter)?
        .with_inflow_left(move |t, mu| manufactured_intensity(t, a, mu, st))
        .with_inflow_right(move |t, mu| manufactured_intensity(t, b, mu, st))
        .with_initial(move |x, mu| manufactured_intensity(0.0, x, mu, st))
        .with_source(move |t, x, mu| manufactured_source(t, x, mu, kappa, st)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub kappa: f64,
    /// Scalar flux at [`TABLE_POINTS`] and `t_f`.
    pub psi: [f64; 3],
    pub eps_rel: f64,
    pub si_iterations_max: usize,
}

fn sample_linear(nodes: ArrayView1<'_, f64>, values: ArrayView1<'_, f64>, x: f64) -> f64 {
    let n = nodes.len();
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let pos = ((x - nodes[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (pos.round() as usize).min(n - 1);
    if (pos - i as f64).abs() < 1e-9 {
        return values[i];
    }
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    (1.0 - w) * values[i] + w * values[i + 1]
}

pub fn run_case(kappa: f64, cfg: &VerifyConfig) -> Result<Table1Row> {
    let case = ManufacturedCase::new(kappa, cfg.sigma_t)?;
    let problem = manufactured_problem(case, cfg)?;
    let quadrature = build_gauss_legendre(cfg.n_q)?;
    let (solution, _) = solve(&problem, &quadrature, &[])?;
    let final_psi = solution.final_psi();
    let exact = solution.nodes.mapv(|x| manufactured_intensity(cfg.t_f, x, 0.0, cfg.sigma_t));
    let eps_rel = relative_l2_error(final_psi, exact.view())?;
    let psi = TABLE_POINTS.map(|x| sample_linear(solution.nodes.view(), final_psi, x));
    Ok(Table1Row {
        kappa,
        psi,
        eps_rel,
        si_iterations_max: solution.si_iterations.iter().copied().max().unwrap_or(0),
    })
}

/// Runs the manufactured problem for each `kappa`; rows keep input order.
pub fn run_table1(cfg: &VerifyConfig, kappas: &[f64]) -> Result<Vec<Table1Row>> {
    kappas.par_iter().map(|&k| run_case(k, cfg)).collect()
}

pub fn exact_row(cfg: &VerifyConfig) -> [f64; 3] {
    TABLE_POINTS.map(|x| manufactured_intensity(cfg.t_f, x, 0.0, cfg.sigma_t))
}

/// `kappa,psi_0,psi_05,psi_1,eps_rel`, one row per run and a trailing
/// `exact` row with an empty error column.
pub fn write_table1_csv<W: Write>(rows: &[Table1Row], cfg: &VerifyConfig, mut w: W) -> Result<()> {
    writeln!(w, "kappa,psi_0,psi_05,psi_1,eps_rel")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.kappa, r.psi[0], r.psi[1], r.psi[2], r.eps_rel
        )?;
    }
    let e = exact_row(cfg);
    writeln!(w, "exact,{:.16e},{:.16e},{:.16e},", e[0], e[1], e[2])?;
    Ok(())
}
