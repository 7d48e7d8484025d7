//! Method-of-characteristics direct solver.
//!
//! Each time step applies implicit Euler to the discrete-ordinates system,
//! decouples the directions by source iteration on the scattering term and
//! integrates every direction exactly along its characteristic with an
//! integrating factor. Within a cell the total coefficient is constant and the
//! combined source is linear in the path length, so each segment integral is
//! closed-form.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::problem::{DetectorReadout, SpaceTimeSolution, TransportProblem};
use crate::quadrature::{scalar_flux_at_nodes, AngularQuadrature};

/// Below this optical depth the segment integrals use their power series.
const SERIES_THRESHOLD: f64 = 0.5;
const SERIES_TERMS: usize = 24;

/// Precomputed integrating-factor weights for one characteristic segment.
///
/// With optical depth `tau = sigma * ds` and `E = exp(-tau)` the update is
/// `I_out = E I_in + ds (f2 S_start + (f1 - f2) S_end)` where
/// `f1 = (1 - E) / tau` and `f2 = (1 - E - tau E) / tau^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCoefficients {
    attenuation: f64,
    start_weight: f64,
    end_weight: f64,
}

impl SegmentCoefficients {
    pub fn new(delta_s: f64, sigma_tilde: f64) -> Result<Self> {
        if !(delta_s.is_finite() && delta_s > 0.0) {
            return Err(Error::Numeric(format!("segment length must be finite and positive, got {delta_s}")));
        }
        if !(sigma_tilde.is_finite() && sigma_tilde >= 0.0) {
            return Err(Error::Numeric(format!(
                "segment coefficient must be finite and nonnegative, got {sigma_tilde}"
            )));
        }
        let tau = sigma_tilde * delta_s;
        let (attenuation, f1, f2) = if tau < SERIES_THRESHOLD {
            // f1 = sum (-tau)^n / (n+1)!,  f2 = sum (-tau)^n (n+1) / (n+2)!
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            let mut term = 1.0; // (-tau)^n / (n+1)!
            for n in 0..SERIES_TERMS {
                f1 += term;
                f2 += term * (n as f64 + 1.0) / (n as f64 + 2.0);
                term *= -tau / (n as f64 + 2.0);
            }
            ((-tau).exp(), f1, f2)
        } else {
            let e = (-tau).exp();
            let one_minus_e = -(-tau).exp_m1();
            (e, one_minus_e / tau, (one_minus_e - tau * e) / (tau * tau))
        };
        Ok(Self {
            attenuation,
            start_weight: delta_s * f2,
            end_weight: delta_s * (f1 - f2),
        })
    }

    #[inline]
    pub fn apply(&self, i_in: f64, s_start: f64, s_end: f64) -> f64 {
        self.attenuation * i_in + self.start_weight * s_start + self.end_weight * s_end
    }
}

/// Intensity at the downstream end of a segment of length `delta_s`, for a
/// source varying linearly from `s_start` to `s_end` along it.
pub fn segment_update(i_in: f64, delta_s: f64, sigma_tilde: f64, s_start: f64, s_end: f64) -> Result<f64> {
    if !(i_in.is_finite() && s_start.is_finite() && s_end.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite segment input: I_in={i_in}, S_start={s_start}, S_end={s_end}"
        )));
    }
    Ok(SegmentCoefficients::new(delta_s, sigma_tilde)?.apply(i_in, s_start, s_end))
}

/// State of the source iteration within one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    /// Converged intensity of the previous time level, `[node, direction]`.
    pub intensity_prev_time: Array2<f64>,
    /// Latest sweep result, `[node, direction]`.
    pub intensity_current: Array2<f64>,
    /// Scalar flux that feeds the scattering source of the next sweep.
    pub psi_lagged: Array1<f64>,
    pub time_level: usize,
    pub si_index: usize,
}

impl SweepState {
    /// State at the start of a time step, lagging the flux of `intensity_prev_time`.
    pub fn start(
        intensity_prev_time: Array2<f64>,
        quadrature: &AngularQuadrature,
        time_level: usize,
    ) -> Result<Self> {
        let psi_lagged = scalar_flux_at_nodes(intensity_prev_time.view(), quadrature)?;
        Ok(Self {
            intensity_current: intensity_prev_time.clone(),
            intensity_prev_time,
            psi_lagged,
            time_level,
            si_index: 0,
        })
    }
}

/// Result of the source iteration of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SiOutcome {
    pub intensity: Array2<f64>,
    pub psi: Array1<f64>,
    pub iterations: usize,
    /// Residual after each sweep.
    pub residuals: Vec<f64>,
}

/// Solver bound to a problem and quadrature, with the segment weights
/// for every (cell, direction) pair tabulated once.
pub struct MocSolver<'a> {
    problem: &'a TransportProblem,
    quadrature: &'a AngularQuadrature,
    /// `coeffs[j * n_x + i]`
    coeffs: Vec<SegmentCoefficients>,
    cell_sigma_s: Vec<f64>,
    inv_c_ht: f64,
}

impl<'a> MocSolver<'a> {
    pub fn new(problem: &'a TransportProblem, quadrature: &'a AngularQuadrature) -> Result<Self> {
        let geom = problem.geometry();
        let n_x = geom.n_x();
        let inv_c_ht = 1.0 / (problem.speed_c() * problem.h_t());
        let mut coeffs = Vec::with_capacity(n_x * quadrature.len());
        for &mu in quadrature.nodes() {
            let ds = geom.h_x() / mu.abs();
            for i in 0..n_x {
                let sigma_tilde = crate::problem::sigma_t_on_cell(problem.material(), i, geom) + inv_c_ht;
                coeffs.push(SegmentCoefficients::new(ds, sigma_tilde)?);
            }
        }
        let cell_sigma_s = (0..n_x)
            .map(|i| problem.material().sigma_s_at(geom.cell_midpoint(i)))
            .collect();
        Ok(Self { problem, quadrature, coeffs, cell_sigma_s, inv_c_ht })
    }

    pub fn problem(&self) -> &TransportProblem {
        self.problem
    }

    /// `q_j(t, x_i) + I^(0)_ij / (c h_t)`, the part of the combined source
    /// that does not change during source iteration.
    fn fixed_source(&self, intensity_prev_time: ArrayView2<'_, f64>, new_time: f64) -> Array2<f64> {
        let geom = self.problem.geometry();
        let mut fixed = intensity_prev_time.mapv(|v| v * self.inv_c_ht);
        for ((i, j), v) in fixed.indexed_iter_mut() {
            *v += self.problem.source(new_time, geom.node(i), self.quadrature.nodes()[j]);
        }
        fixed
    }

    fn sweep_direction(
        &self,
        j: usize,
        fixed: ArrayView1<'_, f64>,
        psi_lagged: ArrayView1<'_, f64>,
        new_time: f64,
        mut out: ndarray::ArrayViewMut1<'_, f64>,
    ) {
        let n_x = self.problem.geometry().n_x();
        let mu = self.quadrature.nodes()[j];
        let coeffs = &self.coeffs[j * n_x..(j + 1) * n_x];
        // scattering uses the coefficient of the cell being traversed
        let src = |i: usize, cell: usize| self.cell_sigma_s[cell] * psi_lagged[i] + fixed[i];
        if mu > 0.0 {
            out[0] = self.problem.inflow_left(new_time, mu);
            for i in 0..n_x {
                out[i + 1] = coeffs[i].apply(out[i], src(i, i), src(i + 1, i));
            }
        } else {
            out[n_x] = self.problem.inflow_right(new_time, mu);
            for i in (1..=n_x).rev() {
                out[i - 1] = coeffs[i - 1].apply(out[i], src(i, i - 1), src(i - 1, i - 1));
            }
        }
    }

    fn sweep_with(
        &self,
        fixed: ArrayView2<'_, f64>,
        psi_lagged: ArrayView1<'_, f64>,
        new_time: f64,
        out: &mut Array2<f64>,
    ) -> Result<()> {
        for (j, col) in out.axis_iter_mut(Axis(1)).enumerate() {
            self.sweep_direction(j, fixed.column(j), psi_lagged, new_time, col);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite intensity in sweep at t = {new_time}")));
        }
        Ok(())
    }

    /// One transport sweep of every direction against `state.psi_lagged`.
    pub fn sweep(&self, state: &SweepState, new_time: f64) -> Result<Array2<f64>> {
        self.check_shapes(state.intensity_prev_time.view(), state.psi_lagged.len())?;
        let fixed = self.fixed_source(state.intensity_prev_time.view(), new_time);
        let mut out = Array2::zeros(state.intensity_prev_time.raw_dim());
        self.sweep_with(fixed.view(), state.psi_lagged.view(), new_time, &mut out)?;
        Ok(out)
    }

    fn check_shapes(&self, intensity: ArrayView2<'_, f64>, psi_len: usize) -> Result<()> {
        let n_nodes = self.problem.geometry().n_nodes();
        if intensity.dim() != (n_nodes, self.quadrature.len()) || psi_len != n_nodes {
            return Err(Error::invalid(format!(
                "state shape {:?} / {psi_len} does not match grid ({n_nodes}, {})",
                intensity.dim(),
                self.quadrature.len()
            )));
        }
        Ok(())
    }

    fn residual(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (self.problem.geometry().h_x() * sq).sqrt()
    }

    /// Iterates sweeps until the scalar flux changes by less than the
    /// problem's tolerance (L2 norm scaled by `sqrt(h_x)`).
    pub fn source_iteration(&self, intensity_prev_time: ArrayView2<'_, f64>, new_time: f64) -> Result<SiOutcome> {
        let time_level = self.problem.time().level_of(new_time).unwrap_or(0);
        let mut state = SweepState::start(intensity_prev_time.to_owned(), self.quadrature, time_level)?;
        self.check_shapes(intensity_prev_time, state.psi_lagged.len())?;
        let fixed = self.fixed_source(intensity_prev_time, new_time);
        let tol = self.problem.si_tol();
        let max_iter = self.problem.si_max_iter();
        let mut residuals = Vec::new();
        loop {
            self.sweep_with(fixed.view(), state.psi_lagged.view(), new_time, &mut state.intensity_current)?;
            let psi = scalar_flux_at_nodes(state.intensity_current.view(), self.quadrature)?;
            let r = self.residual(psi.view(), state.psi_lagged.view());
            residuals.push(r);
            state.psi_lagged = psi;
            state.si_index += 1;
            if r < tol {
                return Ok(SiOutcome {
                    intensity: state.intensity_current,
                    psi: state.psi_lagged,
                    iterations: state.si_index,
                    residuals,
                });
            }
            if state.si_index >= max_iter {
                return Err(Error::Convergence { time_level, iterations: state.si_index, residual: r });
            }
        }
    }

    /// Intensity `I_0(x_i, mu_j)` on the grid.
    pub fn initial_intensity(&self) -> Array2<f64> {
        let geom = self.problem.geometry();
        Array2::from_shape_fn((geom.n_nodes(), self.quadrature.len()), |(i, j)| {
            self.problem.initial(geom.node(i), self.quadrature.nodes()[j])
        })
    }

    /// Advances from `t = 0` to `t_f` and records the boundary scalar flux at
    /// each of `detector_times`.
    pub fn solve(&self, detector_times: &[f64]) -> Result<(SpaceTimeSolution, DetectorReadout)> {
        let time = *self.problem.time();
        let geom = self.problem.geometry();
        let levels = detector_times
            .iter()
            .map(|&t| {
                time.level_of(t).ok_or_else(|| {
                    Error::invalid(format!("detector time {t} is not a grid time (h_t = {})", time.h_t()))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut intensity = self.initial_intensity();
        if intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite initial intensity".into()));
        }
        let mut psi = Array2::zeros((time.n_t() + 1, geom.n_nodes()));
        psi.row_mut(0).assign(&scalar_flux_at_nodes(intensity.view(), self.quadrature)?);
        let mut si_iterations = Vec::with_capacity(time.n_t());
        for k in 0..time.n_t() {
            let outcome = self.source_iteration(intensity.view(), time.time(k + 1))?;
            psi.row_mut(k + 1).assign(&outcome.psi);
            si_iterations.push(outcome.iterations);
            intensity = outcome.intensity;
        }

        let n_x = geom.n_x();
        let readout = DetectorReadout {
            times: detector_times.to_vec(),
            psi_left: levels.iter().map(|&k| psi[[k, 0]]).collect(),
            psi_right: levels.iter().map(|&k| psi[[k, n_x]]).collect(),
        };
        let solution = SpaceTimeSolution {
            psi,
            intensity_final: intensity,
            si_iterations,
            times: (0..=time.n_t()).map(|k| time.time(k)).collect(),
            nodes: geom.nodes(),
        };
        Ok((solution, readout))
    }
}

/// One sweep of all directions for `state`, see [`MocSolver::sweep`].
pub fn sweep(
    state: &SweepState,
    problem: &TransportProblem,
    quadrature: &AngularQuadrature,
    new_time: f64,
) -> Result<Array2<f64>> {
    MocSolver::new(problem, quadrature)?.sweep(state, new_time)
}

pub fn source_iteration(
    problem: &TransportProblem,
    quadrature: &AngularQuadrature,
    intensity_prev_time: ArrayView2<'_, f64>,
    new_time: f64,
) -> Result<SiOutcome> {
    MocSolver::new(problem, quadrature)?.source_iteration(intensity_prev_time, new_time)
}

pub fn solve(
    problem: &TransportProblem,
    quadrature: &AngularQuadrature,
    detector_times: &[f64],
) -> Result<(SpaceTimeSolution, DetectorReadout)> {
    MocSolver::new(problem, quadrature)?.solve(detector_times)
}

/// Per-step trace: `k,t,si_iters,psi_left,psi_right`.
pub fn write_trace_csv<W: Write>(solution: &SpaceTimeSolution, mut w: W) -> Result<()> {
    writeln!(w, "k,t,si_iters,psi_left,psi_right")?;
    let last = solution.psi.ncols() - 1;
    for (k, row) in solution.psi.axis_iter(Axis(0)).enumerate() {
        let iters = if k == 0 { 0 } else { solution.si_iterations[k - 1] };
        writeln!(w, "{k},{:.16e},{iters},{:.16e},{:.16e}", solution.times[k], row[0], row[last])?;
    }
    Ok(())
}

/// Full scalar flux history: `t,x,psi`.
pub fn write_psi_history_csv<W: Write>(solution: &SpaceTimeSolution, mut w: W) -> Result<()> {
    writeln!(w, "t,x,psi")?;
    for ((k, i), v) in solution.psi.indexed_iter() {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", solution.times[k], solution.nodes[i], v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{MaterialField, SlabGeometry, TimeGrid};
    use crate::quadrature::build_gauss_legendre;

    /// Adaptive Simpson quadrature, used as an independent oracle for the
    /// closed-form segment integral.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    fn oracle_segment(i_in: f64, ds: f64, sigma: f64, s0: f64, s1: f64) -> f64 {
        let integrand = |s: f64| (s0 + (s1 - s0) * s / ds) * (-sigma * (ds - s)).exp();
        i_in * (-sigma * ds).exp() + adaptive_simpson(&integrand, 0.0, ds, 1e-14)
    }

    #[test]
    fn segment_pure_attenuation() {
        let out = segment_update(2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((out - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn segment_without_attenuation() {
        let out = segment_update(0.3, 2.5, 0.0, 0.7, 0.7).unwrap();
        assert!((out - (0.3 + 0.7 * 2.5)).abs() < 1e-14);
    }

    #[test]
    fn segment_constant_source_closed_form() {
        for &(i_in, ds, sigma, s0) in &[(1.0f64, 0.01f64, 101.0, 3.0), (0.2, 2.0, 0.3, 1.5), (0.0, 0.5, 7.0, 2.0)] {
            let expected = i_in * (-sigma * ds).exp() + s0 / sigma * (1.0 - (-sigma * ds).exp());
            let got = segment_update(i_in, ds, sigma, s0, s0).unwrap();
            assert!((got - expected).abs() < 1e-13, "{got} vs {expected}");
            let oracle = oracle_segment(i_in, ds, sigma, s0, s0);
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn segment_linear_source_matches_quadrature_oracle() {
        let cases = [
            (1.0f64, 0.01f64, 101.0f64, 3.0f64, -1.0f64),
            (0.4, 1.3, 0.7, 0.0, 2.0),
            (0.0, 70.0, 101.0, 5.0, 4.0),
            (2.0, 1e-3, 1e-4, 1.0, 3.0),
            (2.0, 1e-5, 1e-5, -1.0, 3.0),
            (1.0, 0.9, 0.5, 0.3, 0.1),
            (1.0, 1.0, 0.51, 0.3, 0.9),
            (1.0, 1.0, 0.49, 0.3, 0.9),
        ];
        for &(i_in, ds, sigma, s0, s1) in &cases {
            let got = segment_update(i_in, ds, sigma, s0, s1).unwrap();
            let oracle = oracle_segment(i_in, ds, sigma, s0, s1);
            assert!((got - oracle).abs() < 1e-12 * (1.0 + oracle.abs()), "{cases:?}: {got} vs {oracle}");
        }
    }

    #[test]
    fn segment_series_branch_is_continuous() {
        let below = segment_update(1.0, 1.0, SERIES_THRESHOLD - 1e-15, 0.4, 1.7).unwrap();
        let above = segment_update(1.0, 1.0, SERIES_THRESHOLD + 1e-15, 0.4, 1.7).unwrap();
        assert!((below - above).abs() < 1e-12, "{below} {above}");
        let tiny = segment_update(1.0, 1.0, 1e-10, 0.4, 1.7).unwrap();
        assert!((tiny - (1.0 + 0.5 * (0.4 + 1.7))).abs() < 1e-9);
    }

    #[test]
    fn segment_rejects_bad_input() {
        assert!(matches!(segment_update(f64::NAN, 1.0, 1.0, 0.0, 0.0), Err(Error::Numeric(_))));
        assert!(segment_update(1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(segment_update(1.0, 1.0, -1.0, 0.0, 0.0).is_err());
        assert!(segment_update(1.0, 1.0, 1.0, f64::INFINITY, 0.0).is_err());
    }

    fn absorber(n_x: usize, t_f: f64, n_t: usize, kappa: f64, sigma_s: f64) -> TransportProblem {
        let g = SlabGeometry::new(0.0, 1.0, n_x).unwrap();
        let m = MaterialField::homogeneous(0.0, 1.0, kappa, sigma_s).unwrap();
        TransportProblem::new(g, m, TimeGrid::new(t_f, n_t).unwrap()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = absorber(10, 1.0, 10, 0.5, 0.5);
        let q = build_gauss_legendre(4).unwrap();
        let (sol, readout) = solve(&p, &q, &[0.5, 1.0]).unwrap();
        assert!(sol.psi.iter().all(|&v| v == 0.0));
        assert!(sol.intensity_final.iter().all(|&v| v == 0.0));
        assert_eq!(readout.psi_left, vec![0.0, 0.0]);
        assert_eq!(sol.psi.dim(), (11, 11));
        assert_eq!(sol.si_iterations.len(), 10);
    }

    #[test]
    fn first_step_of_sweep_is_one_segment_update() {
        let p = absorber(10, 1.0, 10, 1.0, 0.0).with_inflow_left(|_, _| 1.0);
        let q = build_gauss_legendre(4).unwrap();
        let solver = MocSolver::new(&p, &q).unwrap();
        let state = SweepState::start(solver.initial_intensity(), &q, 0).unwrap();
        let out = solver.sweep(&state, 0.1).unwrap();
        let inv = 1.0 / p.h_t();
        for (j, &mu) in q.nodes().iter().enumerate() {
            if mu > 0.0 {
                assert_eq!(out[[0, j]], 1.0);
                let expected = segment_update(1.0, 0.1 / mu, 1.0 + inv, 0.0, 0.0).unwrap();
                assert!((out[[1, j]] - expected).abs() < 1e-15);
                // pure absorber chain: constant attenuation factor per cell
                for i in 0..10 {
                    let chain = (-(1.0 + inv) * 0.1 * i as f64 / mu).exp();
                    assert!((out[[i, j]] - chain).abs() < 1e-14);
                }
            } else {
                assert_eq!(out[[10, j]], 0.0);
            }
        }
    }

    #[test]
    fn sweep_is_independent_of_direction_order() {
        let p = absorber(20, 1.0, 10, 0.4, 0.6)
            .with_inflow_left(|t, mu| 1.0 + t * mu)
            .with_inflow_right(|_, mu| -mu)
            .with_initial(|x, mu| x * (1.0 + mu))
            .with_source(|t, x, mu| t + x * x + mu);
        let q = build_gauss_legendre(8).unwrap();
        let solver = MocSolver::new(&p, &q).unwrap();
        let state = SweepState::start(solver.initial_intensity(), &q, 0).unwrap();
        let full = solver.sweep(&state, 0.1).unwrap();
        let fixed = solver.fixed_source(state.intensity_prev_time.view(), 0.1);
        let mut reversed = Array2::zeros(full.raw_dim());
        for j in (0..q.len()).rev() {
            solver.sweep_direction(j, fixed.column(j), state.psi_lagged.view(), 0.1, reversed.column_mut(j));
        }
        assert_eq!(full, reversed);
    }

    #[test]
    fn no_scattering_converges_after_one_coupled_pass() {
        let p = absorber(50, 1.0, 100, 1.0, 0.0)
            .with_inflow_left(|_, _| 1.0)
            .with_source(|_, x, _| x);
        let q = build_gauss_legendre(16).unwrap();
        let solver = MocSolver::new(&p, &q).unwrap();
        let out = solver.source_iteration(solver.initial_intensity().view(), 0.01).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(out.residuals[1] < 1e-14);
    }

    #[test]
    fn si_residuals_decrease_with_scattering() {
        let p = absorber(50, 1.0, 2, 0.05, 0.95)
            .with_inflow_left(|_, _| 1.0)
            .with_si(1e-13, 1000)
            .unwrap();
        let q = build_gauss_legendre(16).unwrap();
        let solver = MocSolver::new(&p, &q).unwrap();
        let out = solver.source_iteration(solver.initial_intensity().view(), 0.5).unwrap();
        assert!(out.iterations > 3);
        for w in out.residuals.windows(2) {
            assert!(w[1] < w[0], "{:?}", out.residuals);
        }
    }

    #[test]
    fn si_reports_non_convergence() {
        let p = absorber(50, 1.0, 2, 0.05, 0.95)
            .with_inflow_left(|_, _| 1.0)
            .with_si(1e-14, 2)
            .unwrap();
        let q = build_gauss_legendre(8).unwrap();
        let err = solve(&p, &q, &[]).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 2, time_level: 1, .. }), "{err}");
    }

    #[test]
    fn converged_flux_is_a_fixed_point() {
        let p = absorber(40, 1.0, 10, 0.3, 0.7).with_inflow_left(|_, _| 1.0);
        let q = build_gauss_legendre(8).unwrap();
        let solver = MocSolver::new(&p, &q).unwrap();
        let prev = solver.initial_intensity();
        let out = solver.source_iteration(prev.view(), 0.1).unwrap();
        let state = SweepState {
            intensity_prev_time: prev,
            intensity_current: out.intensity.clone(),
            psi_lagged: out.psi.clone(),
            time_level: 1,
            si_index: out.iterations,
        };
        let again = solver.sweep(&state, 0.1).unwrap();
        let psi = scalar_flux_at_nodes(again.view(), &q).unwrap();
        assert!(solver.residual(psi.view(), out.psi.view()) < p.si_tol());
    }

    #[test]
    fn off_grid_detector_time_is_rejected() {
        let p = absorber(10, 1.0, 10, 0.5, 0.5);
        let q = build_gauss_legendre(2).unwrap();
        assert!(matches!(solve(&p, &q, &[0.55]), Err(Error::InvalidArgument(_))));
        assert!(solve(&p, &q, &[1.5]).is_err());
    }

    #[test]
    fn two_stream_absorber_reaches_analytic_transmission() {
        let p = absorber(100, 20.0, 200, 1.0, 0.0).with_inflow_left(|_, _| 1.0);
        let q = build_gauss_legendre(2).unwrap();
        let (_, readout) = solve(&p, &q, &[20.0]).unwrap();
        let expected = 0.5 * (-(3.0f64).sqrt()).exp();
        assert!((expected - 0.08854).abs() < 1e-3);
        assert!((readout.psi_right[0] - expected).abs() < 1e-4, "{}", readout.psi_right[0]);
    }

    #[test]
    fn positivity_and_large_steps_stay_finite() {
        let q = build_gauss_legendre(8).unwrap();
        for n_t in [100, 10] {
            let p = absorber(20, 1.0, n_t, 0.2, 0.7)
                .with_inflow_left(|t, _| 1.0 + t)
                .with_initial(|x, _| x)
                .with_source(|t, x, mu| (t + x) * (1.0 - mu));
            let (sol, _) = solve(&p, &q, &[]).unwrap();
            assert!(sol.psi.iter().all(|v| v.is_finite() && *v >= -1e-12));
            assert!(sol.intensity_final.iter().all(|v| v.is_finite() && *v >= -1e-12));
        }
    }

    #[test]
    fn trace_csv_has_one_row_per_level() {
        let p = absorber(10, 1.0, 5, 0.5, 0.5).with_inflow_left(|_, _| 1.0);
        let q = build_gauss_legendre(2).unwrap();
        let (sol, _) = solve(&p, &q, &[]).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("k,t,si_iters,psi_left,psi_right"));
        assert_eq!(text.lines().count(), 7);
        let mut buf = Vec::new();
        write_psi_history_csv(&sol, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6 * 11);
    }
}
