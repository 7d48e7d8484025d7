//! Problem description: slab geometry, piecewise material, time grid and
//! boundary, initial and source data.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Tolerance used when matching material breakpoints and detector times to
/// grid points.
pub const GRID_MATCH_TOL: f64 = 1e-9;

pub const DEFAULT_SI_TOL: f64 = 1.49e-8;
pub const DEFAULT_SI_MAX_ITER: usize = 1000;

/// Uniform mesh on `[a, b]` with `n_x` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabGeometry {
    a: f64,
    b: f64,
    n_x: usize,
    h_x: f64,
}

impl SlabGeometry {
    pub fn new(a: f64, b: f64, n_x: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::config(format!("slab needs finite a < b, got [{a}, {b}]")));
        }
        if n_x < 2 {
            return Err(Error::config(format!("n_x must be at least 2, got {n_x}")));
        }
        Ok(Self { a, b, n_x, h_x: (b - a) / n_x as f64 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn h_x(&self) -> f64 {
        self.h_x
    }

    pub fn n_nodes(&self) -> usize {
        self.n_x + 1
    }

    /// Position of node `i`, `a + i h_x`.
    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h_x
    }

    pub fn nodes(&self) -> Array1<f64> {
        (0..=self.n_x).map(|i| self.node(i)).collect()
    }

    pub fn cell_midpoint(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.h_x
    }
}

/// Piecewise-constant absorption and scattering coefficients.
///
/// Region `r` covers `[breakpoints[r], breakpoints[r + 1])`; the last region
/// is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    breakpoints: Vec<f64>,
    kappa: Vec<f64>,
    sigma_s: Vec<f64>,
}

impl MaterialField {
    pub fn new(breakpoints: Vec<f64>, kappa: Vec<f64>, sigma_s: Vec<f64>) -> Result<Self> {
        let regions = kappa.len();
        if regions == 0 || sigma_s.len() != regions || breakpoints.len() != regions + 1 {
            return Err(Error::config(format!(
                "material needs R kappa, R sigma_s and R+1 breakpoints; got {} / {} / {}",
                kappa.len(),
                sigma_s.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("material breakpoints must be finite and strictly increasing"));
        }
        for (k, s) in kappa.iter().zip(&sigma_s) {
            if !(k.is_finite() && *k >= 0.0 && s.is_finite() && *s >= 0.0) {
                return Err(Error::config(format!(
                    "coefficients must be finite and nonnegative, got kappa={k}, sigma_s={s}"
                )));
            }
        }
        Ok(Self { breakpoints, kappa, sigma_s })
    }

    pub fn homogeneous(a: f64, b: f64, kappa: f64, sigma_s: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![kappa], vec![sigma_s])
    }

    /// Material with the total coefficient fixed to `sigma_t` in every region,
    /// so `sigma_s = sigma_t - kappa` per region.
    pub fn with_fixed_sigma_t(breakpoints: Vec<f64>, kappa: Vec<f64>, sigma_t: f64) -> Result<Self> {
        if let Some(k) = kappa.iter().find(|&&k| k > sigma_t) {
            return Err(Error::config(format!("kappa {k} exceeds fixed sigma_t {sigma_t}")));
        }
        let sigma_s = kappa.iter().map(|k| sigma_t - k).collect();
        Self::new(breakpoints, kappa, sigma_s)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn sigma_s(&self) -> &[f64] {
        &self.sigma_s
    }

    pub fn n_regions(&self) -> usize {
        self.kappa.len()
    }

    /// Index of the region containing `x`. Points left of the first
    /// breakpoint map to region 0, points right of the last to the last one.
    pub fn region_at(&self, x: f64) -> usize {
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        interior.iter().take_while(|&&bp| x >= bp).count()
    }

    pub fn kappa_at(&self, x: f64) -> f64 {
        self.kappa[self.region_at(x)]
    }

    pub fn sigma_s_at(&self, x: f64) -> f64 {
        self.sigma_s[self.region_at(x)]
    }

    pub fn sigma_t_at(&self, x: f64) -> f64 {
        let r = self.region_at(x);
        self.kappa[r] + self.sigma_s[r]
    }

    /// Checks that the material spans the slab and that every interior
    /// breakpoint sits on a mesh node.
    pub fn check_alignment(&self, geometry: &SlabGeometry) -> Result<()> {
        let first = self.breakpoints[0];
        let last = *self.breakpoints.last().unwrap();
        let h = geometry.h_x();
        if (first - geometry.a()).abs() > GRID_MATCH_TOL * h || (last - geometry.b()).abs() > GRID_MATCH_TOL * h {
            return Err(Error::config(format!(
                "material spans [{first}, {last}] but the slab is [{}, {}]",
                geometry.a(),
                geometry.b()
            )));
        }
        for &bp in &self.breakpoints[1..self.breakpoints.len() - 1] {
            let cells = (bp - geometry.a()) / h;
            if (cells - cells.round()).abs() > GRID_MATCH_TOL {
                return Err(Error::config(format!(
                    "material breakpoint {bp} does not coincide with a mesh node (h_x = {h})"
                )));
            }
        }
        Ok(())
    }
}

/// Total coefficient on cell `(x_i, x_{i+1})`, selected by the cell midpoint.
pub fn sigma_t_on_cell(material: &MaterialField, i: usize, geometry: &SlabGeometry) -> f64 {
    material.sigma_t_at(geometry.cell_midpoint(i))
}

/// Uniform time grid `t_k = k h_t`, `k = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_f: f64,
    n_t: usize,
}

impl TimeGrid {
    pub fn new(t_f: f64, n_t: usize) -> Result<Self> {
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(Error::config(format!("t_f must be positive, got {t_f}")));
        }
        if n_t == 0 {
            return Err(Error::config("n_t must be positive"));
        }
        Ok(Self { t_f, n_t })
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn h_t(&self) -> f64 {
        self.t_f / self.n_t as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h_t()
    }

    /// Level index of `t`, if `t` is a grid time.
    pub fn level_of(&self, t: f64) -> Option<usize> {
        let k = t / self.h_t();
        let kr = k.round();
        if kr < 0.0 || kr > self.n_t as f64 || (k - kr).abs() > GRID_MATCH_TOL {
            None
        } else {
            Some(kr as usize)
        }
    }
}

/// `(t, mu) -> I` on a boundary.
pub type InflowFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(x, mu) -> I` at `t = 0`.
pub type InitialFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(t, x, mu) -> q`.
pub type SourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Full description of a transient slab transport problem.
#[derive(Clone)]
pub struct TransportProblem {
    geometry: SlabGeometry,
    material: MaterialField,
    time: TimeGrid,
    speed_c: f64,
    inflow_left: InflowFn,
    inflow_right: InflowFn,
    initial: InitialFn,
    source: SourceFn,
    si_tol: f64,
    si_max_iter: usize,
}

impl fmt::Debug for TransportProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransportProblem")
            .field("geometry", &self.geometry)
            .field("material", &self.material)
            .field("time", &self.time)
            .field("speed_c", &self.speed_c)
            .field("si_tol", &self.si_tol)
            .field("si_max_iter", &self.si_max_iter)
            .finish_non_exhaustive()
    }
}

impl TransportProblem {
    /// Problem with vacuum boundaries, zero initial data, zero source,
    /// `c = 1` and default source-iteration controls.
    pub fn new(geometry: SlabGeometry, material: MaterialField, time: TimeGrid) -> Result<Self> {
        material.check_alignment(&geometry)?;
        Ok(Self {
            geometry,
            material,
            time,
            speed_c: 1.0,
            inflow_left: Arc::new(|_, _| 0.0),
            inflow_right: Arc::new(|_, _| 0.0),
            initial: Arc::new(|_, _| 0.0),
            source: Arc::new(|_, _, _| 0.0),
            si_tol: DEFAULT_SI_TOL,
            si_max_iter: DEFAULT_SI_MAX_ITER,
        })
    }

    pub fn with_speed(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::config(format!("particle speed must be positive, got {c}")));
        }
        self.speed_c = c;
        Ok(self)
    }

    pub fn with_si(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) || max_iter == 0 {
            return Err(Error::config(format!(
                "source iteration needs tol > 0 and max_iter >= 1, got {tol}, {max_iter}"
            )));
        }
        self.si_tol = tol;
        self.si_max_iter = max_iter;
        Ok(self)
    }

    pub fn with_inflow_left(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inflow_left = Arc::new(f);
        self
    }

    pub fn with_inflow_right(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inflow_right = Arc::new(f);
        self
    }

    pub fn with_initial(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.initial = Arc::new(f);
        self
    }

    pub fn with_source(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    pub fn with_material(mut self, material: MaterialField) -> Result<Self> {
        material.check_alignment(&self.geometry)?;
        self.material = material;
        Ok(self)
    }

    pub fn geometry(&self) -> &SlabGeometry {
        &self.geometry
    }

    pub fn material(&self) -> &MaterialField {
        &self.material
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn speed_c(&self) -> f64 {
        self.speed_c
    }

    pub fn h_t(&self) -> f64 {
        self.time.h_t()
    }

    pub fn si_tol(&self) -> f64 {
        self.si_tol
    }

    pub fn si_max_iter(&self) -> usize {
        self.si_max_iter
    }

    pub fn inflow_left(&self, t: f64, mu: f64) -> f64 {
        (self.inflow_left)(t, mu)
    }

    pub fn inflow_right(&self, t: f64, mu: f64) -> f64 {
        (self.inflow_right)(t, mu)
    }

    pub fn initial(&self, x: f64, mu: f64) -> f64 {
        (self.initial)(x, mu)
    }

    pub fn source(&self, t: f64, x: f64, mu: f64) -> f64 {
        (self.source)(t, x, mu)
    }
}

/// Scalar flux history and final angular intensity of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSolution {
    /// `psi[[k, i]]`, time level `k = 0..=n_t`, node `i = 0..=n_x`.
    pub psi: Array2<f64>,
    /// `[node, direction]` intensity at the final time level.
    pub intensity_final: Array2<f64>,
    /// Source iterations used at each time step `k = 1..=n_t`.
    pub si_iterations: Vec<usize>,
    pub times: Array1<f64>,
    pub nodes: Array1<f64>,
}

impl SpaceTimeSolution {
    pub fn final_psi(&self) -> ndarray::ArrayView1<'_, f64> {
        self.psi.row(self.psi.nrows() - 1)
    }
}

/// Boundary scalar flux at requested detector times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorReadout {
    pub times: Vec<f64>,
    pub psi_left: Vec<f64>,
    pub psi_right: Vec<f64>,
}
