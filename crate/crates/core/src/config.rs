//! JSON run configuration and named boundary/initial/source presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::GenConfig;
use crate::error::{Error, Result};
use crate::mlp::TrainConfig;
use crate::problem::{MaterialField, SlabGeometry, TimeGrid, TransportProblem, DEFAULT_SI_MAX_ITER, DEFAULT_SI_TOL};
use crate::verification::{manufactured_intensity, manufactured_source};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub a: f64,
    pub b: f64,
    pub n_x: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub breakpoints: Vec<f64>,
    pub kappa: Vec<f64>,
    pub sigma_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_f: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiConfig {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflowPreset {
    Zero,
    Unit,
    /// Manufactured intensity sampled at the boundary.
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    Zero,
    /// Unit intensity at the left node for forward directions, zero elsewhere.
    LeftNodeUnit,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    Zero,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub loss_target: Option<f64>,
    pub standardize_inputs: Option<bool>,
}

/// Contents of a `--config` file. Missing keys take the defaults of the
/// homogeneous inverse experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub time: TimeConfig,
    pub speed_c: f64,
    pub si: SiConfig,
    pub quadrature: QuadratureConfig,
    pub inflow_left: InflowPreset,
    pub inflow_right: InflowPreset,
    pub initial: InitialPreset,
    pub source: SourcePreset,
    pub detector_times: Vec<f64>,
    /// Total coefficient held fixed when generating inverse-problem data.
    pub sigma_t: f64,
    /// Region boundary of the heterogeneous inverse problem.
    pub breakpoint: f64,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig { a: 0.0, b: 1.0, n_x: 100 },
            material: MaterialConfig { breakpoints: vec![0.0, 1.0], kappa: vec![0.5], sigma_s: vec![0.5] },
            time: TimeConfig { t_f: 3.0, n_t: 300 },
            speed_c: 1.0,
            si: SiConfig { tol: DEFAULT_SI_TOL, max_iter: DEFAULT_SI_MAX_ITER },
            quadrature: QuadratureConfig { n_q: 100 },
            inflow_left: InflowPreset::Unit,
            inflow_right: InflowPreset::Zero,
            initial: InitialPreset::LeftNodeUnit,
            source: SourcePreset::Zero,
            detector_times: vec![3.0],
            sigma_t: 1.0,
            breakpoint: 0.5,
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds and validates the transport problem described by this config.
    pub fn transport_problem(&self) -> Result<TransportProblem> {
        let g = self.geometry;
        let geometry = SlabGeometry::new(g.a, g.b, g.n_x)?;
        let m = &self.material;
        let material = MaterialField::new(m.breakpoints.clone(), m.kappa.clone(), m.sigma_s.clone())?;
        let time = TimeGrid::new(self.time.t_f, self.time.n_t)?;
        let uses_manufactured = self.inflow_left == InflowPreset::Manufactured
            || self.inflow_right == InflowPreset::Manufactured
            || self.initial == InitialPreset::Manufactured
            || self.source == SourcePreset::Manufactured;
        if uses_manufactured && material.n_regions() != 1 {
            return Err(Error::config("manufactured presets need a homogeneous material"));
        }
        let kappa = material.kappa()[0];
        let sigma_t = kappa + material.sigma_s()[0];
        let (a, b, h) = (geometry.a(), geometry.b(), geometry.h_x());

        let mut p = TransportProblem::new(geometry, material, time)?
            .with_speed(self.speed_c)?
            .with_si(self.si.tol, self.si.max_iter)?;
        p = match self.inflow_left {
            InflowPreset::Zero => p.with_inflow_left(|_, _| 0.0),
            InflowPreset::Unit => p.with_inflow_left(|_, _| 1.0),
            InflowPreset::Manufactured => p.with_inflow_left(move |t, mu| manufactured_intensity(t, a, mu, sigma_t)),
        };
        p = match self.inflow_right {
            InflowPreset::Zero => p.with_inflow_right(|_, _| 0.0),
            InflowPreset::Unit => p.with_inflow_right(|_, _| 1.0),
            InflowPreset::Manufactured => p.with_inflow_right(move |t, mu| manufactured_intensity(t, b, mu, sigma_t)),
        };
        p = match self.initial {
            InitialPreset::Zero => p.with_initial(|_, _| 0.0),
            InitialPreset::LeftNodeUnit => {
                let tol = 1e-9 * h;
                p.with_initial(move |x, mu| if mu > 0.0 && (x - a).abs() <= tol { 1.0 } else { 0.0 })
            }
            InitialPreset::Manufactured => p.with_initial(move |x, mu| manufactured_intensity(0.0, x, mu, sigma_t)),
        };
        p = match self.source {
            SourcePreset::Zero => p.with_source(|_, _, _| 0.0),
            SourcePreset::Manufactured => p.with_source(move |t, x, mu| manufactured_source(t, x, mu, kappa, sigma_t)),
        };
        for &t in &self.detector_times {
            if p.time().level_of(t).is_none() {
                return Err(Error::config(format!("detector time {t} is not a grid time")));
            }
        }
        Ok(p)
    }

    /// Dataset-generation template taken from this config.
    pub fn gen_config(&self) -> Result<GenConfig> {
        if self.geometry.a != 0.0 || self.geometry.b != 1.0 {
            return Err(Error::config("inverse-problem data is generated on [0, 1]"));
        }
        let cfg = GenConfig {
            n_q: self.quadrature.n_q,
            n_x: self.geometry.n_x,
            t_f: self.time.t_f,
            n_t: self.time.n_t,
            sigma_t: self.sigma_t,
            speed_c: self.speed_c,
            si_tol: self.si.tol,
            si_max_iter: self.si.max_iter,
            breakpoint: self.breakpoint,
        };
        // validates grid, quadrature order and detector alignment
        crate::quadrature::build_gauss_legendre(cfg.n_q).map_err(|e| Error::config(e.to_string()))?;
        cfg.problem(crate::dataset::ProblemId::Heterogeneous, &[0.5 * cfg.sigma_t; 2])?;
        Ok(cfg)
    }

    /// Training settings: defaults for `problem`, overridden by the
    /// `train` section.
    pub fn train_config(&self, problem: crate::dataset::ProblemId, seed: u64) -> TrainConfig {
        let mut cfg = default_train_config(problem, seed);
        if let Some(v) = self.train.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.train.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.train.loss_target {
            cfg.loss_target = v;
        }
        if let Some(v) = self.train.standardize_inputs {
            cfg.standardize_inputs = v;
        }
        cfg
    }
}

pub const DEFAULT_SEED: u64 = 1;

/// Network layout per inverse problem.
pub fn default_architecture(problem: crate::dataset::ProblemId) -> Vec<usize> {
    match problem {
        crate::dataset::ProblemId::Homogeneous => vec![2, 25, 25, 25, 1],
        crate::dataset::ProblemId::Heterogeneous => vec![4, 25, 25, 25, 25, 2],
    }
}

pub fn default_train_config(problem: crate::dataset::ProblemId, seed: u64) -> TrainConfig {
    use crate::dataset::ProblemId::*;
    let (loss_target, max_epochs) = match problem {
        Homogeneous => (1e-6, 200_000),
        Heterogeneous => (1e-5, 100_000),
    };
    TrainConfig { learning_rate: 0.1, max_epochs, loss_target, rng_seed: seed, standardize_inputs: true }
}

pub fn default_test_size(problem: crate::dataset::ProblemId) -> usize {
    match problem {
        crate::dataset::ProblemId::Homogeneous => 32,
        crate::dataset::ProblemId::Heterogeneous => 64,
    }
}
