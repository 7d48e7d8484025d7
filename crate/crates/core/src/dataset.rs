//! Training and test sets for the two inverse problems.
//!
//! Each sample runs the direct solver on `[0, 1]` with unit inflow from the
//! left, vacuum on the right, no internal source and unit initial intensity
//! at the left node for forward directions, then records the boundary
//! scalar flux at the detector times.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{MaterialField, SlabGeometry, TimeGrid, TransportProblem, DEFAULT_SI_MAX_ITER, DEFAULT_SI_TOL};
use crate::quadrature::{build_gauss_legendre, AngularQuadrature};
use crate::solver::MocSolver;

pub const KAPPA_MIN: f64 = 0.1;
pub const KAPPA_MAX: f64 = 0.9;

/// Name of the generator used for random test sets: ChaCha8 seeded with
/// `seed_from_u64`, each draw `u = (next_u64 >> 11) * 2^-53` mapped to
/// `KAPPA_MIN + (KAPPA_MAX - KAPPA_MIN) u`, redrawn unless strictly inside
/// the range.
pub const PRNG_NAME: &str = "chacha8-u53-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    /// Single absorption coefficient, detectors at `t = 3`.
    Homogeneous,
    /// Two regions split at the breakpoint, detectors at `t = 2` and `t = 3`.
    Heterogeneous,
}

impl ProblemId {
    pub fn detector_times(self) -> &'static [f64] {
        match self {
            ProblemId::Homogeneous => &[3.0],
            ProblemId::Heterogeneous => &[2.0, 3.0],
        }
    }

    pub fn n_inputs(self) -> usize {
        2 * self.detector_times().len()
    }

    pub fn n_targets(self) -> usize {
        match self {
            ProblemId::Homogeneous => 1,
            ProblemId::Heterogeneous => 2,
        }
    }

    pub fn column_names(self) -> Vec<String> {
        match self {
            ProblemId::Homogeneous => vec!["d0".into(), "d1".into(), "kappa".into()],
            ProblemId::Heterogeneous => {
                let mut cols = Vec::new();
                for side in ["d0", "d1"] {
                    for t in self.detector_times() {
                        cols.push(format!("{side}_t{t}"));
                    }
                }
                cols.extend(["kappa1".to_string(), "kappa2".to_string()]);
                cols
            }
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemId::Homogeneous => "homogeneous",
            ProblemId::Heterogeneous => "heterogeneous",
        })
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" | "p1" => Ok(ProblemId::Homogeneous),
            "heterogeneous" | "p2" => Ok(ProblemId::Heterogeneous),
            _ => Err(Error::invalid(format!("unknown problem id '{s}' (expected p1/p2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            _ => Err(Error::invalid(format!("unknown role '{s}' (expected train/test)"))),
        }
    }
}

/// Direct-solver template shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub n_q: usize,
    pub n_x: usize,
    pub t_f: f64,
    pub n_t: usize,
    /// Fixed total coefficient; each region scatters `sigma_t - kappa`.
    pub sigma_t: f64,
    pub speed_c: f64,
    pub si_tol: f64,
    pub si_max_iter: usize,
    /// Region boundary for the heterogeneous problem.
    pub breakpoint: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_q: 100,
            n_x: 100,
            t_f: 3.0,
            n_t: 300,
            sigma_t: 1.0,
            speed_c: 1.0,
            si_tol: DEFAULT_SI_TOL,
            si_max_iter: DEFAULT_SI_MAX_ITER,
            breakpoint: 0.5,
        }
    }
}

impl GenConfig {
    pub fn h_t(&self) -> f64 {
        self.t_f / self.n_t as f64
    }

    /// Direct problem for one coefficient vector.
    pub fn problem(&self, id: ProblemId, kappa: &[f64]) -> Result<TransportProblem> {
        if kappa.len() != id.n_targets() {
            return Err(Error::invalid(format!(
                "{id} problem takes {} coefficients, got {}",
                id.n_targets(),
                kappa.len()
            )));
        }
        let geometry = SlabGeometry::new(0.0, 1.0, self.n_x)?;
        let breakpoints = match id {
            ProblemId::Homogeneous => vec![0.0, 1.0],
            ProblemId::Heterogeneous => vec![0.0, self.breakpoint, 1.0],
        };
        let material = MaterialField::with_fixed_sigma_t(breakpoints, kappa.to_vec(), self.sigma_t)?;
        let time = TimeGrid::new(self.t_f, self.n_t)?;
        for &t in id.detector_times() {
            if time.level_of(t).is_none() {
                return Err(Error::config(format!("detector time {t} is not a multiple of h_t = {}", time.h_t())));
            }
        }
        let a = geometry.a();
        let tol = 1e-9 * geometry.h_x();
        Ok(TransportProblem::new(geometry, material, time)?
            .with_speed(self.speed_c)?
            .with_si(self.si_tol, self.si_max_iter)?
            .with_inflow_left(|_, _| 1.0)
            .with_initial(move |x, mu| if mu > 0.0 && (x - a).abs() <= tol { 1.0 } else { 0.0 }))
    }

    /// Detector vector for one coefficient vector: left boundary by
    /// ascending time, then right boundary by ascending time.
    pub fn detectors(&self, id: ProblemId, kappa: &[f64], quadrature: &AngularQuadrature) -> Result<Vec<f64>> {
        let problem = self.problem(id, kappa)?;
        let (_, readout) = MocSolver::new(&problem, quadrature)?.solve(id.detector_times())?;
        Ok(readout.psi_left.into_iter().chain(readout.psi_right).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub problem: ProblemId,
    pub role: Role,
    pub seed: Option<u64>,
    pub config: GenConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.meta.problem.n_inputs()
    }

    pub fn n_targets(&self) -> usize {
        self.meta.problem.n_targets()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.inputs.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.targets.clone()).collect()
    }
}

/// Runs the solver for each coefficient vector in the current rayon pool;
/// samples keep the order of `kappas`.
pub fn generate(
    id: ProblemId,
    role: Role,
    seed: Option<u64>,
    kappas: Vec<Vec<f64>>,
    cfg: &GenConfig,
) -> Result<Dataset> {
    let quadrature = build_gauss_legendre(cfg.n_q)?;
    let samples = kappas
        .into_par_iter()
        .map(|targets| {
            let inputs = cfg.detectors(id, &targets, &quadrature)?;
            Ok(Sample { inputs, targets })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta: DatasetMeta { problem: id, role, seed, config: *cfg }, samples })
}

/// Homogeneous training grid: 17 coefficients 0.10, 0.15, ..., 0.90.
pub fn grid_p1() -> Vec<Vec<f64>> {
    (0..17).map(|s| vec![(10 + 5 * s) as f64 / 100.0]).collect()
}

/// Heterogeneous training grid: 9 x 9 pairs over 0.1, 0.2, ..., 0.9,
/// with the first coefficient varying slowest.
pub fn grid_p2() -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (1..=9).map(|s| s as f64 / 10.0).collect();
    axis.iter().flat_map(|&k1| axis.iter().map(move |&k2| vec![k1, k2])).collect()
}

pub fn generate_grid_train_p1(cfg: &GenConfig) -> Result<Dataset> {
    generate(ProblemId::Homogeneous, Role::Train, None, grid_p1(), cfg)
}

pub fn generate_grid_train_p2(cfg: &GenConfig) -> Result<Dataset> {
    generate(ProblemId::Heterogeneous, Role::Train, None, grid_p2(), cfg)
}

/// `n` coefficient vectors drawn uniformly inside `(KAPPA_MIN, KAPPA_MAX)`.
pub fn random_kappas(id: ProblemId, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || loop {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let k = KAPPA_MIN + (KAPPA_MAX - KAPPA_MIN) * u;
        if k > KAPPA_MIN && k < KAPPA_MAX {
            return k;
        }
    };
    (0..n).map(|_| (0..id.n_targets()).map(|_| draw()).collect()).collect()
}

pub fn generate_random_test(id: ProblemId, n: usize, seed: u64, cfg: &GenConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("test set size must be positive"));
    }
    generate(id, Role::Test, Some(seed), random_kappas(id, n, seed), cfg)
}

fn meta_line(meta: &DatasetMeta) -> String {
    let c = &meta.config;
    let seed = meta.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "# problem={} role={} seed={} n_q={} n_x={} h_t={} sigma_t={} t_f={} n_t={} speed_c={} \
         si_tol={} si_max_iter={} breakpoint={} prng={}",
        meta.problem,
        meta.role,
        seed,
        c.n_q,
        c.n_x,
        c.h_t(),
        c.sigma_t,
        c.t_f,
        c.n_t,
        c.speed_c,
        c.si_tol,
        c.si_max_iter,
        c.breakpoint,
        PRNG_NAME
    )
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let id = ds.meta.problem;
    writeln!(w, "{}", meta_line(&ds.meta))?;
    writeln!(w, "{}", id.column_names().join(","))?;
    for (s, sample) in ds.samples.iter().enumerate() {
        if sample.inputs.len() != id.n_inputs() || sample.targets.len() != id.n_targets() {
            return Err(Error::Schema(format!("sample {s} does not match the {id} layout")));
        }
        let row: Vec<String> = sample.inputs.iter().chain(&sample.targets).map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn parse_meta(line: &str, line_no: usize) -> Result<DatasetMeta> {
    let perr = |message: String| Error::Parse { line: line_no, message };
    let body = line.strip_prefix('#').ok_or_else(|| perr("expected '# key=value ...' metadata".into()))?;
    let mut map = std::collections::HashMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| perr(format!("malformed metadata token '{tok}'")))?;
        map.insert(k, v);
    }
    let get = |k: &str| map.get(k).copied().ok_or_else(|| perr(format!("missing metadata key '{k}'")));
    fn num<T: FromStr>(v: &str, k: &str, line_no: usize) -> Result<T> {
        v.parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad value '{v}' for {k}") })
    }
    let problem: ProblemId = get("problem")?.parse().map_err(|e: Error| perr(e.to_string()))?;
    let role: Role = get("role")?.parse().map_err(|e: Error| perr(e.to_string()))?;
    let seed = match get("seed")? {
        "none" => None,
        s => Some(num(s, "seed", line_no)?),
    };
    let prng = get("prng")?;
    if prng != PRNG_NAME {
        return Err(Error::Schema(format!("unsupported generator '{prng}', expected {PRNG_NAME}")));
    }
    let config = GenConfig {
        n_q: num(get("n_q")?, "n_q", line_no)?,
        n_x: num(get("n_x")?, "n_x", line_no)?,
        t_f: num(get("t_f")?, "t_f", line_no)?,
        n_t: num(get("n_t")?, "n_t", line_no)?,
        sigma_t: num(get("sigma_t")?, "sigma_t", line_no)?,
        speed_c: num(get("speed_c")?, "speed_c", line_no)?,
        si_tol: num(get("si_tol")?, "si_tol", line_no)?,
        si_max_iter: num(get("si_max_iter")?, "si_max_iter", line_no)?,
        breakpoint: num(get("breakpoint")?, "breakpoint", line_no)?,
    };
    let h_t: f64 = num(get("h_t")?, "h_t", line_no)?;
    if config.n_t == 0 || h_t != config.h_t() {
        return Err(Error::Schema(format!("h_t={h_t} is inconsistent with t_f/n_t = {}", config.h_t())));
    }
    Ok(DatasetMeta { problem, role, seed, config })
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, first) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let meta = parse_meta(&first?, n)?;
    let id = meta.problem;
    let (n, header) = lines.next().ok_or(Error::Parse { line: 2, message: "missing column header".into() })?;
    let header = header?;
    let expected = id.column_names();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != expected.len() {
        return Err(Error::Schema(format!(
            "line {n}: {} columns, the {id} layout has {}",
            cols.len(),
            expected.len()
        )));
    }
    if cols != expected {
        return Err(Error::Schema(format!("line {n}: columns {cols:?}, expected {expected:?}")));
    }
    let mut samples = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse { line: n, message: format!("bad number '{v}'") })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected.len() {
            return Err(Error::Schema(format!(
                "line {n}: {} values, expected {}",
                values.len(),
                expected.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: n, message: "non-finite value".into() });
        }
        let (inputs, targets) = values.split_at(id.n_inputs());
        samples.push(Sample { inputs: inputs.to_vec(), targets: targets.to_vec() });
    }
    Ok(Dataset { meta, samples })
}

pub fn save_dataset(ds: &Dataset, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(ds, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
