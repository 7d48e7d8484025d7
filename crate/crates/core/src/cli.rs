//! Command-line driver.
//!
//! Exit codes: 0 on success with thresholds met, 1 on computational
//! failure or a missed threshold, 2 on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{default_architecture, default_test_size, RunConfig, DEFAULT_SEED};
use crate::dataset::{self, Dataset, ProblemId, Role};
use crate::error::{Error, Result};
use crate::mlp::{self, MlpModel};
use crate::quadrature::build_gauss_legendre;
use crate::solver::{self, MocSolver};
use crate::verification::{self, VerifyConfig, TABLE_KAPPAS};

pub const OUT_ENV: &str = "TRANSPORT_INVERSE_OUT";
/// Threshold on the manufactured-solution relative error.
pub const VERIFY_EPS_MAX: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "transport-inverse", version, about = "Transient slab transport solver and MLP absorption estimator")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for random test sets and network initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel solver runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manufactured-solution check of the direct solver; writes table1.csv.
    Verify(VerifyArgs),
    /// Solve the configured problem; writes trace.csv and psi.csv.
    Solve(SolveArgs),
    /// Generate inverse-problem datasets.
    GenData(GenDataArgs),
    /// Train the network on a training dataset.
    Train(TrainArgs),
    /// Evaluate a trained network on a test dataset.
    Eval(EvalArgs),
    /// Estimate absorption coefficients from detector readings.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run a single absorption coefficient instead of the table.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub n_x: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub n_q: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Detector times, comma separated (overrides the config).
    #[arg(long, value_delimiter = ',')]
    pub detector_times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// p1 (homogeneous) or p2 (heterogeneous); both when omitted.
    #[arg(long)]
    pub problem: Option<ProblemId>,
    /// train or test; both when omitted.
    #[arg(long)]
    pub role: Option<Role>,
    /// Test-set size (32 for p1, 64 for p2 by default).
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub problem: Option<ProblemId>,
    /// Training dataset (default `<out>/<problem>_train.csv`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub loss_target: Option<f64>,
    /// Train on raw detector values.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub problem: Option<ProblemId>,
    /// Model file (default `<out>/<problem>_model.json`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset to evaluate (default `<out>/<problem>_test.csv`).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Detector readings, comma separated, in dataset column order.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub readings: Vec<f64>,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
        Error::Numeric(_) | Error::Convergence { .. } | Error::TrainingDiverged { .. } | Error::UndefinedR2 { .. } => 1,
    }
}

struct Context {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
    jobs: Option<usize>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset_path(&self, id: ProblemId, role: Role) -> PathBuf {
        self.path(&format!("{}_{role}.csv", short_name(id)))
    }

    fn model_path(&self, id: ProblemId) -> PathBuf {
        self.path(&format!("{}_model.json", short_name(id)))
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn with_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.jobs {
            None => f(),
            Some(0) => Err(Error::invalid("--jobs must be at least 1")),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(e.to_string()))?
                .install(f),
        }
    }
}

pub fn short_name(id: ProblemId) -> &'static str {
    match id {
        ProblemId::Homogeneous => "p1",
        ProblemId::Heterogeneous => "p2",
    }
}

fn problems(p: Option<ProblemId>) -> Vec<ProblemId> {
    p.map_or_else(|| vec![ProblemId::Homogeneous, ProblemId::Heterogeneous], |p| vec![p])
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs a parsed command line, writing the report to `w`. Returns the exit code.
pub fn run<W: Write>(cli: Cli, w: &mut W) -> Result<u8> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context { config, seed: cli.seed.unwrap_or(DEFAULT_SEED), out: cli.out, jobs: cli.jobs };
    match cli.command {
        Command::Verify(a) => cmd_verify(&ctx, &a, w),
        Command::Solve(a) => cmd_solve(&ctx, &a, w),
        Command::GenData(a) => cmd_gen_data(&ctx, &a, w),
        Command::Train(a) => cmd_train(&ctx, &a, w),
        Command::Eval(a) => cmd_eval(&ctx, &a, w),
        Command::Estimate(a) => cmd_estimate(&a, w),
    }
}

fn cmd_verify<W: Write>(ctx: &Context, a: &VerifyArgs, w: &mut W) -> Result<u8> {
    let mut cfg = VerifyConfig { si_tol: ctx.config.si.tol, si_max_iter: ctx.config.si.max_iter, ..Default::default() };
    if let Some(n) = a.n_x {
        cfg.n_x = n;
    }
    if let Some(n) = a.n_t {
        cfg.n_t = n;
    }
    if let Some(n) = a.n_q {
        cfg.n_q = n;
    }
    let kappas: Vec<f64> = a.kappa.map_or_else(|| TABLE_KAPPAS.to_vec(), |k| vec![k]);
    ctx.ensure_out()?;
    let rows = ctx.with_pool(|| verification::run_table1(&cfg, &kappas))?;
    let path = ctx.path("table1.csv");
    let mut f = create(&path)?;
    verification::write_table1_csv(&rows, &cfg, &mut f)?;
    f.flush()?;

    writeln!(w, "{:>6} {:>12} {:>12} {:>12} {:>10}", "kappa", "psi(0.0)", "psi(0.5)", "psi(1.0)", "eps_rel")?;
    for r in &rows {
        writeln!(w, "{:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e}", r.kappa, r.psi[0], r.psi[1], r.psi[2], r.eps_rel)?;
    }
    let e = verification::exact_row(&cfg);
    writeln!(w, "{:>6} {:>12.4e} {:>12.4e} {:>12.4e}", "exact", e[0], e[1], e[2])?;
    writeln!(w, "wrote {}", path.display())?;
    let ok = rows.iter().all(|r| r.eps_rel < VERIFY_EPS_MAX);
    Ok(if ok { 0 } else { 1 })
}

fn cmd_solve<W: Write>(ctx: &Context, a: &SolveArgs, w: &mut W) -> Result<u8> {
    let mut config = ctx.config.clone();
    if let Some(t) = &a.detector_times {
        config.detector_times = t.clone();
    }
    let problem = config.transport_problem()?;
    let quadrature = build_gauss_legendre(config.quadrature.n_q).map_err(|e| Error::config(e.to_string()))?;
    let (solution, readout) = MocSolver::new(&problem, &quadrature)?.solve(&config.detector_times)?;
    ctx.ensure_out()?;
    let mut f = create(&ctx.path("trace.csv"))?;
    solver::write_trace_csv(&solution, &mut f)?;
    f.flush()?;
    let mut f = create(&ctx.path("psi.csv"))?;
    solver::write_psi_history_csv(&solution, &mut f)?;
    f.flush()?;
    writeln!(w, "t,psi_left,psi_right")?;
    for ((t, l), r) in readout.times.iter().zip(&readout.psi_left).zip(&readout.psi_right) {
        writeln!(w, "{t},{l:.16e},{r:.16e}")?;
    }
    writeln!(w, "wrote {} and {}", ctx.path("trace.csv").display(), ctx.path("psi.csv").display())?;
    Ok(0)
}

fn describe(ds: &Dataset) -> String {
    let range = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.4}, {hi:.4}]")
    };
    let cols = ds.meta.problem.column_names();
    let mut parts = Vec::new();
    for (c, name) in cols.iter().enumerate() {
        let vals = ds
            .samples
            .iter()
            .map(|s| if c < ds.n_inputs() { s.inputs[c] } else { s.targets[c - ds.n_inputs()] })
            .collect();
        parts.push(format!("{name} {}", range(vals)));
    }
    parts.join(", ")
}

fn cmd_gen_data<W: Write>(ctx: &Context, a: &GenDataArgs, w: &mut W) -> Result<u8> {
    let cfg = ctx.config.gen_config()?;
    let roles = a.role.map_or_else(|| vec![Role::Train, Role::Test], |r| vec![r]);
    ctx.ensure_out()?;
    for id in problems(a.problem) {
        for &role in &roles {
            let ds = ctx.with_pool(|| match role {
                Role::Train => match id {
                    ProblemId::Homogeneous => dataset::generate_grid_train_p1(&cfg),
                    ProblemId::Heterogeneous => dataset::generate_grid_train_p2(&cfg),
                },
                Role::Test => dataset::generate_random_test(id, a.n.unwrap_or(default_test_size(id)), ctx.seed, &cfg),
            })?;
            let path = ctx.dataset_path(id, role);
            dataset::save_dataset(&ds, &path)?;
            writeln!(w, "{} {role}: {} samples -> {}", short_name(id), ds.len(), path.display())?;
            if !ds.is_empty() {
                writeln!(w, "  {}", describe(&ds))?;
            }
        }
    }
    Ok(0)
}

fn cmd_train<W: Write>(ctx: &Context, a: &TrainArgs, w: &mut W) -> Result<u8> {
    if a.data.is_some() && a.problem.is_none() {
        return Err(Error::invalid("--data needs --problem"));
    }
    ctx.ensure_out()?;
    let mut status = 0;
    for id in problems(a.problem) {
        let path = a.data.clone().unwrap_or_else(|| ctx.dataset_path(id, Role::Train));
        let ds = dataset::load_dataset(&path)?;
        if ds.meta.problem != id {
            return Err(Error::invalid(format!("{} holds {} data, not {id}", path.display(), ds.meta.problem)));
        }
        let mut tc = ctx.config.train_config(id, ctx.seed);
        if let Some(v) = a.lr {
            tc.learning_rate = v;
        }
        if let Some(v) = a.max_epochs {
            tc.max_epochs = v;
        }
        if let Some(v) = a.loss_target {
            tc.loss_target = v;
        }
        if a.no_standardize {
            tc.standardize_inputs = false;
        }
        let arch = default_architecture(id);
        let model = mlp::init_model(&arch, &mlp::regression_activations(&arch), tc.rng_seed)?;
        let (inputs, targets) = (ds.inputs(), ds.targets());
        let (model, history) = mlp::train(model, &inputs, &targets, &tc)?;
        let model_path = ctx.model_path(id);
        mlp::save_model(&model, &model_path)?;
        let loss_path = ctx.path(&format!("{}_loss.csv", short_name(id)));
        let mut f = create(&loss_path)?;
        writeln!(f, "epoch,loss")?;
        for (e, l) in history.iter().enumerate() {
            writeln!(f, "{},{l:.16e}", e + 1)?;
        }
        f.flush()?;
        let final_loss = *history.last().expect("at least one epoch");
        let metrics = mlp::evaluate(&model, &inputs, &targets)?;
        writeln!(
            w,
            "{}: epochs {} L_train {final_loss:.3e} R2_train {} -> {}",
            short_name(id),
            history.len(),
            fmt_r2(&metrics.r2),
            model_path.display()
        )?;
        if final_loss >= tc.loss_target {
            writeln!(w, "  loss target {:e} not reached within {} epochs", tc.loss_target, tc.max_epochs)?;
            status = 1;
        }
    }
    Ok(status)
}

fn fmt_r2(r2: &[f64]) -> String {
    r2.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(",")
}

fn cmd_eval<W: Write>(ctx: &Context, a: &EvalArgs, w: &mut W) -> Result<u8> {
    if (a.model.is_some() || a.data.is_some()) && a.problem.is_none() {
        return Err(Error::invalid("--model/--data need --problem"));
    }
    ctx.ensure_out()?;
    for id in problems(a.problem) {
        let model = mlp::load_model(&a.model.clone().unwrap_or_else(|| ctx.model_path(id)))?;
        let ds = dataset::load_dataset(&a.data.clone().unwrap_or_else(|| ctx.dataset_path(id, Role::Test)))?;
        if model.input_dim() != ds.n_inputs() || model.output_dim() != ds.n_targets() {
            return Err(Error::invalid("model and dataset dimensions differ"));
        }
        let (inputs, targets) = (ds.inputs(), ds.targets());
        let predictions = model.forward_batch(&inputs)?;
        let metrics = mlp::evaluate(&model, &inputs, &targets)?;
        let scatter = ctx.path(&format!("{}_scatter.csv", short_name(id)));
        let mut f = create(&scatter)?;
        let header: Vec<String> = if ds.n_targets() == 1 {
            vec!["expected".into(), "estimated".into()]
        } else {
            (1..=ds.n_targets()).flat_map(|k| [format!("expected_{k}"), format!("estimated_{k}")]).collect()
        };
        writeln!(f, "{}", header.join(","))?;
        for (p, t) in predictions.iter().zip(&targets) {
            let row: Vec<String> = t.iter().zip(p).flat_map(|(e, q)| [format!("{e:.16e}"), format!("{q:.16e}")]).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        writeln!(
            w,
            "{} {}: n {} MSE {:.3e} R2 {} -> {}",
            short_name(id),
            ds.meta.role,
            ds.len(),
            metrics.mse,
            fmt_r2(&metrics.r2),
            scatter.display()
        )?;
    }
    Ok(0)
}

fn cmd_estimate<W: Write>(a: &EstimateArgs, w: &mut W) -> Result<u8> {
    let model: MlpModel = mlp::load_model(&a.model)?;
    if a.readings.len() != model.input_dim() {
        return Err(Error::invalid(format!(
            "model expects {} readings, got {}",
            model.input_dim(),
            a.readings.len()
        )));
    }
    for k in model.forward(&a.readings)? {
        writeln!(w, "{k:.16e}")?;
    }
    Ok(0)
}
