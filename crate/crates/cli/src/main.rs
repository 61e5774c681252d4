mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use cone_infer_core::calibration::{calibration_study, CalibrationConfig};
use cone_infer_core::data::{load_dataset, make_basis, simulate_dataset, write_dataset, CsvSchema};
use cone_infer_core::qif::{fit_all, QifError, QifFit};
use cone_infer_core::testing::{
    power_table, run_test, McSettings, TestError, WeightRoute, TABLE1_B1, TABLE1_B2,
};
use cone_infer_core::weights::{
    geometric_constants, level_probabilities, weights_closed_form_d2, weights_monte_carlo,
    weights_tube, ChiBarWeights, LevelProbMethod, ManifoldGeometry, QuadratureConfig,
};
use config::{Config, WeightsCommandConfig};
use nalgebra::DMatrix;
use report::{inputs_digest, Phases, Report, Versions};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }
}

impl From<cone_infer_core::data::DataError> for CliError {
    fn from(e: cone_infer_core::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<QifError> for CliError {
    fn from(e: QifError) -> Self {
        match e {
            QifError::Data(d) => CliError::Data(d.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TestError> for CliError {
    fn from(e: TestError) -> Self {
        match e {
            TestError::Qif(QifError::Data(d)) => CliError::Data(d.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<cone_infer_core::weights::WeightsError> for CliError {
    fn from(e: cone_infer_core::weights::WeightsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<cone_infer_core::cone::ConeError> for CliError {
    fn from(e: cone_infer_core::cone::ConeError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Path to the JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// CSV dataset (subject, time, y, x1..xr).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Base seed for stochastic routes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (env CONE_INFER_JOBS).
    #[arg(long, env = "CONE_INFER_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    /// Significance level override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight route override.
    #[arg(long, value_parser = parse_route)]
    weights: Option<WeightRoute>,
}

fn parse_route(s: &str) -> Result<WeightRoute, String> {
    match s {
        "closed" => Ok(WeightRoute::Closed),
        "level" => Ok(WeightRoute::Level),
        "tube" => Ok(WeightRoute::Tube),
        "mc" => Ok(WeightRoute::Mc),
        "auto" => Ok(WeightRoute::Auto),
        other => Err(format!(
            "unknown route '{other}' (expected closed|level|tube|mc|auto)"
        )),
    }
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated noncentrality grid.
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    /// Critical value of the unrestricted test.
    #[arg(long)]
    b1: Option<f64>,
    /// Critical value of the restricted test.
    #[arg(long)]
    b2: Option<f64>,
    /// Degrees of freedom of the unrestricted test.
    #[arg(long)]
    df: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the three QIF estimators and report them.
    Fit(Common),
    /// Run the cone-constrained score test.
    Test(TestArgs),
    /// Compute chi-bar weights by a chosen route.
    Weights(Common),
    /// Local power table over a noncentrality grid.
    Power(PowerArgs),
    /// Generate a dataset or run the null-calibration study.
    Simulate(Common),
}

#[derive(Debug, Parser)]
#[command(name = "cone-infer", version, about = "Cone-constrained inference for longitudinal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = dispatch(cli);
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{payload}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(common) => run_command("fit", common, None, cmd_fit),
        Command::Test(args) => {
            let overrides = (args.alpha, args.weights);
            run_command("test", args.common, Some(overrides), cmd_test)
        }
        Command::Weights(common) => run_command("weights", common, None, cmd_weights),
        Command::Power(args) => {
            let overrides = (args.delta_grid.clone(), args.b1, args.b2, args.df);
            run_command("power", args.common, Some(overrides), cmd_power)
        }
        Command::Simulate(common) => run_command("simulate", common, None, cmd_simulate),
    }
}

struct Ctx<O> {
    config_bytes: Vec<u8>,
    config: Config,
    data_bytes: Option<Vec<u8>>,
    data_path: Option<PathBuf>,
    seed: u64,
    overrides: Option<O>,
}

fn run_command<O>(
    name: &str,
    common: Common,
    overrides: Option<O>,
    body: fn(&Ctx<O>) -> Result<serde_json::Value, CliError>,
) -> Result<(), CliError> {
    if let Some(jobs) = common.jobs {
        // ignore failure when a pool is already installed (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let mut phases = Phases::start();
    let config_bytes = std::fs::read(&common.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let config = Config::parse(&config_bytes)?;
    let data_bytes = match &common.data {
        Some(p) => Some(
            std::fs::read(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    if matches!(name, "fit" | "test") && data_bytes.is_none() {
        return Err(CliError::Config(format!("'{name}' requires --data")));
    }
    phases.mark_loaded();

    let ctx = Ctx {
        config_bytes,
        config,
        data_bytes,
        data_path: common.data.clone(),
        seed: common.seed,
        overrides,
    };
    let results = body(&ctx)?;
    let report = Report {
        command: name.to_string(),
        inputs_digest: inputs_digest(&ctx.config_bytes, ctx.data_bytes.as_deref()),
        seed: ctx.seed,
        results,
        versions: Versions::default(),
        timing: phases.finish(),
    };
    let rendered = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Numeric(format!("serialization: {e}")))?;
    match &common.out {
        Some(path) => std::fs::write(path, rendered.as_bytes())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => println!("{rendered}"),
    }
    Ok(())
}

fn load_ctx_dataset<O>(ctx: &Ctx<O>) -> Result<cone_infer_core::LongitudinalDataset, CliError> {
    let path = ctx
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::Config("missing --data".into()))?;
    let spec = ctx.config.hypothesis_spec()?;
    let schema = CsvSchema::standard(spec.r);
    Ok(load_dataset(path, &schema)?)
}

fn fit_payload(fit: &QifFit) -> serde_json::Value {
    let matrix_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    };
    json!({
        "gamma_hat": fit.gamma_hat.as_slice(),
        "gamma_tilde": fit.gamma_tilde.as_slice(),
        "gamma_bar": fit.gamma_bar.as_slice(),
        "q_values": {"unrestricted": fit.q_hat(), "cone": fit.q_tilde(), "null": fit.q_bar()},
        "j_hat": matrix_rows(&fit.j_hat),
        "cov_hat": matrix_rows(&fit.cov_hat),
        "convergence": fit.convergence,
    })
}

fn cmd_fit(ctx: &Ctx<()>) -> Result<serde_json::Value, CliError> {
    let data = load_ctx_dataset(ctx)?;
    let spec = ctx.config.hypothesis_spec()?;
    let basis = make_basis(ctx.config.basis_kind(), data.n_times())?;
    let fit = fit_all(
        &data,
        ctx.config.link(),
        &basis,
        &spec,
        &ctx.config.solver_options(),
    )?;
    Ok(fit_payload(&fit))
}

type TestOverrides = (Option<f64>, Option<WeightRoute>);

fn cmd_test(ctx: &Ctx<TestOverrides>) -> Result<serde_json::Value, CliError> {
    let (alpha_override, route_override) = ctx.overrides.unwrap_or((None, None));
    let data = load_ctx_dataset(ctx)?;
    let spec = ctx.config.hypothesis_spec()?;
    let basis = make_basis(ctx.config.basis_kind(), data.n_times())?;
    let alpha = alpha_override.or(ctx.config.alpha).unwrap_or(0.05);
    let route = route_override
        .or(ctx.config.weights_route)
        .unwrap_or(WeightRoute::Auto);
    let mc = match &ctx.config.mc {
        Some(m) => McSettings {
            replicates: m.replicates,
            seed: m.seed.unwrap_or(ctx.seed),
        },
        None => McSettings {
            seed: ctx.seed,
            ..McSettings::default()
        },
    };
    let result = run_test(
        &data,
        ctx.config.link(),
        &basis,
        &spec,
        alpha,
        route,
        &ctx.config.solver_options(),
        &mc,
    )?;
    let fit_json = result.fit.as_ref().map(fit_payload);
    let mut value = serde_json::to_value(&result)
        .map_err(|e| CliError::Numeric(format!("serialization: {e}")))?;
    value["fit"] = fit_json.unwrap_or(serde_json::Value::Null);
    Ok(value)
}

fn weight_report(
    weights: &ChiBarWeights,
    constants: Option<serde_json::Value>,
    convex: Option<bool>,
) -> serde_json::Value {
    json!({
        "d": weights.d,
        "source": weights.source,
        "weights": weights.weights,
        "stderr": weights.mc_stderr,
        "constants": constants,
        "critical_radius_convex": convex,
    })
}

fn cmd_weights(ctx: &Ctx<()>) -> Result<serde_json::Value, CliError> {
    let block = ctx
        .config
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Config("missing 'weights' block".into()))?;
    match block {
        WeightsCommandConfig::ClosedForm { phi } => {
            let w = weights_closed_form_d2(*phi)?;
            Ok(weight_report(&w, None, None))
        }
        WeightsCommandConfig::LevelProb {
            m,
            q_diag,
            method,
            replicates,
        } => {
            let diag = match q_diag {
                Some(v) => {
                    if v.len() != *m {
                        return Err(CliError::Config(format!(
                            "q_diag has {} entries for m = {m}",
                            v.len()
                        )));
                    }
                    v.clone()
                }
                None => vec![1.0; *m],
            };
            let q = DMatrix::from_fn(*m, *m, |i, j| if i == j { diag[i] } else { 0.0 });
            let method = (*method).map(LevelProbMethod::from).unwrap_or(if *m <= 4 {
                LevelProbMethod::ExactSmallM
            } else {
                LevelProbMethod::MonteCarlo
            });
            let w = level_probabilities(*m, &q, method, replicates.unwrap_or(1_000_000), ctx.seed)?;
            Ok(weight_report(&w, None, None))
        }
        WeightsCommandConfig::MonteCarlo { cone, replicates } => {
            let cone = cone.build()?;
            let w = weights_monte_carlo(&cone, replicates.unwrap_or(1_000_000), ctx.seed)?;
            Ok(weight_report(&w, None, None))
        }
        WeightsCommandConfig::Tube {
            cone,
            quadrature_nodes,
        } => {
            let cone = cone.build()?;
            let generators = cone.generators()?.to_vec();
            let geom = ManifoldGeometry::from_embedded_generators(&generators)?;
            let mut quad = QuadratureConfig::default();
            if let Some(n) = quadrature_nodes {
                quad.nodes = *n;
                quad.check_nodes = (n / 2).max(2);
            }
            let constants = geometric_constants(&geom, &quad)?;
            let w = weights_tube(&constants, geom.d())?;
            let constants_json = serde_json::to_value(&constants)
                .map_err(|e| CliError::Numeric(format!("serialization: {e}")))?;
            Ok(weight_report(&w, Some(constants_json), Some(true)))
        }
    }
}

type PowerOverrides = (Option<Vec<f64>>, Option<f64>, Option<f64>, Option<usize>);

fn cmd_power(ctx: &Ctx<PowerOverrides>) -> Result<serde_json::Value, CliError> {
    let (grid_o, b1_o, b2_o, df_o) = ctx.overrides.clone().unwrap_or((None, None, None, None));
    let block = ctx.config.power.as_ref();
    let grid = grid_o
        .or_else(|| block.and_then(|b| b.delta_grid.clone()))
        .unwrap_or_else(|| (0..=5).map(|k| k as f64).collect());
    let b1 = b1_o.or(block.and_then(|b| b.b1)).unwrap_or(TABLE1_B1);
    let b2 = b2_o.or(block.and_then(|b| b.b2)).unwrap_or(TABLE1_B2);
    let df = df_o.or(block.and_then(|b| b.df)).unwrap_or(2);
    let table = power_table(&grid, b1, b2, df)?;
    println!("{}", render_power_table(&table));
    serde_json::to_value(&table).map_err(|e| CliError::Numeric(format!("serialization: {e}")))
}

fn render_power_table(table: &cone_infer_core::testing::PowerTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<28}", "test \\ delta"));
    for d in &table.delta {
        out.push_str(&format!("{d:>9.3}"));
    }
    out.push('\n');
    let rows: [(&str, &Vec<f64>); 3] = [
        ("restricted lower bound", &table.restricted_lower),
        ("unrestricted exact", &table.unrestricted_exact),
        ("unrestricted lower bound", &table.unrestricted_lower),
    ];
    for (name, values) in rows {
        out.push_str(&format!("{name:<28}"));
        for v in values {
            out.push_str(&format!("{v:>9.3}"));
        }
        out.push('\n');
    }
    out
}

fn cmd_simulate(ctx: &Ctx<()>) -> Result<serde_json::Value, CliError> {
    let block = ctx
        .config
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::Config("missing 'simulation' block".into()))?;
    match &block.calibration {
        None => {
            let dataset = simulate_dataset(&block.spec, ctx.seed)?;
            let csv_path = block
                .csv_path
                .as_ref()
                .ok_or_else(|| CliError::Config("simulation without calibration needs 'csv_path'".into()))?;
            write_dataset(&dataset, std::path::Path::new(csv_path))?;
            Ok(json!({
                "written": csv_path,
                "n_subjects": dataset.n_subjects(),
                "n_times": dataset.n_times(),
                "n_covariates": dataset.n_covariates(),
            }))
        }
        Some(cal) => {
            if cal.replicates == 0 {
                return Err(CliError::Config("calibration replicates must be positive".into()));
            }
            let spec = ctx.config.hypothesis_spec()?;
            let basis = make_basis(ctx.config.basis_kind(), block.spec.n_times)?;
            let mut config = CalibrationConfig {
                replicates: cal.replicates,
                route: ctx.config.weights_route.unwrap_or(WeightRoute::Auto),
                ..CalibrationConfig::default()
            };
            if let Some(alphas) = &cal.alphas {
                config.alphas = alphas.clone();
            }
            if let Some(points) = &cal.tail_points {
                config.tail_points = points.clone();
            }
            let outcome = calibration_study(
                &block.spec,
                &basis,
                &spec,
                None,
                &config,
                &ctx.config.solver_options(),
                ctx.seed,
            )?;
            serde_json::to_value(&outcome)
                .map_err(|e| CliError::Numeric(format!("serialization: {e}")))
        }
    }
}

