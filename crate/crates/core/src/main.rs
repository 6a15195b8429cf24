use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flevr::data::{load_csv, DEFAULT_NA_TOKEN};
use flevr::learners::StackConfig;
use flevr::missingness::{mice_impute, pool_rubin, write_imputations, MiceOptions};
use flevr::sim::{run_experiment, ExperimentConfig, ModeSpec};
use flevr::{estimate_spvim, select, Dataset, Error, ErrorControl, Measure, PooledEstimate, SelectionConfig};

#[derive(Parser)]
#[command(name = "flevr", version, about = "Intrinsic variable selection with Shapley importance")]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate importance, test and select features with error-rate control.
    Select(SelectArgs),
    /// Estimate Shapley importance with standard errors and confidence intervals.
    Spvim(SpvimArgs),
    /// Multiply impute a CSV and write one file per imputation.
    Impute(ImputeArgs),
    /// Run a simulation experiment over the built-in scenarios.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the outcome column.
    #[arg(long)]
    outcome: String,
    /// Token marking a missing cell.
    #[arg(long, default_value = DEFAULT_NA_TOKEN)]
    na: String,
    #[arg(long, env = "FLEVR_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EstimationArgs {
    /// Predictiveness measure (default: AUC for binary outcomes, R² otherwise).
    #[arg(long)]
    measure: Option<Measure>,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Number of sampled subsets (default: exhaustive for p ≤ 12, else 48p).
    #[arg(long)]
    budget: Option<usize>,
    /// JSON file describing the learner library.
    #[arg(long)]
    learners: Option<PathBuf>,
    /// Imputations when the data have missing values.
    #[arg(long = "imputations", short = 'M', default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    mice_iterations: usize,
    #[arg(long, default_value_t = 5)]
    donors: usize,
}

impl EstimationArgs {
    fn mice(&self) -> MiceOptions {
        MiceOptions {
            m: self.m,
            max_iter: self.mice_iterations,
            donors: self.donors,
        }
    }

    fn learners(&self, data: &Dataset) -> Result<StackConfig, Error> {
        match &self.learners {
            None => Ok(StackConfig::default_for(data.outcome_kind())),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                let cfg: StackConfig = serde_json::from_str(&text)?;
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gfwer,
    Pfp,
    Fdr,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    estimation: EstimationArgs,
    /// Path of the JSON result.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Gfwer)]
    mode: ModeArg,
    /// gFWER tolerance: number of false selections allowed.
    #[arg(long)]
    k: Option<usize>,
    /// PFP level.
    #[arg(long)]
    q: Option<f64>,
    /// FDR level.
    #[arg(long)]
    f: Option<f64>,
}

#[derive(Args)]
struct SpvimArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    estimation: EstimationArgs,
    /// Path of the JSON result.
    #[arg(long)]
    output: PathBuf,
    /// Confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long = "imputations", short = 'M', default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    donors: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment description (JSON). Flags below override or replace it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Scenario id, 1 to 8.
    #[arg(long)]
    scenario: Option<u8>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    missing_prop: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    /// Skip test-set evaluation.
    #[arg(long)]
    no_evaluate: bool,
    #[arg(long, env = "FLEVR_SEED")]
    seed: Option<u64>,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn control(mode: ModeArg, k: Option<usize>, q: Option<f64>, f: Option<f64>) -> Result<ErrorControl, Error> {
    let need = |flag: &str| Error::InvalidArgument(format!("--mode requires --{flag}"));
    Ok(match mode {
        ModeArg::Gfwer => ErrorControl::Gfwer { k: k.ok_or_else(|| need("k"))? },
        ModeArg::Pfp => ErrorControl::Pfp { q: q.ok_or_else(|| need("q"))? },
        ModeArg::Fdr => ErrorControl::Fdr { f: f.ok_or_else(|| need("f"))? },
    })
}

fn load(input: &InputArgs) -> Result<Dataset, Error> {
    load_csv(&input.input, &input.outcome, &input.na)
}

fn cmd_select(args: &SelectArgs) -> Result<(), Error> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let control = control(args.mode, args.k, args.q, args.f)?;
    let data = load(&args.input)?;
    let config = SelectionConfig {
        measure: args.estimation.measure,
        learners: args.estimation.learners(&data)?,
        folds: args.estimation.folds,
        budget: args.estimation.budget,
        mice: args.estimation.mice(),
        alpha: args.alpha,
        control,
    };
    let run = select(&data, &config, args.input.seed)?;
    let report = run.report(data.feature_names(), args.input.seed);
    write_json(&report, &args.output)?;

    println!("selected ({}): {:?}", report.final_set.len(), report.selected_names);
    println!("{:>5}  {:<20} {:>10} {:>10}", "index", "feature", "psi", "p_adj");
    for f in &report.features {
        println!("{:>5}  {:<20} {:>10.4} {:>10.4}", f.index, f.name, f.psi, f.p_adjusted);
    }
    Ok(())
}

#[derive(Serialize)]
struct SpvimFeature {
    index: usize,
    name: String,
    psi: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
}

#[derive(Serialize)]
struct SpvimReport {
    seed: u64,
    measure: Measure,
    level: f64,
    imputations: usize,
    exhaustive: bool,
    v_null: f64,
    v_full: f64,
    features: Vec<SpvimFeature>,
}

fn cmd_spvim(args: &SpvimArgs) -> Result<(), Error> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::InvalidArgument("--level must lie in (0, 1)".into()));
    }
    let data = load(&args.input)?;
    let seed = args.input.seed;
    let options = flevr::SpvimOptions {
        measure: args.estimation.measure,
        learners: args.estimation.learners(&data)?,
        folds: args.estimation.folds,
        budget: args.estimation.budget,
    };
    let (estimates, imputations) = if data.is_complete() {
        (vec![estimate_spvim(&data, &options, seed)?], 0)
    } else {
        let imps = mice_impute(&data, &args.estimation.mice(), seed)?;
        let est = imps
            .iter()
            .map(|d| estimate_spvim(d, &options, seed))
            .collect::<Result<Vec<_>, _>>()?;
        (est, imps.len())
    };
    let pooled = if estimates.len() == 1 {
        PooledEstimate::from_single(&estimates[0])
    } else {
        pool_rubin(&estimates)?
    };
    let z = flevr::stats::normal_quantile(0.5 + args.level / 2.0);
    let features = (0..pooled.p())
        .map(|j| {
            let se = pooled.total_var[j].sqrt();
            SpvimFeature {
                index: j + 1,
                name: data.feature_names()[j].clone(),
                psi: pooled.psi_bar[j],
                se,
                ci_lower: pooled.psi_bar[j] - z * se,
                ci_upper: pooled.psi_bar[j] + z * se,
            }
        })
        .collect::<Vec<_>>();
    let mean = |f: fn(&flevr::SpvimEstimate) -> f64| estimates.iter().map(f).sum::<f64>() / estimates.len() as f64;
    let report = SpvimReport {
        seed,
        measure: estimates[0].measure,
        level: args.level,
        imputations,
        exhaustive: estimates[0].exhaustive,
        v_null: mean(|e| e.v_null),
        v_full: mean(|e| e.v_full),
        features,
    };
    write_json(&report, &args.output)?;
    println!("{:>5}  {:<20} {:>10} {:>10}", "index", "feature", "psi", "se");
    for f in &report.features {
        println!("{:>5}  {:<20} {:>10.4} {:>10.4}", f.index, f.name, f.psi, f.se);
    }
    Ok(())
}

fn cmd_impute(args: &ImputeArgs) -> Result<(), Error> {
    let data = load(&args.input)?;
    let options = MiceOptions {
        m: args.m,
        max_iter: args.iterations,
        donors: args.donors,
    };
    let imps = mice_impute(&data, &options, args.input.seed)?;
    let manifest = write_imputations(&imps, &args.output, &options, args.input.seed)?;
    println!(
        "wrote {} imputations ({} missing cells) to {}",
        manifest.m,
        data.missing_count(),
        args.output.display()
    );
    Ok(())
}

fn simulate_config(args: &SimulateArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str::<ExperimentConfig>(&text)?
        }
        None => {
            let scenario = args
                .scenario
                .ok_or_else(|| Error::InvalidArgument("simulate needs --config or --scenario".into()))?;
            serde_json::from_value(serde_json::json!({
                "scenario": scenario,
                "n": [],
                "modes": [],
                "replicates": 0,
            }))?
        }
    };
    if let Some(s) = args.scenario {
        cfg.scenario = Some(s);
        cfg.custom_scenario = None;
    }
    if !args.n.is_empty() {
        cfg.n = args.n.clone();
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(m) = args.missing_prop {
        cfg.missing_prop = m;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(mode) = args.mode {
        cfg.modes = vec![match mode {
            ModeArg::Gfwer => ModeSpec::Gfwer { k: args.k },
            ModeArg::Pfp => ModeSpec::Pfp { q: args.q },
            ModeArg::Fdr => ModeSpec::Fdr {
                f: args.f.ok_or_else(|| Error::InvalidArgument("--mode fdr requires --f".into()))?,
            },
        }];
    }
    if args.no_evaluate {
        cfg.evaluate = false;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.scenario_spec()?;
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let cfg = simulate_config(args)?;
    let summary = run_experiment(&cfg, &args.output)?;
    write_json(&cfg, &args.output.join("config.json"))?;
    println!(
        "{} rows over {} replicates written to {}",
        summary.rows.len(),
        cfg.replicates * cfg.n.len(),
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Spvim(a) => cmd_spvim(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
