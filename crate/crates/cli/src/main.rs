use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hedgebet::harness::{
    run_experiment, run_screening, run_shift_experiment, synthetic_matrix, with_workers,
    write_decisions_csv, write_episodes_csv, ExperimentConfig, ExperimentOutput, ScreeningConfig,
    ScreeningHedge, SyntheticScreening, Truth, DEFAULT_SEED,
};
use hedgebet::ingest::{
    prepare_screening, read_sequences_csv, transform_to_uniform, write_sequences_csv,
    ExpressionMatrix, GroupLabels, TransformOptions, DEFAULT_LAMBDA_GRID,
};
use hedgebet::portfolio::fmt17;
use hedgebet::pricing::{
    black_scholes_call, black_scholes_put, lattice_price, mc_price_lattice, solve_hedge_strike,
    Contract, ContractKind, LatticeModel, PriceEstimate, PricingMethod,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "hedgebet",
    version,
    about = "Testing by betting with hedged wealth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price a European call or put on a wealth lattice.
    Price(PriceArgs),
    /// Run a Bernoulli betting experiment.
    Simulate(RunArgs),
    /// Run an experiment whose truth changes midway.
    Shift(ShiftArgs),
    /// Screen genes with the two-sided hedged test.
    Screen(ScreenArgs),
    /// Solve for put strikes that guarantee a wealth floor.
    HedgeSolve(HedgeSolveArgs),
    /// Turn an expression matrix into per-gene test sequences.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Seed override; defaults to the config's seed or 20240229.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Lattice,
    Mc,
    Bs,
}

#[derive(Args)]
struct PriceArgs {
    /// `u=1.5,d=0.5[,r=0]` for lattice and mc, `sigma=1` for bs.
    #[arg(long)]
    model: String,
    /// `call,S=1.25,tau=3` or `put,S=0.25,tau=3`.
    #[arg(long)]
    contract: String,
    #[arg(long, value_enum, default_value = "lattice")]
    method: Method,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replication count override.
    #[arg(long)]
    replications: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ShiftArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Last step drawn from the pre-shift truth.
    #[arg(long)]
    change_point: Option<usize>,
    /// Success probability before the change point.
    #[arg(long)]
    before: Option<f64>,
}

#[derive(Args)]
struct ScreenArgs {
    /// Screening config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gene sequences written by `ingest`.
    #[arg(long, conflicts_with = "synthetic_genes")]
    input: Option<PathBuf>,
    /// Screen a simulated matrix with this many genes instead of a file.
    #[arg(long)]
    synthetic_genes: Option<usize>,
    #[arg(long, default_value_t = 0.0, requires = "synthetic_genes")]
    shifted_fraction: f64,
    #[arg(long, default_value_t = 0.65, requires = "synthetic_genes")]
    shifted_mean: f64,
    /// Buy the protective put even if the config does not.
    #[arg(long)]
    hedge: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct HedgeSolveArgs {
    #[arg(long)]
    floor: f64,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value = "u=1.5,d=0.5")]
    model: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IngestArgs {
    /// Tab- or comma-separated matrix, genes in rows.
    #[arg(long)]
    input: PathBuf,
    /// Prefix of normal-sample labels.
    #[arg(long, default_value = "normal")]
    normal_label: String,
    /// Prefix of tumor-sample labels.
    #[arg(long, default_value = "tumor")]
    tumor_label: String,
    /// Take logs before standardising.
    #[arg(long)]
    log: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Solver(String),
}

impl From<hedgebet::Error> for CliError {
    fn from(e: hedgebet::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Res<()> {
    match command {
        Command::Price(a) => price(a),
        Command::Simulate(a) => simulate(a),
        Command::Shift(a) => shift(a),
        Command::Screen(a) => screen(a),
        Command::HedgeSolve(a) => hedge_solve(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn open_output(common: &Common) -> Res<Box<dyn Write>> {
    Ok(match &common.output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", path.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(common: &Common, value: &Value) -> Res<()> {
    let mut out = open_output(common)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn to_json(v: &impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("library types serialise")
}

fn compact(v: &Value) -> String {
    v.to_string()
}

fn parse_pairs(spec: &str, what: &str) -> Res<Vec<(String, String)>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Config(format!("{what}: expected key=value, got {kv:?}")))
        })
        .collect()
}

fn number(value: &str, key: &str) -> Res<f64> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key} = {value:?} is not a number")))
}

struct ModelSpec {
    up: Option<f64>,
    down: Option<f64>,
    rate: f64,
    sigma: Option<f64>,
}

fn parse_model(spec: &str) -> Res<ModelSpec> {
    let mut m = ModelSpec {
        up: None,
        down: None,
        rate: 0.0,
        sigma: None,
    };
    for (k, v) in parse_pairs(spec, "model")? {
        match k.as_str() {
            "u" => m.up = Some(number(&v, "u")?),
            "d" => m.down = Some(number(&v, "d")?),
            "r" => m.rate = number(&v, "r")?,
            "sigma" => m.sigma = Some(number(&v, "sigma")?),
            other => return Err(CliError::Config(format!("unknown model key {other:?}"))),
        }
    }
    Ok(m)
}

fn lattice(m: &ModelSpec, steps: usize) -> Res<LatticeModel> {
    match (m.up, m.down) {
        (Some(u), Some(d)) => Ok(LatticeModel::with_rate(u, d, steps, m.rate)?),
        _ => Err(CliError::Config("model needs u= and d=".into())),
    }
}

fn parse_contract(spec: &str) -> Res<(ContractKind, f64, usize)> {
    let (kind, rest) = spec.split_once(',').unwrap_or((spec, ""));
    let kind = match kind.trim() {
        "call" => ContractKind::EuropeanCall,
        "put" => ContractKind::EuropeanPut,
        other => {
            return Err(CliError::Config(format!(
                "contract kind {other:?} is not call or put"
            )))
        }
    };
    let (mut strike, mut tau) = (None, None);
    for (k, v) in parse_pairs(rest, "contract")? {
        match k.as_str() {
            "S" | "strike" => strike = Some(number(&v, "S")?),
            "tau" | "expiry" => {
                tau =
                    Some(v.parse().map_err(|_| {
                        CliError::Config(format!("tau = {v:?} is not a whole number"))
                    })?)
            }
            other => return Err(CliError::Config(format!("unknown contract key {other:?}"))),
        }
    }
    match (strike, tau) {
        (Some(s), Some(t)) => Ok((kind, s, t)),
        _ => Err(CliError::Config("contract needs S= and tau=".into())),
    }
}

fn price(a: PriceArgs) -> Res<()> {
    let model = parse_model(&a.model)?;
    let (kind, strike, tau) = parse_contract(&a.contract)?;
    let contract = Contract::vanilla(kind, strike, tau)?;
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let estimate = match a.method {
        Method::Lattice => lattice_price(&lattice(&model, tau)?, &contract, 1.0)?,
        Method::Mc => with_workers(a.common.workers, || {
            lattice(&model, tau).and_then(|m| Ok(mc_price_lattice(&m, &contract, a.samples, seed)?))
        })??,
        Method::Bs => {
            let sigma = model
                .sigma
                .ok_or_else(|| CliError::Config("bs needs sigma= in --model".into()))?;
            let value = match kind {
                ContractKind::EuropeanCall => black_scholes_call(1.0, strike, sigma, tau as f64)?,
                _ => black_scholes_put(1.0, strike, sigma, tau as f64)?,
            };
            PriceEstimate {
                value,
                std_error: 0.0,
                method: PricingMethod::BlackScholes,
            }
        }
    };
    let config = json!({
        "model": {"up": model.up, "down": model.down, "rate": model.rate, "sigma": model.sigma},
        "contract": {"kind": to_json(&kind), "strike": strike, "expiry": tau},
        "method": to_json(&estimate.method),
        "samples": matches!(a.method, Method::Mc).then_some(a.samples),
    });
    match a.common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            &a.common,
            &json!({
                "command": "price",
                "seed": seed,
                "config": config,
                "value": estimate.value,
                "std_error": estimate.std_error,
            }),
        ),
        Format::Csv => {
            let mut out = open_output(&a.common)?;
            writeln!(out, "# command = price")?;
            writeln!(out, "# seed = {seed}")?;
            writeln!(out, "# config = {}", compact(&config))?;
            writeln!(out, "value,std_error")?;
            writeln!(
                out,
                "{},{}",
                fmt17(estimate.value),
                fmt17(estimate.std_error)
            )?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_experiment(args: &RunArgs) -> Res<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.replications {
        cfg.replications = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_experiment(command: &str, common: &Common, out: &ExperimentOutput) -> Res<()> {
    match common.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let mut v = to_json(out);
            v["command"] = json!(command);
            v["seed"] = json!(out.config.seed);
            write_json(common, &v)
        }
        Format::Csv => {
            let comments = vec![
                format!("command = {command}"),
                format!("seed = {}", out.config.seed),
                format!("config = {}", compact(&to_json(&out.config))),
                format!("hedge = {}", compact(&to_json(&out.hedge))),
                format!("report = {}", compact(&to_json(&out.report))),
            ];
            let mut w = open_output(common)?;
            write_episodes_csv(&out.episodes, &comments, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn simulate(a: RunArgs) -> Res<()> {
    let cfg = load_experiment(&a)?;
    let out = with_workers(a.common.workers, || run_experiment(&cfg))??;
    emit_experiment("simulate", &a.common, &out)
}

fn shift(a: ShiftArgs) -> Res<()> {
    let cfg = load_experiment(&a.run)?;
    let (cfg_before, cfg_point) = match cfg.truth {
        Truth::ChangePoint {
            before,
            change_point,
            ..
        } => (Some(before), Some(change_point)),
        Truth::Bernoulli { .. } => (None, None),
    };
    let change_point = a.change_point.or(cfg_point).ok_or_else(|| {
        CliError::Config("shift needs --change-point or change_point in the config".into())
    })?;
    let before = a.before.or(cfg_before).unwrap_or(cfg.hypothesis.null_param);
    let out = with_workers(a.run.common.workers, || {
        run_shift_experiment(&cfg, before, change_point)
    })??;
    emit_experiment("shift", &a.run.common, &out)
}

fn screen(a: ScreenArgs) -> Res<()> {
    let mut cfg = match &a.config {
        Some(path) => ScreeningConfig::from_path(path)?,
        None => ScreeningConfig::default(),
    };
    if a.hedge && cfg.hedge.is_none() {
        cfg.hedge = Some(ScreeningHedge::default());
    }
    let seed = a
        .common
        .seed
        .or(cfg.hedge.map(|h| h.seed))
        .unwrap_or(DEFAULT_SEED);
    if let Some(h) = cfg.hedge.as_mut() {
        h.seed = seed;
    }
    let source = match (&a.input, a.synthetic_genes) {
        (Some(path), _) => json!({"input": path.display().to_string()}),
        (None, Some(genes)) => json!({"synthetic": to_json(&SyntheticScreening {
            genes,
            shifted_fraction: a.shifted_fraction,
            shifted_mean: a.shifted_mean,
            ..Default::default()
        })}),
        (None, None) => {
            return Err(CliError::Config(
                "screen needs --input or --synthetic-genes".into(),
            ))
        }
    };
    let output = with_workers(a.common.workers, || -> Res<_> {
        let genes = match (&a.input, a.synthetic_genes) {
            (Some(path), _) => {
                let file = File::open(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                read_sequences_csv(file)?
            }
            (None, Some(genes)) => {
                let spec = SyntheticScreening {
                    genes,
                    shifted_fraction: a.shifted_fraction,
                    shifted_mean: a.shifted_mean,
                    ..Default::default()
                };
                let (matrix, _) = synthetic_matrix(&spec, seed);
                prepare_screening(&matrix, &cfg.lambda_grid)?
            }
            (None, None) => unreachable!(),
        };
        Ok(run_screening(&genes, &cfg)?)
    })??;
    match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let mut v = to_json(&output);
            v["command"] = json!("screen");
            v["seed"] = json!(seed);
            v["source"] = source;
            write_json(&a.common, &v)
        }
        Format::Csv => {
            let comments = vec![
                "command = screen".to_string(),
                format!("seed = {seed}"),
                format!("source = {}", compact(&source)),
                format!("config = {}", compact(&to_json(&output.config))),
                format!("hedges = {}", compact(&to_json(&output.hedges))),
                format!("report = {}", compact(&to_json(&output.report))),
            ];
            let mut w = open_output(&a.common)?;
            write_decisions_csv(&output.genes, &comments, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn hedge_solve(a: HedgeSolveArgs) -> Res<()> {
    let spec = parse_model(&a.model)?;
    let model = lattice(&spec, a.horizon)?;
    let roots = solve_hedge_strike(&model, a.floor, a.horizon).map_err(|e| match e {
        hedgebet::Error::NoRoot { .. } => CliError::Solver(format!(
            "no put strike guarantees floor {} over {} steps ({e})",
            a.floor, a.horizon
        )),
        other => other.into(),
    })?;
    let premiums = roots
        .iter()
        .map(|&s| Ok(lattice_price(&model, &Contract::put(s, a.horizon)?, 1.0)?.value))
        .collect::<Res<Vec<f64>>>()?;
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let config = json!({
        "floor": a.floor,
        "horizon": a.horizon,
        "model": {"up": model.up(), "down": model.down(), "rate": model.rate()},
    });
    match a.common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            &a.common,
            &json!({
                "command": "hedge-solve",
                "seed": seed,
                "config": config,
                "roots": roots,
                "premiums": premiums,
            }),
        ),
        Format::Csv => {
            let mut out = open_output(&a.common)?;
            writeln!(out, "# command = hedge-solve")?;
            writeln!(out, "# seed = {seed}")?;
            writeln!(out, "# config = {}", compact(&config))?;
            writeln!(out, "strike,premium")?;
            for (s, c) in roots.iter().zip(&premiums) {
                writeln!(out, "{},{}", fmt17(*s), fmt17(*c))?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn ingest(a: IngestArgs) -> Res<()> {
    let labels = GroupLabels {
        normal: a.normal_label.clone(),
        tumor: a.tumor_label.clone(),
    };
    let options = TransformOptions { log: a.log };
    let (transformed, genes) = with_workers(a.common.workers, || -> Res<_> {
        let matrix = ExpressionMatrix::from_path(&a.input, &labels)?;
        let transformed = transform_to_uniform(&matrix, options)?;
        let genes = prepare_screening(&transformed, &DEFAULT_LAMBDA_GRID)?;
        Ok((transformed, genes))
    })??;
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let config = json!({
        "input": a.input.display().to_string(),
        "normal_label": labels.normal,
        "tumor_label": labels.tumor,
        "log": a.log,
        "lambda_grid": DEFAULT_LAMBDA_GRID,
    });
    match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(
            &a.common,
            &json!({
                "command": "ingest",
                "seed": seed,
                "config": config,
                "skipped": transformed.skipped,
                "genes": to_json(&genes),
            }),
        ),
        Format::Csv => {
            let mut out = open_output(&a.common)?;
            writeln!(out, "# command = ingest")?;
            writeln!(out, "# seed = {seed}")?;
            writeln!(out, "# config = {}", compact(&config))?;
            writeln!(out, "# skipped = {}", compact(&json!(transformed.skipped)))?;
            write_sequences_csv(&genes, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}
