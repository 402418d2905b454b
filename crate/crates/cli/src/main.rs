#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dp2pub_core::eval::{alpha_way_avg_with, AlphaWayOptions, DEFAULT_SUBSET_CAP};
use dp2pub_core::seed::{Seeder, Stage};
use dp2pub_core::{
    build_dp_network, build_greedy_network, default_alphas, kl_network_divergence, load_csv, publish, run_sweep,
    save_csv, synth, AttributeSchema, BudgetRule, EncodedDataset, Error, Mode, PipelineConfig, SweepConfig,
};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "dp2pub",
    version,
    about = "Differentially private publication of categorical tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Publish a perturbed copy of a CSV table and write a JSON report.
    Publish(PublishArgs),
    /// Repeat publication over a grid of budgets and tabulate α-way AVD.
    Sweep(SweepArgs),
    /// Learn and print the Bayesian network used for clustering.
    Network(NetworkArgs),
    /// Compare α-way marginals of an original and a published table.
    Evaluate(EvaluateArgs),
    /// Write a synthetic binary table with planted pairwise dependencies.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Trusted,
    Local,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BudgetRuleArg {
    InverseImportance,
    Proportional,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON file with pipeline settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON schema fixing attribute and category order.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Fraction of epsilon spent on network learning.
    #[arg(long)]
    split: Option<f64>,
    /// Maximum number of parents per attribute.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    budget_rule: Option<BudgetRuleArg>,
}

#[derive(Debug, Args)]
struct PublishArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report path; defaults to `<output stem>.report.json` beside the output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Budget grid point; repeat for several.
    #[arg(long)]
    epsilon: Vec<f64>,
    /// Marginal order; repeat for several.
    #[arg(long)]
    alpha: Vec<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// CSV table of (epsilon, alpha, mean, sd).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Full sweep report as JSON; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NetworkArgs {
    #[command(flatten)]
    common: Common,
    /// Total budget; the network spends `split * epsilon`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Pick the highest-information candidate each round without noise.
    #[arg(long)]
    greedy: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    published: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Marginal order; repeat for several. Defaults depend on the schema.
    #[arg(long)]
    alpha: Vec<usize>,
    /// Seed for subset sampling when a marginal order has too many subsets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    attributes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("ERROR:usage:{first}");
            eprint!("{rendered}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR:{}:{}", e.category(), e);
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Publish(args) => cmd_publish(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Network(args) => cmd_network(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Generate(args) => cmd_generate(args),
    }
}

fn merged_config(common: &Common, epsilon: Option<f64>) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::from_json_str(&read_text(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &common.input {
        config.input = Some(p.clone());
    }
    if let Some(m) = common.mode {
        config.mode = match m {
            ModeArg::Trusted => Mode::Trusted,
            ModeArg::Local => Mode::Local,
        };
    }
    if let Some(r) = common.budget_rule {
        config.budget_rule = match r {
            BudgetRuleArg::InverseImportance => BudgetRule::InverseImportance,
            BudgetRuleArg::Proportional => BudgetRule::Proportional,
        };
    }
    if let Some(v) = epsilon {
        config.epsilon = v;
    }
    if let Some(v) = common.split {
        config.split = v;
    }
    if let Some(v) = common.degree {
        config.degree = v;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    Ok(config)
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_schema(path: Option<&Path>) -> Result<Option<AttributeSchema>, Error> {
    path.map(AttributeSchema::from_json_file).transpose()
}

fn load_input(config: &PipelineConfig, schema: Option<&Path>) -> Result<EncodedDataset, Error> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("an input CSV is required (--input)".into()))?;
    load_csv(input, load_schema(schema)?.as_ref())
}

fn default_report_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}.report.json"))
}

fn cmd_publish(args: PublishArgs) -> Result<(), Error> {
    let mut config = merged_config(&args.common, args.epsilon)?;
    if let Some(p) = args.output {
        config.output = Some(p);
    }
    if let Some(p) = args.report {
        config.report = Some(p);
    }
    let output = config
        .output
        .clone()
        .ok_or_else(|| Error::InvalidParameter("an output path is required (--output)".into()))?;
    config.report.get_or_insert_with(|| default_report_path(&output));
    config.validate()?;

    let data = load_input(&config, args.common.schema.as_deref())?;
    let (published, report) = publish(&data, &config)?;
    let report = if args.timing { report } else { report.without_timing() };
    save_csv(&output, &published)?;
    let report_path = config.report.as_ref().expect("report path set above");
    write_text(report_path, &(report.to_json_string() + "\n"))
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let mut config = merged_config(&args.common, None)?;
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if !args.alpha.is_empty() {
        config.alpha = args.alpha;
    }
    config.validate()?;
    let epsilons = if args.epsilon.is_empty() {
        vec![config.epsilon]
    } else {
        args.epsilon
    };
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {bad}")));
    }

    let data = load_input(&config, args.common.schema.as_deref())?;
    let alphas = if config.alpha.is_empty() {
        default_alphas(data.schema())
    } else {
        config.alpha.clone()
    };
    let report = run_sweep(&data, &SweepConfig::from_pipeline(&config, epsilons, alphas))?;
    if let Some(path) = &args.output {
        write_text(path, &report.to_csv_string())?;
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.report {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_network(args: NetworkArgs) -> Result<(), Error> {
    let config = merged_config(&args.common, args.epsilon)?;
    config.validate()?;
    let data = load_input(&config, args.common.schema.as_deref())?;
    let (net, eps1) = if args.greedy {
        (build_greedy_network(&data, config.degree)?, None)
    } else {
        let eps1 = config.split * config.epsilon;
        let mut rng = Seeder::new(config.seed).rng(Stage::Network, 0);
        (build_dp_network(&data, config.degree, eps1, &mut rng)?, Some(eps1))
    };
    let out = json!({
        "degree": config.degree,
        "eps1": eps1,
        "network": net.to_named(data.schema()),
        "kl": kl_network_divergence(&data, &net)?,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let schema = load_schema(args.schema.as_deref())?;
    let original = load_csv(&args.original, schema.as_ref())?;
    let published = load_csv(&args.published, Some(original.schema()))?;
    let alphas = if args.alpha.is_empty() {
        default_alphas(original.schema())
    } else {
        args.alpha
    };
    let options = AlphaWayOptions {
        subset_cap: DEFAULT_SUBSET_CAP,
        sample_beyond_cap: true,
        seed: args.seed,
    };
    let results = alphas
        .iter()
        .map(|&a| alpha_way_avg_with(&original, &published, a, &options))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&json!({ "results": results }))?);
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    if args.rows == 0 || args.attributes < 2 {
        return Err(Error::InvalidParameter(
            "need at least one row and two attributes".into(),
        ));
    }
    save_csv(
        &args.output,
        &synth::planted_pairs(args.rows, args.attributes, args.seed),
    )
}
