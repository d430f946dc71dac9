use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catenc::data::{ColumnSchema, Dataset};
use catenc::encoders::{EncoderSpec, EncodingMatrix, FittedEncoder, Method, UnseenPolicy};
use catenc::error::{Error, ErrorClass};
use catenc::eval::{run_benchmark, BenchConfig, DataSource, LearnerK, MethodEntry};
use catenc::oracle::{oracle_sweep, SweepConfig};
use catenc::par::Execution;
use catenc::sim::{simulate, Setup, SimConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "catenc",
    version,
    about = "Sufficient-representation encoders for categorical variables"
)]
struct Cli {
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit an encoder (or load one) and write the encoded dataset.
    Encode(EncodeArgs),
    /// Check the sufficiency identities on random discrete worlds.
    OracleCheck(OracleArgs),
    /// Compare encoders against one-hot coding by cross-validation.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_setup)]
    setup: Setup,
    #[arg(long)]
    n: usize,
    /// Number of latent levels.
    #[arg(long)]
    latent: usize,
    /// Number of categories.
    #[arg(long)]
    groups: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.9)]
    p_assign: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long)]
    shared_support: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write each row's latent level to this CSV.
    #[arg(long)]
    latent_out: Option<PathBuf>,
    /// Also write the drawn parameters to this JSON file.
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SchemaArgs {
    /// TOML file mapping column names to roles.
    #[arg(long, conflicts_with_all = ["category", "response"])]
    schema: Option<PathBuf>,
    /// Category column when no schema file is given.
    #[arg(long, default_value = "g")]
    category: String,
    /// Response column when no schema file is given.
    #[arg(long)]
    response: Option<String>,
}

impl SchemaArgs {
    fn resolve(&self) -> Result<ColumnSchema, Failure> {
        match &self.schema {
            Some(path) => ColumnSchema::load(path).map_err(|e| at(path, e)),
            None => Ok(ColumnSchema::simple(
                &self.category,
                self.response.as_deref(),
            )),
        }
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long, value_parser = parse_method, required_unless_present = "model")]
    method: Option<Method>,
    /// Apply a saved encoder instead of fitting one.
    #[arg(long, conflicts_with = "method")]
    model: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    out: PathBuf,
    /// Save the fitted encoder as JSON.
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_unseen)]
    unseen: Option<UnseenPolicy>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Number of latent levels.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    groups: usize,
    /// Size of the covariate support.
    #[arg(long)]
    support: usize,
    /// Covariate dimension (default k + 1).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 1)]
    worlds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// TOML benchmark config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV data instead of a simulated source.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, value_parser = parse_setup)]
    setup: Option<Setup>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    p_assign: Option<f64>,
    /// Comma-separated methods, e.g. `means,lowrank:k=cv,mnl`.
    #[arg(long, value_delimiter = ',', value_parser = parse_entry)]
    methods: Option<Vec<MethodEntry>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Neighbour count: `sqrt`, `inner-cv` or a number.
    #[arg(long, value_parser = parse_learner)]
    learner_k: Option<LearnerK>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-fold results as CSV.
    #[arg(long)]
    cells_out: Option<PathBuf>,
}

fn parse_setup(s: &str) -> Result<Setup, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_unseen(s: &str) -> Result<UnseenPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_entry(s: &str) -> Result<MethodEntry, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_learner(s: &str) -> Result<LearnerK, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Validation => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

/// Prefixes a file error with the offending path.
fn at(path: &Path, e: Error) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn execution(threads: Option<u16>) -> Result<Execution, Failure> {
    match threads {
        Some(1) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build_global()
                .map_err(|e| validation(format!("cannot start thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without parallel support, running sequentially");
            Ok(Execution::Sequential)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let exec = execution(cli.threads)?;
    match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Encode(a) => run_encode(a),
        Command::OracleCheck(a) => run_oracle(a, cli.format, exec),
        Command::Bench(a) => run_bench(a, cli.format, exec),
    }
}

fn run_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = SimConfig::new(a.setup, a.n, a.latent, a.groups, a.p).with_seed(a.seed);
    cfg.p_assign = a.p_assign;
    cfg.noise_sd = a.noise_sd;
    cfg.shared_support = a.shared_support;
    let out = simulate(&cfg)?;
    if out.regenerations > 0 {
        log::info!("{} draws discarded for empty categories", out.regenerations);
    }
    out.dataset.save_csv(&a.out).map_err(|e| at(&a.out, e))?;
    if let Some(path) = &a.latent_out {
        let mut text = String::from("latent\n");
        for l in &out.latent {
            text.push_str(&format!("{l}\n"));
        }
        fs::write(path, text)?;
    }
    if let Some(path) = &a.params_out {
        let json = serde_json::to_string_pretty(&out.params).expect("parameters serialize");
        fs::write(path, json + "\n")?;
    }
    Ok(())
}

fn write_encoded(path: &Path, d: &Dataset, enc: &EncodingMatrix) -> Result<(), Error> {
    let file = fs::File::create(path)?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<&str> = d.covariate_names().iter().map(String::as_str).collect();
    header.extend(enc.labels.iter().map(String::as_str));
    if let Some(r) = d.response_name() {
        header.push(r);
    }
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..d.n() {
        record.clear();
        record.extend((0..d.p()).map(|j| d.x()[(i, j)].to_string()));
        record.extend((0..enc.s.ncols()).map(|j| enc.s[(i, j)].to_string()));
        if let Some(y) = d.y() {
            record.push(y[i].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

fn run_encode(a: &EncodeArgs) -> Result<(), Failure> {
    let schema = a.schema.resolve()?;
    let d = Dataset::load_csv(&a.input, &schema).map_err(|e| at(&a.input, e))?;
    let mut enc = match (&a.model, a.method) {
        (Some(path), _) => FittedEncoder::load(path).map_err(|e| at(path, e))?,
        (None, Some(method)) => {
            let mut spec = EncoderSpec::new(method);
            spec.k = a.k;
            spec.seed = a.seed;
            if let Some(v) = a.lambda {
                spec.lambda = v;
            }
            if let Some(v) = a.lambda1 {
                spec.lambda1 = v;
            }
            if let Some(v) = a.reg {
                spec.reg = v;
            }
            if a.copies.is_some() {
                spec.copies = a.copies;
            }
            if let Some(u) = a.unseen {
                spec.unseen = u;
            }
            spec.fit(&d)?
        }
        (None, None) => return Err(validation("either --method or --model is required")),
    };
    if let (Some(_), Some(u)) = (&a.model, a.unseen) {
        enc = enc.with_unseen_policy(u);
    }
    let encoded = enc.transform(&d)?;
    write_encoded(&a.out, &d, &encoded).map_err(|e| at(&a.out, e))?;
    if let Some(path) = &a.save_model {
        enc.save(path)?;
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn run_oracle(a: &OracleArgs, format: Format, exec: Execution) -> Result<(), Failure> {
    let cfg = SweepConfig {
        worlds: a.worlds,
        num_latent: a.k,
        num_groups: a.groups,
        p: a.p.unwrap_or(a.k + 1),
        support: a.support,
        seed: a.seed,
    };
    let report = oracle_sweep(&cfg, exec)?;
    let text = match format {
        Format::Text => report.to_text(),
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        Format::Csv => {
            let mut s = String::from("identity,max_abs_error,tolerance,passed\n");
            for r in &report.rows {
                s.push_str(&format!(
                    "{},{:e},{:e},{}\n",
                    r.identity, r.max_abs_error, r.tolerance, r.passed
                ));
            }
            s
        }
    };
    emit(&text, None)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "identity errors exceed their tolerances".to_string(),
        })
    }
}

fn default_methods() -> Vec<MethodEntry> {
    vec![
        MethodEntry::new(Method::Means),
        MethodEntry::new(Method::Lowrank).with_select_k(),
        MethodEntry::new(Method::Mnl),
    ]
}

fn bench_config(a: &BenchArgs) -> Result<BenchConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<BenchConfig>(&text)
                .map_err(|e| validation(format!("invalid bench config {}: {e}", path.display())))?
        }
        None => {
            let source = match &a.input {
                Some(path) => DataSource::Csv {
                    path: path.clone(),
                    schema: a.schema.resolve()?,
                },
                None => {
                    let (Some(n), Some(latent), Some(groups), Some(p)) =
                        (a.n, a.latent, a.groups, a.p)
                    else {
                        return Err(validation(
                            "bench needs --config, --input, or --n/--latent/--groups/--p for simulated data",
                        ));
                    };
                    DataSource::Simulate(SimConfig::new(
                        a.setup.unwrap_or(Setup::LatentLinear),
                        n,
                        latent,
                        groups,
                        p,
                    ))
                }
            };
            BenchConfig::new(source, default_methods())
        }
    };
    if a.config.is_some() {
        if let Some(path) = &a.input {
            cfg.source = DataSource::Csv {
                path: path.clone(),
                schema: a.schema.resolve()?,
            };
        }
    }
    if let DataSource::Simulate(sim) = &mut cfg.source {
        if let Some(v) = a.setup {
            sim.setup = v;
        }
        if let Some(v) = a.n {
            sim.n = v;
        }
        if let Some(v) = a.latent {
            sim.num_latent = v;
        }
        if let Some(v) = a.groups {
            sim.num_groups = v;
        }
        if let Some(v) = a.p {
            sim.p = v;
        }
        if let Some(v) = a.p_assign {
            sim.p_assign = v;
        }
    }
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if let Some(v) = a.folds {
        cfg.folds = v;
    }
    if let Some(v) = a.inner_folds {
        cfg.inner_folds = v;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.learner_k {
        cfg.learner = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_bench(a: &BenchArgs, format: Format, exec: Execution) -> Result<(), Failure> {
    let cfg = bench_config(a)?;
    let report = run_benchmark(&cfg, exec)?;
    let text = match format {
        Format::Text => report.to_string(),
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json()? + "\n",
    };
    emit(&text, a.out.as_deref())?;
    if let Some(path) = &a.cells_out {
        fs::write(path, report.cells_to_csv())?;
    }
    Ok(())
}
