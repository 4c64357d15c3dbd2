use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hxd_core::ahce::{fit, AhceModel, ModelMeta, SmoothingPolicy, WahbaVariance};
use hxd_core::basis::BasisKind;
use hxd_core::data::SampleMatrix;
use hxd_core::datagen::SyntheticDist;
use hxd_core::experiments::{product_null, run_experiment, series, summary, write_results_csv, ExperimentSpec};
use hxd_core::gof::{run_test, GofConfig, GofTestRun, NullCoefficients};
use hxd_core::selfcheck::{run_all, Fixture};
use hxd_core::spectral::CoefficientTable;
use hxd_core::HxdError;

#[derive(Parser, Debug)]
#[command(name = "hxd", version, about = "Hyperbolic cross density estimation and goodness-of-fit testing")]
struct Cli {
    /// Master seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "HXD_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a density model to a CSV sample.
    Fit(FitArgs),
    /// Evaluate a fitted model at CSV points.
    Eval(EvalArgs),
    /// Draw points from a fitted model.
    Sample(SampleArgs),
    /// Goodness-of-fit test against a null density.
    Gof(GofArgs),
    /// Run an experiment described by a TOML file.
    Experiment(ExperimentArgs),
    /// Run the fast invariant battery.
    Selfcheck(SelfcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BasisArg {
    Fourier,
    Haar,
}

impl From<BasisArg> for BasisKind {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Fourier => BasisKind::Fourier,
            BasisArg::Haar => BasisKind::HaarWavelet,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    TruncationFourier,
    TruncationWavelet,
    Wahba,
    Fixed,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Headerless CSV of points in [0,1]^D.
    #[arg(short, long)]
    input: PathBuf,
    /// Model path; the metadata sidecar goes to `<output>.json`.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisArg::Fourier)]
    basis: BasisArg,
    /// Smoothing policy (default: truncation matching the basis).
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    scale_c: f64,
    /// Level for the fixed policy.
    #[arg(long)]
    level: Option<u32>,
    /// Global Wahba variance constant (default: per-index sample variance).
    #[arg(long)]
    wahba_c: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Headerless CSV of query points.
    #[arg(short, long)]
    input: PathBuf,
    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Number of points.
    #[arg(short = 'n', long)]
    count: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NullArg {
    Uniform,
    Beta,
    Table,
}

#[derive(Args, Debug)]
struct GofArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = NullArg::Uniform)]
    null: NullArg,
    /// Comma-separated Beta shape parameters a for `--null beta`.
    #[arg(long, value_delimiter = ',')]
    null_a: Vec<f64>,
    /// Comma-separated Beta shape parameters b for `--null beta`.
    #[arg(long, value_delimiter = ',')]
    null_b: Vec<f64>,
    /// Coefficient table CSV for `--null table`.
    #[arg(long)]
    null_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BasisArg::Haar)]
    basis: BasisArg,
    /// Kernel level (default: chosen from n and D).
    #[arg(short, long)]
    level: Option<u32>,
    /// Smoothness used for the automatic level.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Bootstrap replicates.
    #[arg(short = 'B', long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    #[arg(long, default_value_t = 0.5)]
    flip_prob: f64,
    /// Center the bootstrap kernel.
    #[arg(long)]
    center_bootstrap: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML experiment description.
    #[arg(short, long)]
    config: PathBuf,
    /// Directory for results.csv, summary.txt and series/.
    #[arg(short, long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SelfcheckArgs {
    #[arg(long, hide = true)]
    corrupt_order: bool,
}

struct Logger(u8);

impl Logger {
    fn info(&self, msg: impl AsRef<str>) {
        if self.0 > 0 {
            eprintln!("[hxd] {}", msg.as_ref());
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(output: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    match output {
        Some(p) => write_atomic(p, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn read_samples(path: &Path) -> anyhow::Result<SampleMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SampleMatrix::read_csv(BufReader::new(f))?)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn load_model(path: &Path) -> anyhow::Result<AhceModel> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let table = CoefficientTable::read_csv(BufReader::new(f))?;
    let meta_path = sidecar(path);
    let text = std::fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
    let meta: ModelMeta = serde_json::from_str(&text).with_context(|| format!("parsing {}", meta_path.display()))?;
    Ok(AhceModel::from_parts(meta, table)?)
}

fn policy_from(args: &FitArgs) -> anyhow::Result<SmoothingPolicy> {
    let kind = args.policy.unwrap_or(match args.basis {
        BasisArg::Fourier => PolicyArg::TruncationFourier,
        BasisArg::Haar => PolicyArg::TruncationWavelet,
    });
    let p = match kind {
        PolicyArg::TruncationFourier => SmoothingPolicy::TruncationFourier {
            alpha: args.alpha,
            nu: args.nu,
            scale_c: args.scale_c,
        },
        PolicyArg::TruncationWavelet => SmoothingPolicy::TruncationWavelet {
            alpha: args.alpha,
            nu: args.nu,
            scale_c: args.scale_c,
        },
        PolicyArg::Wahba => SmoothingPolicy::Wahba {
            alpha: args.alpha,
            variance: args.wahba_c.map_or(WahbaVariance::PerIndex, WahbaVariance::Global),
            scale_c: args.scale_c,
        },
        PolicyArg::Fixed => match args.level {
            Some(level) => SmoothingPolicy::FixedLevel { level },
            None => bail!("--policy fixed needs --level"),
        },
    };
    p.validate()?;
    Ok(p)
}

fn cmd_fit(args: &FitArgs, seed: u64, log: &Logger) -> anyhow::Result<ExitCode> {
    let policy = policy_from(args)?;
    let samples = read_samples(&args.input)?;
    samples.check_unit_cube()?;
    log.info(format!("fitting {} points in D={} with {}", samples.len(), samples.dim(), policy.name()));
    let model = fit(&samples, args.basis.into(), &policy)?;
    write_atomic(&args.output, |w| Ok(model.table().write_csv(w)?))?;
    let meta = model.meta(Some(seed));
    let json = serde_json::to_string_pretty(&meta)?;
    write_atomic(&sidecar(&args.output), |w| Ok(writeln!(w, "{json}")?))?;
    println!("n,D,l,coefficients");
    println!("{},{},{},{}", model.n(), model.dim(), model.level(), model.table().len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let model = load_model(&args.model)?;
    let points = read_samples(&args.input)?;
    if points.dim() != model.dim() {
        return Err(HxdError::DimensionMismatch {
            expected: model.dim(),
            found: points.dim(),
        }
        .into());
    }
    emit(args.output.as_deref(), |w| {
        for x in points.rows() {
            writeln!(w, "{}", model.evaluate(x))?;
        }
        Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: &SampleArgs, seed: u64) -> anyhow::Result<ExitCode> {
    let model = load_model(&args.model)?;
    let pts = model.sample(args.count, seed)?;
    emit(args.output.as_deref(), |w| Ok(pts.write_csv(w)?))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gof(args: &GofArgs, seed: u64, log: &Logger) -> anyhow::Result<ExitCode> {
    let cfg = GofConfig {
        basis: args.basis.into(),
        level: args.level,
        alpha: args.alpha,
        significance: args.significance,
        bootstrap_reps: args.bootstrap,
        flip_prob: args.flip_prob,
        seed,
        center_bootstrap: args.center_bootstrap,
    };
    cfg.validate()?;
    if matches!(args.null, NullArg::Beta) && (args.null_a.is_empty() || args.null_a.len() != args.null_b.len()) {
        bail!("--null beta needs --null-a and --null-b of equal length");
    }
    if matches!(args.null, NullArg::Table) && args.null_table.is_none() {
        bail!("--null table needs --null-table");
    }
    let samples = read_samples(&args.input)?;
    samples.check_unit_cube()?;
    let level = cfg.resolve_level(samples.len(), samples.dim())?;
    let null: Box<dyn NullCoefficients> = match args.null {
        NullArg::Uniform => Box::new(CoefficientTable::constant(cfg.basis, samples.dim(), level, 1.0)),
        NullArg::Beta => {
            let dist = SyntheticDist::ProductBeta {
                a: args.null_a.clone(),
                b: args.null_b.clone(),
            };
            Box::new(product_null(&dist, cfg.basis, level)?)
        }
        NullArg::Table => {
            let path = args.null_table.as_ref().expect("checked above");
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Box::new(CoefficientTable::read_csv(BufReader::new(f))?)
        }
    };
    log.info(format!("testing n={} D={} at level {level} with B={}", samples.len(), samples.dim(), cfg.bootstrap_reps));
    let run = run_test(&samples, null.as_ref(), &cfg)?;
    println!("{}", GofTestRun::CSV_HEADER);
    println!("{}", run.csv_row());
    Ok(if run.reject { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_experiment(args: &ExperimentArgs, seed_override: Option<u64>, log: &Logger) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut spec = ExperimentSpec::from_toml(&text)?;
    if let Some(s) = seed_override {
        spec.seed = s;
    }
    log.info(format!("running experiment {}", spec.id));
    let out = run_experiment(&spec)?;
    std::fs::create_dir_all(args.out_dir.join("series"))
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_atomic(&args.out_dir.join("results.csv"), |w| Ok(write_results_csv(&out.rows, w)?))?;
    let text = summary(&spec, &out);
    write_atomic(&args.out_dir.join("summary.txt"), |w| Ok(w.write_all(text.as_bytes())?))?;
    for (name, body) in series(&out.rows) {
        write_atomic(&args.out_dir.join("series").join(format!("{name}.csv")), |w| {
            Ok(w.write_all(body.as_bytes())?)
        })?;
    }
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> ExitCode {
    let results = run_all(Fixture {
        corrupt_order: args.corrupt_order,
    });
    let mut ok = true;
    for r in &results {
        println!("{}", r.line());
        ok &= r.pass;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HxdError>() {
        Some(HxdError::OutOfCube { .. }) => 3,
        _ => 2,
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
            || matches!(c.downcast_ref::<HxdError>(), Some(HxdError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Logger(cli.verbose);
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let seed_given = std::env::args().any(|a| a == "--seed" || a.starts_with("--seed="));
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.seed, &log),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a, cli.seed),
        Command::Gof(a) => cmd_gof(a, cli.seed, &log),
        Command::Experiment(a) => cmd_experiment(a, seed_given.then_some(cli.seed), &log),
        Command::Selfcheck(a) => Ok(cmd_selfcheck(a)),
    };
    match result {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
