use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lsvm::baselines::{benchmark_with, BenchmarkConfig, Method};
use lsvm::bounds::{self, BoundInputs};
use lsvm::io::{
    self, benchmark_csv, dataset_fingerprint, save_json, write_permtest_report, DataFormat,
    DatasetManifest, IoError, ModelFile, PermtestConfig, PermtestReport,
};
use lsvm::stats::{permutation_test_with, PermutationOptions};
use lsvm::synth::{EllipsoidConfig, PhantomConfig, PhantomIntensities, SimpleCaseConfig};
use lsvm::{train_with, Dataset, FeatureScaling, SynthConfig, TrainOptions};

#[derive(Parser, Debug)]
#[command(name = "lsvm", version, about = "Longitudinal SVM training, prediction and significance maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Fit a model and save it as JSON.
    Train(TrainArgs),
    /// Label every subject of a dataset with a saved model.
    Predict(PredictArgs),
    /// Per-feature permutation p-values with BH adjustment and heatmaps.
    Permtest(PermtestArgs),
    /// Accuracy comparison of LSVM against the baselines on synthetic data.
    Bench(BenchArgs),
    /// VC-dimension bound from a model or from explicit inputs.
    Bound(BoundArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Simple,
    Ellipsoid,
    Phantom,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Simple => "simple",
            Kind::Ellipsoid => "ellipsoid",
            Kind::Phantom => "phantom",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Raw,
}

#[derive(Args, Debug, Clone, Default)]
struct GeneratorArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Lines per class.
    #[arg(long)]
    lines: Option<usize>,
    /// Generations observed per line.
    #[arg(long = "T")]
    generations: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Edge length of the cubic volume.
    #[arg(long)]
    grid: Option<usize>,
    /// Starting semi-axis of the varied ellipse or ellipsoid.
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Image side of the phantom.
    #[arg(long)]
    side: Option<usize>,
    /// Use the original phantom intensities instead of the contrast-enhanced ones.
    #[arg(long)]
    original_intensities: bool,
}

impl GeneratorArgs {
    fn flags_set(&self) -> Vec<&'static str> {
        let mut set = Vec::new();
        let mut flag = |on: bool, name| {
            if on {
                set.push(name)
            }
        };
        flag(self.p.is_some(), "--p");
        flag(self.sigma.is_some(), "--sigma");
        flag(self.grid.is_some(), "--grid");
        flag(self.s0.is_some(), "--s0");
        flag(self.a0.is_some(), "--a0");
        flag(self.lambda.is_some(), "--lambda");
        flag(self.side.is_some(), "--side");
        flag(self.original_intensities, "--original-intensities");
        set
    }

    fn build(&self, kind: Kind) -> Result<SynthConfig> {
        let allowed: &[&str] = match kind {
            Kind::Simple => &["--p", "--sigma"],
            Kind::Ellipsoid => &["--grid", "--s0", "--a0", "--lambda"],
            Kind::Phantom => &["--side", "--s0", "--a0", "--lambda", "--original-intensities"],
        };
        if let Some(bad) = self.flags_set().into_iter().find(|f| !allowed.contains(f)) {
            return Err(CliError::UnknownFlag(format!("{bad} does not apply to the {} generator", kind.name())).into());
        }
        let cfg = match kind {
            Kind::Simple => {
                let d = SimpleCaseConfig::default();
                SynthConfig::Simple(SimpleCaseConfig::new(
                    self.p.unwrap_or(d.p),
                    self.lines.unwrap_or(d.lines_per_class),
                    self.generations.unwrap_or(d.generations),
                    self.sigma.unwrap_or(d.sigma),
                    self.seed.unwrap_or(d.seed),
                ))
            }
            Kind::Ellipsoid => {
                let d = EllipsoidConfig::default();
                let g = self.grid.map_or(d.grid, |n| (n, n, n));
                SynthConfig::Ellipsoid(EllipsoidConfig {
                    grid: g,
                    s0x: self.s0.unwrap_or(d.s0x),
                    s0z: self.s0.unwrap_or(d.s0z),
                    a0: self.a0.unwrap_or(d.a0),
                    lambda: self.lambda.unwrap_or(d.lambda),
                    lines_per_class: self.lines.unwrap_or(d.lines_per_class),
                    generations: self.generations.unwrap_or(d.generations),
                    seed: self.seed.unwrap_or(d.seed),
                    ..d
                })
            }
            Kind::Phantom => {
                let d = PhantomConfig::default();
                SynthConfig::Phantom(PhantomConfig {
                    side: self.side.unwrap_or(d.side),
                    lines_per_class: self.lines.unwrap_or(d.lines_per_class),
                    generations: self.generations.unwrap_or(d.generations),
                    seed: self.seed.unwrap_or(d.seed),
                    s0: self.s0.unwrap_or(d.s0),
                    a0: self.a0.unwrap_or(d.a0),
                    lambda: self.lambda.unwrap_or(d.lambda),
                    intensities: if self.original_intensities {
                        PhantomIntensities::Original
                    } else {
                        d.intensities
                    },
                })
            }
        };
        Ok(cfg)
    }
}

fn shape_of(cfg: &SynthConfig) -> Vec<usize> {
    match cfg {
        SynthConfig::Simple(c) => io::default_shape(c.p),
        SynthConfig::Ellipsoid(c) => vec![c.grid.0, c.grid.1, c.grid.2],
        SynthConfig::Phantom(c) => vec![c.side, c.side],
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Dataset name recorded in the manifest; defaults to the generator kind.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args, Debug, Clone, Copy)]
struct FitArgs {
    /// Box bound on the dual multipliers.
    #[arg(long = "C", default_value_t = 0.001)]
    c: f64,
    /// Solve the hard-margin problem; overrides --C.
    #[arg(long, default_value_t = false)]
    hard_margin: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Centre and scale every feature before fitting.
    #[arg(long, default_value_t = false)]
    standardize: bool,
}

impl FitArgs {
    fn c(&self) -> f64 {
        if self.hard_margin {
            f64::INFINITY
        } else {
            self.c
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    /// Recorded in the model metadata.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PermtestArgs {
    #[arg(long)]
    data: PathBuf,
    /// Take C, tolerance and scaling from a trained model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "B", default_value_t = 10_000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    fit: FitArgs,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "phantom")]
    generator_kind: Kind,
    #[arg(long, default_value_t = 11)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "lsvm,svm,lda")]
    methods: Vec<String>,
    /// Test lines per class; defaults to the training count.
    #[arg(long)]
    test_lines: Option<usize>,
    #[arg(long = "C", default_value_t = 0.001)]
    c: f64,
    /// Box bound of the stacked SVM; defaults to --C.
    #[arg(long = "svm-C")]
    svm_c: Option<f64>,
    #[arg(long)]
    lda_shrinkage: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Number of subjects.
    #[arg(long, conflicts_with = "data")]
    m: Option<usize>,
    /// Time points per subject.
    #[arg(long, conflicts_with = "data")]
    n: Option<usize>,
    /// Data radius.
    #[arg(long, conflicts_with = "data")]
    r: Option<f64>,
    /// Minimal average margin.
    #[arg(long, conflicts_with = "data")]
    mu: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    UnknownFlag(String),
    MissingInput(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::UnknownFlag(m) | CliError::MissingInput(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn print_config<S: Serialize>(command: &str, config: &S) -> Result<()> {
    let line = serde_json::json!({ "command": command, "config": config });
    println!("{line}");
    Ok(())
}

fn load(path: &Path) -> Result<io::LoadedDataset> {
    io::load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let cfg = args.generator.build(args.kind)?;
    print_config("generate", &cfg)?;
    let ds: Dataset = cfg.generate()?;
    let format = match args.format {
        FormatArg::Csv => DataFormat::Csv,
        FormatArg::Raw => DataFormat::RawF64,
    };
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| args.kind.name().to_owned());
    let manifest = DatasetManifest::describe(&ds, name, format)
        .with_shape(shape_of(&cfg))
        .with_generator(cfg);
    io::save_dataset(&ds, &args.out, manifest)?;
    println!(
        "wrote {} subjects, {} observations, p = {} to {}",
        ds.len(),
        ds.total_obs(),
        ds.p(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainConfig<'a> {
    data: &'a Path,
    out: &'a Path,
    #[serde(rename = "C")]
    c: Option<f64>,
    tol: f64,
    standardize: bool,
    seed: Option<u64>,
}

fn train(args: &TrainArgs) -> Result<()> {
    let c = args.fit.c();
    print_config(
        "train",
        &TrainConfig {
            data: &args.data,
            out: &args.out,
            c: c.is_finite().then_some(c),
            tol: args.fit.tol,
            standardize: args.fit.standardize,
            seed: args.seed,
        },
    )?;
    let loaded = load(&args.data)?;
    let ds = &loaded.dataset;
    let scaling = args.fit.standardize.then(|| FeatureScaling::fit(ds));
    let fit_ds = scaling.as_ref().map_or_else(|| ds.clone(), |s| s.apply(ds));
    let mut opts = TrainOptions::new(c).with_tol(args.fit.tol);
    opts.seed = args.seed;
    let clf = train_with(&fit_ds, &opts)?;
    let model = ModelFile::from_classifier(&clf, dataset_fingerprint(ds), scaling);
    model.save(&args.out)?;
    println!(
        "trained on {} subjects: a = {}, b = {}, d = {}, {} support vectors, {} iterations",
        ds.len(),
        clf.a,
        clf.b,
        clf.d,
        clf.raw.support.len(),
        clf.meta.iterations
    );
    Ok(())
}

fn warn_on_fingerprint(model: &ModelFile, ds: &Dataset) {
    let found = dataset_fingerprint(ds);
    if found != model.fingerprint {
        eprintln!(
            "warning: data fingerprint {found} differs from the training fingerprint {}",
            model.fingerprint
        );
    }
}

fn predict(args: &PredictArgs) -> Result<()> {
    print_config("predict", &serde_json::json!({ "data": args.data, "model": args.model, "out": args.out }))?;
    let model = ModelFile::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let ds = load(&args.data)?.dataset;
    warn_on_fingerprint(&model, &ds);
    if ds.p() != model.w.len() {
        bail!("model has {} features, data has {}", model.w.len(), ds.p());
    }
    let clf = model.classifier();
    let mut out = String::from("subject,label,predicted,score,conclusive\n");
    let mut correct = 0;
    for s in ds.subjects() {
        let obs = match &model.scaling {
            Some(sc) => sc.apply_observations(&s.observations),
            None => s.observations.clone(),
        };
        let pred = clf.predict(&obs)?;
        correct += usize::from(pred.label == s.label);
        let id = if s.id.contains([',', '"', '\n']) {
            format!("\"{}\"", s.id.replace('"', "\"\""))
        } else {
            s.id.clone()
        };
        out.push_str(&format!(
            "{id},{},{},{},{}\n",
            i8::from(s.label),
            i8::from(pred.label),
            io::format_f64(pred.score),
            pred.conclusive
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{out}"),
    }
    println!("accuracy {}/{} = {}", correct, ds.len(), correct as f64 / ds.len() as f64);
    Ok(())
}

fn permtest(args: &PermtestArgs) -> Result<()> {
    let loaded = load(&args.data)?;
    let ds = &loaded.dataset;
    let model = args
        .model
        .as_ref()
        .map(|p| ModelFile::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let (c, tol, scaling) = match &model {
        Some(m) => {
            warn_on_fingerprint(m, ds);
            (m.c.unwrap_or(f64::INFINITY), m.tol, m.scaling.clone())
        }
        None => (
            args.fit.c(),
            args.fit.tol,
            args.fit.standardize.then(|| FeatureScaling::fit(ds)),
        ),
    };
    let config = PermtestConfig {
        data: args.data.display().to_string(),
        dataset_fingerprint: dataset_fingerprint(ds),
        c: c.is_finite().then_some(c),
        tol,
        permutations: args.permutations,
        seed: args.seed,
        standardize: scaling.is_some(),
    };
    print_config("permtest", &config)?;

    let fit_ds = scaling.as_ref().map_or_else(|| ds.clone(), |s| s.apply(ds));
    let mut opts = PermutationOptions::new(c, args.permutations, args.seed);
    opts.train = opts.train.with_tol(tol);
    opts.jobs = args.jobs;
    let result = permutation_test_with(&fit_ds, &opts)?;
    let report = PermtestReport {
        tool_version: io::TOOL_VERSION.to_owned(),
        config,
        shape: loaded.shape(),
        result,
    };
    let files = write_permtest_report(&args.out, &report)?;
    let hits: Vec<usize> = (0..report.result.adjusted_p.len())
        .filter(|&j| report.result.adjusted_p[j] <= 0.05)
        .collect();
    println!(
        "{} features with adjusted p <= 0.05: {:?}; {} degenerate refits; {} files in {}",
        hits.len(),
        hits,
        report.result.degenerate,
        files.len(),
        args.out.display()
    );
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let generator = args.generator.build(args.generator_kind)?;
    let methods = args
        .methods
        .iter()
        .map(|m| Method::parse(m).ok_or_else(|| anyhow!("unknown method {m:?}")))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = BenchmarkConfig::new(methods, args.trials, generator);
    cfg.c = args.c;
    cfg.svm_c = args.svm_c.unwrap_or(args.c);
    if let Some(g) = args.lda_shrinkage {
        cfg.lda_shrinkage = g;
    }
    if let Some(n) = args.test_lines {
        cfg.test_lines_per_class = n;
    }
    cfg.tol = args.tol;
    cfg.jobs = args.jobs;
    print_config("bench", &cfg)?;

    let table = benchmark_with(&cfg)?;
    let csv_path = args.out.join("bench.csv");
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    std::fs::write(&csv_path, benchmark_csv(&table)?).with_context(|| format!("writing {}", csv_path.display()))?;
    save_json(&args.out.join("bench.json"), &table)?;
    for (m, mean) in table.methods.iter().zip(&table.means) {
        println!("{:>5} mean accuracy {mean:.4}", m.name());
    }
    for cmp in &table.pairwise {
        match &cmp.test {
            Some(t) => println!(
                "{} > {}: one-sided p = {:.4}, two-sided p = {:.4}",
                cmp.first.name(),
                cmp.second.name(),
                t.p_value,
                t.p_two_sided
            ),
            None => println!("{} vs {}: no non-zero differences", cmp.first.name(), cmp.second.name()),
        }
    }
    Ok(())
}

fn bound(args: &BoundArgs) -> Result<()> {
    let diag = match (&args.data, &args.model) {
        (Some(data), Some(model)) => {
            print_config("bound", &serde_json::json!({ "data": data, "model": model }))?;
            let model = ModelFile::load(model).with_context(|| format!("loading {}", model.display()))?;
            let ds = load(data)?.dataset;
            let ds = model.scaling.as_ref().map_or(ds.clone(), |s| s.apply(&ds));
            bounds::diagnose(&ds, &model.classifier())
        }
        _ => {
            let missing = |name: &str| CliError::MissingInput(format!("--{name} is required without --data/--model"));
            let inputs = BoundInputs {
                m: args.m.ok_or_else(|| missing("m"))?,
                n: args.n.ok_or_else(|| missing("n"))?,
                r: args.r.ok_or_else(|| missing("r"))?,
                mu: args.mu.ok_or_else(|| missing("mu"))?,
            };
            print_config("bound", &inputs)?;
            inputs.diagnose()
        }
    };
    println!("{}", serde_json::to_string(&diag)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Permtest(a) => permtest(a),
        Command::Bench(a) => bench(a),
        Command::Bound(a) => bound(a),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::UnknownFlag(_) => ("UnknownFlag", 2),
                CliError::MissingInput(_) => ("MissingInput", 3),
            };
        }
        if let Some(e) = cause.downcast_ref::<IoError>() {
            return match e {
                IoError::MissingInput(_) => ("MissingInput", 3),
                IoError::Parse { .. } => ("ParseError", 1),
                IoError::ChecksumMismatch { .. } => ("ChecksumMismatch", 1),
                IoError::UnexpectedEof { .. } => ("UnexpectedEof", 1),
                _ => ("IoError", 1),
            };
        }
    }
    ("Failed", 1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                ErrorKind::UnknownArgument | ErrorKind::InvalidSubcommand => ("UnknownFlag", 2),
                ErrorKind::MissingRequiredArgument
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ("MissingInput", 3),
                _ => ("InvalidArgument", 2),
            };
            let msg = e.to_string();
            let summary: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.is_empty() && !l.starts_with("Usage:"))
                .collect();
            let summary = summary.join(" ");
            return fail(kind, summary.trim_start_matches("error: "), code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            fail(kind, &format!("{err:#}"), code)
        }
    }
}
