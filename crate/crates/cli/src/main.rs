use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nstar::analysis::{analyze_dir, build_report, write_report, Report};
use nstar::metrics::histogram;
use nstar::sweep::{default_workers, enumerate_configs, run_sweep, Metric, RunStatus, SweepMode, SweepOptions};
use nstar::trainer::run_id_for;
use nstar::{generate_population, run_training, Error, ExperimentConfig, Population, PopulationConfig, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "nstar", version, about = "Compute-optimal rollout allocation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem population and write it as JSON.
    Generate(GenerateArgs),
    /// Train one (B_p, n, M) configuration.
    Train(TrainArgs),
    /// Run a (B_p, n) sweep under the configured budget.
    Sweep(SweepArgs),
    /// Fit curves and extract the compute-optimal frontier from run logs.
    Analyze(AnalyzeArgs),
    /// Summarize one or more analyses.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Replace the population section with a preset: easy, hard or tri_mix.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Population file; generated from the config when omitted.
    #[arg(long)]
    population: Option<PathBuf>,
    #[arg(long = "B_p")]
    batch_problems: usize,
    #[arg(long = "n")]
    group_size: usize,
    #[arg(long = "M")]
    steps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    population: Option<PathBuf>,
    /// fix_Bp, fix_B or joint.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "fixed-B")]
    fixed_batch: Option<usize>,
    /// Parallel runs; defaults to NSTAR_WORKERS or the core count.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue a sweep already present in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory of run logs (a sweep output).
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Reward bin width for record-breaking extraction.
    #[arg(long)]
    bin: Option<f64>,
    /// Number of log-spaced budgets.
    #[arg(long)]
    grid: Option<usize>,
    /// Odd smoothing window for log2 n*.
    #[arg(long)]
    window: Option<usize>,
    /// avg, best4 or worst4.
    #[arg(long, default_value = "avg")]
    emit: String,
    /// Restrict to runs with this B_p.
    #[arg(long = "B_p")]
    batch_problems: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `analyze`.
    #[arg(long)]
    analysis: PathBuf,
    /// Where to write report CSVs; defaults to the analysis directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn load_population(path: Option<&Path>, config: &ExperimentConfig) -> Result<Population> {
    match path {
        Some(p) => Population::load(p),
        None => generate_population(&config.population),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut config = args.config.load()?;
    let seed = args.seed.unwrap_or(config.population.seed);
    if let Some(preset) = &args.preset {
        config.population = match preset.as_str() {
            "easy" => PopulationConfig::easy(seed),
            "hard" => PopulationConfig::hard(seed),
            "tri_mix" => PopulationConfig::tri_mix(seed),
            other => return Err(Error::InvalidConfig {
                key: "preset".into(),
                reason: format!("unknown preset `{other}`"),
            }),
        };
    }
    config.population.seed = seed;
    let pop = generate_population(&config.population)?;
    pop.save(&args.out)?;
    println!(
        "wrote {} ({} train / {} val)",
        args.out.display(),
        pop.train.len(),
        pop.val.len()
    );
    let p0: Vec<f64> = pop.train.iter().map(|p| p.target_p0).collect();
    println!("target_p0 histogram (train, 10 bins over [0, 1]):");
    for (b, count) in histogram(&p0, 10).iter().enumerate() {
        println!("  [{:.1}, {:.1}{} {count}", b as f64 / 10.0, (b + 1) as f64 / 10.0, if b == 9 { "]" } else { ")" });
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.config.load()?;
    let pop = load_population(args.population.as_deref(), &config)?;
    let train = TrainConfig::new(args.batch_problems, args.group_size, args.steps, config.trainer.clone())
        .with_seed(args.seed.unwrap_or(config.sweep.base_seed));
    let mut log = run_training(&pop, &train)?;
    log.run_id = run_id_for(args.batch_problems, args.group_size, 0);
    log.write_dir(&args.out)?;
    log.final_state.save(args.out.join("policy.json"))?;
    let last = log.records.last().expect("step 0 is always recorded");
    println!(
        "{}: {} records, final compute {}, val avg {:.4} (from {:.4})",
        log.run_id,
        log.records.len(),
        last.compute,
        last.val_avg,
        log.records[0].val_avg
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(mode) = &args.mode {
        config.sweep.mode = mode.parse::<SweepMode>()?;
    }
    if let Some(b) = args.fixed_batch {
        config.sweep.fixed_batch = Some(b);
    }
    if let Some(seed) = args.seed {
        config.sweep.base_seed = seed;
    }
    let manifest = enumerate_configs(&config.sweep)?;
    let pop = load_population(args.population.as_deref(), &config)?;
    let options = SweepOptions {
        workers: args.workers.unwrap_or_else(default_workers),
        resume: args.resume,
    };
    println!(
        "runs: {} ({} skipped for budget), workers: {}",
        manifest.entries.len(),
        manifest.skipped.len(),
        options.workers
    );
    let done = run_sweep(&args.out, manifest, &pop, &config.trainer, &options)?;
    println!(
        "completed {}, failed {}",
        done.count(RunStatus::Completed),
        done.count(RunStatus::Failed)
    );
    for e in done.entries.iter().filter(|e| e.status == RunStatus::Failed) {
        eprintln!("  {} failed: {}", e.run_id, e.error.as_deref().unwrap_or("unknown"));
    }
    match done.count(RunStatus::Failed) {
        0 => Ok(()),
        failed => Err(Error::RunsFailed {
            failed,
            total: done.entries.len(),
        }),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let config = args.config.load()?;
    let mut analysis = config.analysis.clone();
    if let Some(b) = args.bin {
        analysis.bin_width = b;
    }
    if let Some(g) = args.grid {
        analysis.grid_size = g;
    }
    if let Some(w) = args.window {
        analysis.window = w;
    }
    let metric: Metric = args.emit.parse()?;
    if !matches!(metric, Metric::Avg | Metric::Best4 | Metric::Worst4) {
        return Err(Error::InvalidConfig {
            key: "emit".into(),
            reason: "expected avg, best4 or worst4".into(),
        });
    }
    let a = analyze_dir(&args.runs, &args.out, metric, args.batch_problems, &analysis)?;
    for c in a.curves.iter().filter(|c| c.note.is_some()) {
        eprintln!(
            "  B_p={} n={}: {}",
            c.batch_problems,
            c.n,
            c.note.as_deref().unwrap_or_default()
        );
    }
    let last = a.frontier.grid.len() - 1;
    println!(
        "{}: {} curves, n* at C={:.3e} is {} (fit hi = 2^{:.2})",
        metric.name(),
        a.curves.len(),
        a.frontier.grid[last],
        a.frontier.frontier_n[last],
        a.nstar_fit.hi
    );
    Ok(())
}

fn print_report(r: &Report) {
    println!("n* vs compute ({}):", r.primary.name());
    println!("  {:>12} {:>10} {:>10} {:>12}", "compute", "frontier_n", "smoothed", "recommended");
    for row in &r.nstar {
        println!(
            "  {:>12.4e} {:>10} {:>10.3} {:>12}",
            row.compute, row.frontier_n, row.smoothed_log2_nstar, row.recommended_n
        );
    }
    println!("saturation reward per curve:");
    for row in &r.saturation {
        let hi = row.saturation.map_or("-".to_string(), |v| format!("{v:.4}"));
        let flag = if row.low_confidence { " (low confidence)" } else { "" };
        println!("  {:<7} B_p={:<5} n={:<5} {hi}{flag}", row.metric.name(), row.batch_problems, row.n);
    }
    println!("argmax n at the largest budget:");
    for row in &r.argmax {
        println!("  {:<7} n={:<5} reward {:.4} at C={:.3e}", row.metric.name(), row.argmax_n, row.reward, row.compute);
    }
    if let Some(first) = r.zero_pass.first() {
        println!("zero-pass fraction at matched compute C={:.3e}:", first.compute);
        for row in &r.zero_pass {
            println!("  B_p={:<5} n={:<5} {:.4}", row.batch_problems, row.n, row.zero_pass_frac);
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = build_report(&args.analysis)?;
    let out = args.out.unwrap_or_else(|| args.analysis.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    write_report(&report, &out)?;
    print_report(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
