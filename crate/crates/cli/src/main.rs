mod config;
mod report;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sinkpit::assignment::BRUTE_FORCE_CAP;
use sinkpit::bench::{run_bench, write_atomically, write_csv, BenchConfig, Method};
use sinkpit::demix::{run_demix, DemixConfig, DemixReport};
use sinkpit::signal::{pairwise_cost_matrix_with, SiSdrOptions, DEFAULT_SAMPLE_RATE};
use sinkpit::wav::{load_waveform, AudioFormat};
use sinkpit::{
    brute_force_pit, hungarian, probpit_loss, round_plan, sinkhorn_iterate, sinkpit_loss, AnnealSchedule, CostMatrix,
    Error, PermutationPrior, SinkhornConfig,
};

use config::FileConfig;
use report::{cycle_form, one_based, MethodReport, PlanSummary, SolveReport};

const DEFAULT_GAMMA: f64 = 0.1;
const DEFAULT_SCHEDULE_EPOCHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "sinkpit",
    version,
    about = "Permutation-invariant losses: PIT, Hungarian, SinkPIT and ProbPIT"
)]
struct Cli {
    /// JSON file whose keys mirror the long flags, e.g. {"beta": 5, "sample-rate": 16000}.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time brute-force PIT, Hungarian and SinkPIT on Gaussian cost matrices.
    Bench(BenchArgs),
    /// Solve one cost matrix, from CSV or from audio files.
    Solve(SolveArgs),
    /// Print the inverse-temperature annealing schedule.
    Schedule(ScheduleArgs),
    /// Train a linear demixer with the SinkPIT loss on synthetic mixtures.
    DemoDemix(DemoArgs),
}

#[derive(Args)]
struct Common {
    /// Inverse temperature; for `schedule` and `demo-demix`, the annealing cap [default: 1, or 10 when annealing]
    #[arg(long)]
    beta: Option<f64>,
    /// Sinkhorn sweeps, each a column then a row normalization [default: 200]
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (a directory for `demo-demix`), written atomically [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Smallest N [default: 2]
    #[arg(long)]
    n_min: Option<usize>,
    /// Largest N [default: 10]
    #[arg(long)]
    n_max: Option<usize>,
    /// Timed solves per (method, N) [default: 20]
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of brute_force, hungarian, sinkpit [default: all]
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Use seed 0 when --seed is absent instead of a clock-derived seed.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Cost matrix CSV, one row per line.
    cost: Option<PathBuf>,
    /// Reference signals (.wav PCM16 mono, or raw little-endian f64).
    #[arg(long, num_args = 1.., value_name = "FILE")]
    sources: Vec<PathBuf>,
    /// Estimated signals; costs are C[i][j] = -SI-SDR(estimate j, source i).
    #[arg(long, num_args = 1.., value_name = "FILE")]
    estimates: Vec<PathBuf>,
    /// brute, hungarian, sinkpit or probpit [default: hungarian]
    #[arg(long)]
    method: Option<String>,
    /// Run every method that fits the size and report agreement.
    #[arg(long)]
    all: bool,
    /// ProbPIT smoothing [default: 0.1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Sample rate assumed for raw audio files [default: 8000]
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Subtract signal means before SI-SDR.
    #[arg(long)]
    zero_mean: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    common: Common,
    /// Number of epochs to print [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Growth factor per epoch [default: 1.02]
    #[arg(long)]
    base: Option<f64>,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    common: Common,
    /// Number of sources, at most 8 [default: 4]
    #[arg(long)]
    n: Option<usize>,
    /// Signal length [default: 1]
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// First trial step of the per-epoch line search [default: 0.3]
    #[arg(long)]
    lr: Option<f64>,
    /// Signal segments in the training batch [default: 4]
    #[arg(long)]
    segments: Option<usize>,
    /// Worker threads over segments; the reduction order is fixed [default: 1]
    #[arg(long)]
    threads: Option<usize>,
    /// Force a single thread.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    sample_rate: Option<u32>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(Error::InvalidConfig(_)) => 2,
            Failure::Lib(e) if e.is_numeric() => 4,
            Failure::Lib(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Bench(a) => bench(a, file),
        Command::Solve(a) => solve(a, file),
        Command::Schedule(a) => schedule(a, file),
        Command::DemoDemix(a) => demo(a, file),
    }
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult {
    match out {
        Some(path) => Ok(write_atomically(path, contents.as_bytes())?),
        None => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not an error for a report printer.
            let _ = stdout.write_all(contents.as_bytes()).and_then(|_| stdout.flush());
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn sinkhorn_config(common: &Common, file: &FileConfig, default_beta: f64) -> CliResult<SinkhornConfig> {
    Ok(SinkhornConfig::new(
        common.beta.or(file.beta).unwrap_or(default_beta),
        common
            .iterations
            .or(file.iterations)
            .unwrap_or(sinkpit::sinkhorn::DEFAULT_ITERATIONS),
    )?)
}

fn bench(a: BenchArgs, file: FileConfig) -> CliResult {
    let n_min = a.n_min.or(file.n_min).unwrap_or(2);
    let n_max = a.n_max.or(file.n_max).unwrap_or(10);
    if n_min == 0 || n_min > n_max {
        return Err(Failure::Usage(format!(
            "need 1 <= n-min <= n-max, got {n_min}..{n_max}"
        )));
    }
    let methods = match a.methods.or(file.methods.clone()) {
        Some(names) => names.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?,
        None => Method::ALL.to_vec(),
    };
    let deterministic = a.deterministic || file.deterministic.unwrap_or(false);
    let seed = match a.common.seed.or(file.seed) {
        Some(s) => s,
        None if deterministic => 0,
        None => {
            let s = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            eprintln!("seed {s}");
            s
        }
    };
    let cfg = BenchConfig {
        sizes: (n_min..=n_max).collect(),
        trials: a.trials.or(file.trials).unwrap_or(20),
        methods,
        sinkhorn: sinkhorn_config(&a.common, &file, 1.0)?,
        seed,
    };
    let records = run_bench(&cfg)?;
    let text = match a.common.format.or(file.format).unwrap_or(Format::Csv) {
        Format::Json => to_json(&records),
        Format::Csv | Format::Text => {
            let mut buf = Vec::new();
            write_csv(&records, &mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("ascii csv")
        }
    };
    emit(a.common.out.or(file.out).as_deref(), &text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SolveMethod {
    Brute,
    Hungarian,
    Sinkpit,
    Probpit,
}

impl std::str::FromStr for SolveMethod {
    type Err = Failure;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "brute" | "brute_force" | "brute-force" => Ok(SolveMethod::Brute),
            "hungarian" => Ok(SolveMethod::Hungarian),
            "sinkpit" => Ok(SolveMethod::Sinkpit),
            "probpit" => Ok(SolveMethod::Probpit),
            other => Err(Failure::Usage(format!(
                "unknown method {other:?}; expected brute, hungarian, sinkpit or probpit"
            ))),
        }
    }
}

fn load_costs(a: &SolveArgs, file: &FileConfig) -> CliResult<CostMatrix> {
    match (&a.cost, a.sources.is_empty(), a.estimates.is_empty()) {
        (Some(path), true, true) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Lib(io_error(path, e)))?;
            Ok(CostMatrix::from_csv(&text)?)
        }
        (None, false, false) => {
            let rate = a.sample_rate.or(file.sample_rate).unwrap_or(DEFAULT_SAMPLE_RATE);
            let load = |paths: &[PathBuf]| -> CliResult<Vec<_>> {
                paths
                    .iter()
                    .map(|p| Ok(load_waveform(p, AudioFormat::from_path(p), rate)?))
                    .collect()
            };
            let opts = SiSdrOptions {
                zero_mean: a.zero_mean || file.zero_mean.unwrap_or(false),
                ..Default::default()
            };
            Ok(pairwise_cost_matrix_with(
                &load(&a.sources)?,
                &load(&a.estimates)?,
                &opts,
            )?)
        }
        _ => Err(Failure::Usage(
            "give either a cost CSV or both --sources and --estimates".into(),
        )),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn solve(a: SolveArgs, file: FileConfig) -> CliResult {
    let c = load_costs(&a, &file)?;
    let n = c.n();
    let all = a.all || file.all.unwrap_or(false);
    let methods = if all {
        let mut m = vec![SolveMethod::Hungarian, SolveMethod::Sinkpit];
        if n <= BRUTE_FORCE_CAP {
            m.insert(0, SolveMethod::Brute);
            m.push(SolveMethod::Probpit);
        } else {
            eprintln!("skipping brute and probpit: N = {n} exceeds {BRUTE_FORCE_CAP}");
        }
        m
    } else {
        vec![a
            .method
            .clone()
            .or(file.method.clone())
            .as_deref()
            .unwrap_or("hungarian")
            .parse()?]
    };
    let cfg = sinkhorn_config(&a.common, &file, 1.0)?;
    let gamma = a.gamma.or(file.gamma).unwrap_or(DEFAULT_GAMMA);

    let mut results = Vec::new();
    for m in methods {
        results.push(match m {
            SolveMethod::Brute | SolveMethod::Hungarian => {
                let (name, r) = if m == SolveMethod::Brute {
                    ("brute_force", brute_force_pit(&c)?)
                } else {
                    ("hungarian", hungarian(&c))
                };
                MethodReport {
                    method: name,
                    loss: r.mean_cost,
                    total_cost: Some(r.total_cost),
                    permutation: Some(one_based(&r.permutation)),
                    plan: None,
                }
            }
            SolveMethod::Sinkpit => {
                let plan = sinkhorn_iterate(&c, &cfg)?.plan();
                let b = plan.matrix();
                let column_sums = (0..n).map(|j| (0..n).map(|i| b[(i, j)]).sum()).collect();
                MethodReport {
                    method: "sinkpit",
                    loss: sinkpit_loss(&c, &cfg)?,
                    total_cost: None,
                    permutation: Some(one_based(&round_plan(&plan))),
                    plan: Some(PlanSummary {
                        row_sums: b.rows().map(|r| r.iter().sum()).collect(),
                        column_sums,
                        max_deviation: plan.marginal_deviation(),
                    }),
                }
            }
            SolveMethod::Probpit => MethodReport {
                method: "probpit",
                loss: probpit_loss(&c, gamma, &PermutationPrior::Flat)?,
                total_cost: None,
                permutation: None,
                plan: None,
            },
        });
    }
    let agreement = all.then(|| SolveReport::agreement_of(&results));
    let report = SolveReport { n, results, agreement };
    let text = match a.common.format.or(file.format).unwrap_or(Format::Text) {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
        Format::Json => to_json(&report),
    };
    emit(a.common.out.or(file.out).as_deref(), &text)
}

#[derive(Serialize)]
struct ScheduleRow {
    epoch: usize,
    beta: f64,
}

fn schedule(a: ScheduleArgs, file: FileConfig) -> CliResult {
    let epochs = a.epochs.or(file.epochs).unwrap_or(DEFAULT_SCHEDULE_EPOCHS);
    if epochs == 0 {
        return Err(Failure::Usage("epochs must be at least 1".into()));
    }
    let defaults = AnnealSchedule::default();
    let sched = AnnealSchedule::new(
        a.base.or(file.base).unwrap_or(defaults.base),
        a.common.beta.or(file.beta).unwrap_or(defaults.cap),
    )?;
    let rows: Vec<ScheduleRow> = (0..epochs)
        .map(|epoch| ScheduleRow {
            epoch,
            beta: sinkpit::anneal_beta(epoch, &sched),
        })
        .collect();
    let text = match a.common.format.or(file.format).unwrap_or(Format::Text) {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("epoch,beta\n");
            for r in &rows {
                s.push_str(&format!("{},{:?}\n", r.epoch, r.beta));
            }
            s
        }
        Format::Text => {
            let mut s = format!("{:>6}  beta\n", "epoch");
            for r in &rows {
                s.push_str(&format!("{:>6}  {:?}\n", r.epoch, r.beta));
            }
            s
        }
    };
    emit(a.common.out.or(file.out).as_deref(), &text)
}

#[derive(Serialize)]
struct DemoSummary {
    n: usize,
    seed: u64,
    epochs: usize,
    final_beta: f64,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    baseline_si_sdr: f64,
    final_si_sdr: f64,
    si_sdr_improvement: f64,
    /// 1-based.
    final_permutation: Vec<usize>,
}

#[derive(Serialize)]
struct DemoFile<'a> {
    seed: u64,
    learning_rate: f64,
    iterations: usize,
    beta_cap: f64,
    segments: usize,
    report: &'a DemixReport,
}

fn demo(a: DemoArgs, file: FileConfig) -> CliResult {
    let defaults = DemixConfig::default();
    let deterministic = a.deterministic || file.deterministic.unwrap_or(false);
    let cap = a.common.beta.or(file.beta).unwrap_or(defaults.schedule.cap);
    let cfg = DemixConfig {
        n: a.n.or(file.n).unwrap_or(defaults.n),
        seconds: a.seconds.or(file.seconds).unwrap_or(defaults.seconds),
        sample_rate: a.sample_rate.or(file.sample_rate).unwrap_or(defaults.sample_rate),
        seed: a.common.seed.or(file.seed).unwrap_or(defaults.seed),
        epochs: a.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        learning_rate: a.lr.or(file.lr).unwrap_or(defaults.learning_rate),
        iterations: a.common.iterations.or(file.iterations).unwrap_or(defaults.iterations),
        schedule: AnnealSchedule::new(defaults.schedule.base, cap)?,
        segments: a.segments.or(file.segments).unwrap_or(defaults.segments),
        threads: if deterministic {
            1
        } else {
            a.threads.or(file.threads).unwrap_or(defaults.threads)
        },
        ..defaults
    };
    let out_dir = a.common.out.or(file.out).unwrap_or_else(|| PathBuf::from("demix-out"));
    let report = run_demix(&cfg)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::Lib(io_error(&out_dir, e)))?;
    let w_path = out_dir.join("w.csv");
    let report_path = out_dir.join("report.json");
    let full = DemoFile {
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        iterations: cfg.iterations,
        beta_cap: cap,
        segments: cfg.segments,
        report: &report,
    };
    write_atomically(&w_path, report.state.w.to_csv().as_bytes())?;
    if let Err(e) = write_atomically(&report_path, to_json(&full).as_bytes()) {
        let _ = std::fs::remove_file(&w_path);
        return Err(e.into());
    }

    let history = &report.state.loss_history;
    let summary = DemoSummary {
        n: cfg.n,
        seed: cfg.seed,
        epochs: report.state.epoch,
        final_beta: report.state.beta,
        first_loss: history.first().copied(),
        final_loss: history.last().copied(),
        baseline_si_sdr: report.baseline_si_sdr,
        final_si_sdr: report.final_si_sdr,
        si_sdr_improvement: report.si_sdr_improvement,
        final_permutation: one_based(&report.final_permutation),
    };
    let text = match a.common.format.or(file.format).unwrap_or(Format::Text) {
        Format::Json => to_json(&summary),
        Format::Csv => format!(
            "n,seed,epochs,final_beta,final_loss,baseline_si_sdr,final_si_sdr,si_sdr_improvement\n\
             {},{},{},{:?},{:?},{:?},{:?},{:?}\n",
            summary.n,
            summary.seed,
            summary.epochs,
            summary.final_beta,
            summary.final_loss.unwrap_or(f64::NAN),
            summary.baseline_si_sdr,
            summary.final_si_sdr,
            summary.si_sdr_improvement
        ),
        Format::Text => format!(
            "epochs {} (final beta {:.3})\nloss {:.4} -> {:.4}\nSI-SDR {:.2} dB -> {:.2} dB, improvement {:.2} dB\n\
             permutation {}\nwrote {} and {}\n",
            summary.epochs,
            summary.final_beta,
            summary.first_loss.unwrap_or(f64::NAN),
            summary.final_loss.unwrap_or(f64::NAN),
            summary.baseline_si_sdr,
            summary.final_si_sdr,
            summary.si_sdr_improvement,
            cycle_form(&summary.final_permutation),
            w_path.display(),
            report_path.display()
        ),
    };
    emit(None, &text)
}
