//! `pillar`: batch driver for kernel construction, SVM/MKL training, the
//! three-split fusion protocol and Fisher-vector encoding.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, missing or corrupt
//! inputs), 2 for internal failures or solver non-convergence under `--strict`.

/// `println!` that exits quietly once the reader of stdout has gone away.
macro_rules! out {
    ($($arg:tt)*) => {
        $crate::write_stdout(format_args!($($arg)*))
    };
}

mod commands;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "pillar",
    version,
    about = "Multiple kernel learning fusion over feature pillars"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded multi-pillar fixture with labels, three splits and a plan.
    Synth(SynthArgs),
    /// Build a normalized Gram matrix from a feature file.
    MakeKernels(MakeKernelsArgs),
    /// Train a one-vs-rest SVM on a precomputed kernel.
    TrainSvm(TrainSvmArgs),
    /// Learn kernel weights and a fused SVM over several precomputed kernels.
    TrainMkl(TrainMklArgs),
    /// Run the three-split evaluation described by a plan file.
    RunProtocol(RunProtocolArgs),
    /// Fit a GMM on pooled descriptors and Fisher-encode every descriptor set.
    EncodeFisher(EncodeFisherArgs),
    /// Print the header and invariant checks of any file this tool writes.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 400)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    pillars: usize,
    /// Feature dimension of every pillar.
    #[arg(long, default_value_t = 16)]
    dims: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MakeKernelsArgs {
    /// PLRF feature matrix.
    #[arg(long)]
    features: PathBuf,
    /// Output PLRK path; provenance goes to `<out>.meta`.
    #[arg(long)]
    out: PathBuf,
    /// `rbf` or `linear`.
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// `scale`, `median` or an explicit positive γ.
    #[arg(long, default_value = "scale")]
    gamma: String,
    /// `unit_mean_diag` or `none`.
    #[arg(long, default_value = "unit_mean_diag")]
    normalization: String,
    /// Scale feature rows to unit L2 norm first.
    #[arg(long)]
    l2norm: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SvmFlags {
    #[arg(long = "svm.C")]
    c: Option<f64>,
    #[arg(long = "svm.tol")]
    svm_tol: Option<f64>,
    #[arg(long = "svm.max_iter")]
    svm_max_iter: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct MklFlags {
    /// `l1` (SILP) or `l2`.
    #[arg(long = "fusion.norm")]
    norm: Option<String>,
    #[arg(long = "mkl.eps")]
    eps: Option<f64>,
    #[arg(long = "mkl.max_cuts")]
    max_cuts: Option<usize>,
    #[arg(long = "mkl.tol")]
    tol: Option<f64>,
    #[arg(long = "mkl.max_iter")]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainSvmArgs {
    /// PLRK kernel over all samples.
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Restrict training to the `train` rows of this split file.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Output PLSV model.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    svm: SvmFlags,
    /// Exit 2 if any binary problem hits the iteration limit.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct TrainMklArgs {
    /// PLRK kernels over the same samples (repeat the flag).
    #[arg(long = "kernel", required = true)]
    kernels: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Output PLMK model.
    #[arg(long)]
    out: PathBuf,
    /// Also write the solver trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    svm: SvmFlags,
    #[command(flatten)]
    mkl: MklFlags,
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct RunProtocolArgs {
    /// Plan file (`key = value` lines).
    #[arg(long)]
    plan: PathBuf,
    /// Output prefix: writes `<out>.report.json` and `<out>.accuracy.csv`.
    #[arg(long)]
    out: PathBuf,
    /// `flat` or `staged`.
    #[arg(long = "fusion.mode")]
    mode: Option<String>,
    #[command(flatten)]
    svm: SvmFlags,
    #[command(flatten)]
    mkl: MklFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other plan key, as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Exit 2 if any SVM or MKL solve stops before converging.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct EncodeFisherArgs {
    /// Text file listing one PLRF descriptor set per line.
    #[arg(long)]
    manifest: PathBuf,
    /// Mixture components.
    #[arg(long, default_value_t = pillar_core::fisher::DEFAULT_COMPONENTS)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output PLRF pillar, one Fisher vector per manifest entry.
    #[arg(long)]
    out: PathBuf,
    /// Output PLGM model (default: `<out>.plgm`).
    #[arg(long)]
    gmm: Option<PathBuf>,
    /// Skip the signed square root and L2 normalization.
    #[arg(long)]
    raw: bool,
    #[arg(long = "em.tol", default_value_t = 1e-6)]
    em_tol: f64,
    #[arg(long = "em.max_iter", default_value_t = 100)]
    em_max_iter: usize,
}

#[derive(Args, Debug)]
struct InspectArgs {
    file: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn user(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::MakeKernels(a) => commands::make_kernels(a),
        Command::TrainSvm(a) => commands::train_svm(a),
        Command::TrainMkl(a) => commands::train_mkl(a),
        Command::RunProtocol(a) => commands::run_protocol(a),
        Command::EncodeFisher(a) => commands::encode_fisher(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_stdout(args: std::fmt::Arguments) {
    let mut stdout = io::stdout().lock();
    if let Err(e) = stdout.write_fmt(args).and_then(|_| stdout.write_all(b"\n")) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(2);
    }
}
