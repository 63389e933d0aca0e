use clap::{Args, Parser, Subcommand, ValueEnum};
use poq_runner::{
    ih_diag, run, serve, CgAdversary, Job, P1Adversary, RazStrategyKind, RunConfig, RunnerError,
    ServeRole, Transport,
};
use poq_core::clawgen::Mode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "poq",
    about = "Desk-scale simulator and adversary workbench for two \
             proof-of-quantumness protocols against space-bounded provers",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run trials in one process (in-process pairing or TCP loopback).
    Run(RunArgs),
    /// Run one endpoint of a cross-process session over TCP.
    Serve(ServeArgs),
    /// Exact optimal value of the interactive-hashing adversary game.
    IhDiag(IhDiagArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ProtocolArg {
    Poq1,
    Clawgen,
    Poq2,
    Raz,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    Rejection,
    Accelerated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AdversaryArg {
    Honest,
    LinearMemory,
    Unbounded,
    Subset,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StrategyArg {
    GaussianElim,
    StoreFirstJ,
    ZeroMemory,
    OverBudget,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RoleArg {
    Verifier,
    Prover,
}

#[derive(Args)]
struct JobArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    /// Secret length for the parity protocol, or register width for the
    /// streaming-learning experiment.
    #[arg(long)]
    n: Option<usize>,
    /// Number of stitched rounds for the claw protocols.
    #[arg(long)]
    lambda: Option<usize>,
    /// Stream length per round; must be a power of two, at least 2.
    #[arg(long)]
    k: Option<usize>,
    /// Advertised adversary memory bound carried in the parameters.
    #[arg(long, default_value_t = 0)]
    m_bits: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Rejection)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = AdversaryArg::Honest)]
    adversary: AdversaryArg,
    /// Stream prefix the subset attack is allowed to remember.
    #[arg(long)]
    window: Option<usize>,
    /// Inter-round memory cap in bits for audited adversaries, or the
    /// stored-bit budget for the streaming-learning experiment.
    #[arg(long)]
    capacity: Option<usize>,
    /// Number of equation rounds in the streaming-learning experiment.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::GaussianElim)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Enforce the soundness-regime parameter check with this constant.
    #[arg(long)]
    strict_c: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, value_enum, default_value_t = TransportArg::Inproc)]
    transport: TransportArg,
    /// Write one JSONL transcript per trial to this path.
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Address to bind (verifier role).
    #[arg(long)]
    listen: Option<String>,
    /// Address to dial (prover role).
    #[arg(long)]
    connect: Option<String>,
}

#[derive(Args)]
struct IhDiagArgs {
    #[arg(long)]
    k: usize,
    /// Target set as comma-separated indices in 1..=k.
    #[arg(long, value_delimiter = ',')]
    bset: Vec<usize>,
}

fn build_job(args: &JobArgs) -> Result<Job, RunnerError> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| RunnerError::Config(format!("--{flag} is required for this protocol")))
    };
    let mode = match args.mode {
        ModeArg::Rejection => Mode::Rejection,
        ModeArg::Accelerated => Mode::Accelerated,
    };
    match args.protocol {
        ProtocolArg::Poq1 => {
            let adversary = match args.adversary {
                AdversaryArg::Honest => P1Adversary::Honest,
                AdversaryArg::LinearMemory => P1Adversary::LinearMemory,
                AdversaryArg::Unbounded => P1Adversary::Unbounded,
                AdversaryArg::Subset => {
                    return Err(RunnerError::Config(
                        "the subset adversary plays the claw stream".into(),
                    ))
                }
            };
            Ok(Job::Poq1 {
                n: need(args.n, "n")?,
                adversary,
            })
        }
        ProtocolArg::Clawgen => {
            let adversary = match args.adversary {
                AdversaryArg::Honest => CgAdversary::Honest,
                AdversaryArg::Subset => CgAdversary::Subset {
                    window: args.window.ok_or_else(|| {
                        RunnerError::Config("--window is required for the subset adversary".into())
                    })?,
                    capacity: args.capacity,
                },
                _ => {
                    return Err(RunnerError::Config(
                        "that adversary plays the parity protocol".into(),
                    ))
                }
            };
            Ok(Job::Clawgen {
                lambda: need(args.lambda, "lambda")?,
                k: need(args.k, "k")?,
                m_bits: args.m_bits,
                mode,
                adversary,
            })
        }
        ProtocolArg::Poq2 => {
            if args.adversary != AdversaryArg::Honest {
                return Err(RunnerError::Config(
                    "adversaries target poq1 or clawgen directly".into(),
                ));
            }
            Ok(Job::Poq2 {
                lambda: need(args.lambda, "lambda")?,
                k: need(args.k, "k")?,
                m_bits: args.m_bits,
                mode,
            })
        }
        ProtocolArg::Raz => Ok(Job::Raz {
            n: need(args.n, "n")?,
            rounds: args.rounds.ok_or_else(|| {
                RunnerError::Config("--rounds is required for this experiment".into())
            })?,
            capacity: args.capacity,
            strategy: match args.strategy {
                StrategyArg::GaussianElim => RazStrategyKind::GaussianElim,
                StrategyArg::StoreFirstJ => RazStrategyKind::StoreFirstJ,
                StrategyArg::ZeroMemory => RazStrategyKind::ZeroMemory,
                StrategyArg::OverBudget => RazStrategyKind::OverBudget,
            },
        }),
    }
}

fn execute(cli: Cli) -> Result<serde_json::Value, RunnerError> {
    match cli.cmd {
        Cmd::Run(args) => {
            let config = RunConfig {
                job: build_job(&args.job)?,
                trials: args.job.trials,
                seed: args.job.seed,
                transport: match args.transport {
                    TransportArg::Inproc => Transport::Inproc,
                    TransportArg::Tcp => Transport::Tcp,
                },
                transcripts: args.transcripts,
                strict_c: args.job.strict_c,
            };
            let report = run(&config)?;
            Ok(serde_json::to_value(report).expect("report serializes"))
        }
        Cmd::Serve(args) => {
            let (role, endpoint) = match args.role {
                RoleArg::Verifier => (
                    ServeRole::Verifier,
                    args.listen.ok_or_else(|| {
                        RunnerError::Config("the verifier role needs --listen".into())
                    })?,
                ),
                RoleArg::Prover => (
                    ServeRole::Prover,
                    args.connect.ok_or_else(|| {
                        RunnerError::Config("the prover role needs --connect".into())
                    })?,
                ),
            };
            let config = RunConfig {
                job: build_job(&args.job)?,
                trials: args.job.trials,
                seed: args.job.seed,
                transport: Transport::Tcp,
                transcripts: None,
                strict_c: args.job.strict_c,
            };
            let report = serve(role, &endpoint, &config)?;
            Ok(serde_json::to_value(report).expect("report serializes"))
        }
        Cmd::IhDiag(args) => {
            let report = ih_diag(args.k, &args.bset)?;
            Ok(serde_json::to_value(report).expect("report serializes"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("valid json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
