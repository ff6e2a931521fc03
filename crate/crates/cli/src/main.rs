mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sierra_core::auth::Role;

/// Remote monitoring backend: device ingestion, questionnaires,
/// visualization streams and an MLP toolkit behind one HTTP service.
#[derive(Parser, Debug)]
#[command(name = "sierra", version)]
struct Cli {
    /// Data directory shared by every command.
    #[arg(long, global = true, env = "SIERRA_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
    /// Create a user; the password is read from the first line of stdin.
    Useradd(UseraddArgs),
    /// Manage monitored subjects.
    #[command(subcommand)]
    Subject(SubjectCommand),
    /// Check or install questionnaire definitions.
    #[command(subcommand)]
    Quest(QuestCommand),
    /// Bulk-load a `channel,t_ms,value` CSV for one subject.
    Ingest(IngestArgs),
    /// Train an MLP on a CSV dataset and report its loss and confusion matrix.
    Train(TrainArgs),
    /// Write a series window as `channel,t_ms,value` CSV on stdout.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Device credential as KEY=DEVICE_ID; repeatable.
    #[arg(long = "device-key", value_name = "KEY=DEVICE")]
    device_keys: Vec<String>,
    #[arg(long, default_value_t = 12.0)]
    session_ttl_hours: f64,
}

#[derive(Args, Debug)]
struct UseraddArgs {
    username: String,
    #[arg(long)]
    role: Role,
    /// Subject the account belongs to; required for the subject role.
    #[arg(long)]
    subject: Option<String>,
}

#[derive(Subcommand, Debug)]
enum SubjectCommand {
    /// Register a subject. PHI fields are encrypted with the master key.
    Add {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        cohort: String,
        /// PHI field as NAME=VALUE; repeatable.
        #[arg(long = "phi", value_name = "NAME=VALUE")]
        phi: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum QuestCommand {
    /// Parse a definition and report the first error as file:line.
    Validate { file: PathBuf },
    /// Validate, then store a definition.
    Load { file: PathBuf },
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    subject: String,
    #[arg(long)]
    device: String,
    /// Sequence number of the first 10,000-row chunk; later chunks count up.
    #[arg(long, default_value_t = 0)]
    seq_start: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ActivationArg {
    Relu,
    Tanh,
    Identity,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TaskArg {
    Classification,
    Regression,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Layer sizes including input and output, e.g. 2,8,2.
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    #[arg(long, value_enum, default_value = "classification")]
    task: TaskArg,
    /// Fraction of rows held out for evaluation.
    #[arg(long, default_value_t = 0.0)]
    test_fraction: f64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    subject: String,
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    t0: i64,
    #[arg(long, default_value_t = sierra_core::model::MAX_TIMESTAMP_MS, allow_negative_numbers = true)]
    t1: i64,
}

/// Exit status: 0 success, 1 validation or runtime failure, 2 usage error.
pub enum Failure {
    Invalid(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Invalid(msg) | Failure::Usage(msg) => eprintln!("{msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
