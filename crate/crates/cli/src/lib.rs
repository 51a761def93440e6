//! Command-line pipeline and HTTP API over a refground store.

pub mod commands;
pub mod remote;
pub mod server;
pub mod store;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use refground::analysis::UnificationMode;
use refground::annotation::QuantificationalSpeakerId;
use refground::eval::PositiveClass;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Diagnostics at error severity were reported.
    Failed,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "refground", version, about = "Reference-grounding annotation pipeline")]
pub struct Cli {
    /// Store root directory.
    #[arg(long, global = true, default_value = ".")]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read interchange JSONL from a directory, validate it and copy it into the store.
    Ingest {
        /// Directory holding the six interchange files.
        #[arg(long)]
        from: PathBuf,
        /// Lexical-variant registry; defaults to `<from>/registry.jsonl` when present.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        provenance: Option<String>,
    },
    /// Assign unified landmark ids and classify discrepancies.
    AssignIds {
        /// Absolute matching distance in map units.
        #[arg(long, conflicts_with = "epsilon_fraction")]
        epsilon: Option<f64>,
        /// Matching distance as a fraction of the map diagonal.
        #[arg(long, default_value_t = 0.02)]
        epsilon_fraction: f64,
    },
    /// Render one prompt per transaction that holds a reference expression.
    BuildPrompts {
        /// TOML overriding parts of the default prompt text.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_from_str::<QuantificationalSpeakerId>, default_value = "optional")]
        quantificational_speaker_id: QuantificationalSpeakerId,
    },
    /// Annotate every prompt into a new run.
    Annotate(ProviderArgs),
    /// Re-request only the REs a run left missing, into a new run.
    Repair {
        /// Run to repair; defaults to the latest.
        #[arg(long)]
        run: Option<String>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Validate a corpus directory, the stored corpus, and optionally records or gold.
    Validate {
        /// Validate this interchange directory instead of the stored corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Validate the records of this run.
        #[arg(long, conflicts_with = "records")]
        run: Option<String>,
        /// Validate records from a JSONL file.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Validate gold records from a JSONL file.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Write the understanding state of every record.
    DeriveStates {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_parser = parse_from_str::<UnificationMode>, default_value = "unified")]
        mode: UnificationMode,
    },
    /// Write the full report bundle for a run.
    Analyze {
        #[arg(long)]
        run: Option<String>,
        /// Output directory; defaults to `reports/<run>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a run against gold records.
    Eval {
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value_t = PositiveArg::True)]
        positive_class: PositiveArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Run whose records are shown as machine annotations; defaults to the latest.
        #[arg(long)]
        run: Option<String>,
        /// Directory of built UI assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Mock)]
    pub provider: ProviderKind,
    #[arg(long, value_enum, default_value_t = MockPolicyArg::EchoSpeaker)]
    pub mock_policy: MockPolicyArg,
    /// JSONL of canned records for the scripted mock policy.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Provider settings TOML (model, parallelism, retry, parameters).
    #[arg(long)]
    pub provider_config: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Id of the new run; defaults to a UTC timestamp.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MockPolicyArg {
    EchoSpeaker,
    NearestInstance,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PositiveArg {
    True,
    False,
}

impl From<PositiveArg> for PositiveClass {
    fn from(p: PositiveArg) -> Self {
        match p {
            PositiveArg::True => PositiveClass::True,
            PositiveArg::False => PositiveClass::False,
        }
    }
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(cli) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::Failed) => EXIT_DIAGNOSTICS,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DIAGNOSTICS
        }
    }
}
