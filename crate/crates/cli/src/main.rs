use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gameclaims::valuation::HedgeSide;
use gameclaims_cli::commands::{execute, parse_state, CommandKind, Request};
use gameclaims_cli::config::{load_config, Numeric};
use gameclaims_cli::report::Report;
use gameclaims_cli::{CliError, EXIT_EMPTY};

#[derive(Debug, Parser)]
#[command(name = "gameclaims", version, about = "Arbitrage pricing of multi-player game contingent claims")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Output {
    Human,
    Structured,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Issuer,
    Holder,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Contract configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Start state as DATE:NODE.
    #[arg(long)]
    state: Option<String>,
    /// Numeric back-end; overrides the configuration.
    #[arg(long)]
    mode: Option<Mode>,
    /// Enumeration budget; overrides the configuration.
    #[arg(long)]
    budget: Option<u128>,
    #[arg(long, value_enum, default_value_t = Output::Human)]
    output: Output,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lower and upper prices of single players, or of one coalition.
    Price {
        #[command(flatten)]
        common: Common,
        /// 1-based members, e.g. 1,3.
        #[arg(long)]
        coalition: Option<String>,
    },
    /// Price interval of a coalition (default: everyone) with attaining moves.
    Interval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        coalition: Option<String>,
    },
    /// Optimal equilibrium values and coalition prices.
    Equilibrium {
        #[command(flatten)]
        common: Common,
    },
    /// Super-hedge of a coalition's payoff, simulated on every market path.
    Hedge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        coalition: Option<String>,
        #[arg(long, value_enum, default_value_t = SideArg::Issuer)]
        side: SideArg,
    },
    /// Equilibrium values of puttable tranches.
    ValueTranches {
        #[command(flatten)]
        common: Common,
        /// Also verify the saddle inequalities exhaustively.
        #[arg(long)]
        check: bool,
    },
    /// Joint feasibility of all coalition bounds, and quote classification.
    CheckArbitrage {
        #[command(flatten)]
        common: Common,
        /// Single-tranche quotes, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        quote: Option<String>,
        /// Separate quote for a combined tranche, as MEMBERS=PRICE (repeatable).
        #[arg(long)]
        combined: Vec<String>,
        /// Exit with status 5 when no price vector is consistent.
        #[arg(long)]
        fail_on_empty: bool,
    },
}

fn request(command: &Command) -> (Request, &Common, bool) {
    let (kind, common) = match command {
        Command::Price { common, .. } => (CommandKind::Price, common),
        Command::Interval { common, .. } => (CommandKind::Interval, common),
        Command::Equilibrium { common } => (CommandKind::Equilibrium, common),
        Command::Hedge { common, .. } => (CommandKind::Hedge, common),
        Command::ValueTranches { common, .. } => (CommandKind::ValueTranches, common),
        Command::CheckArbitrage { common, .. } => (CommandKind::CheckArbitrage, common),
    };
    let mut req = Request::new(kind);
    req.numeric = common.mode.map(|m| match m {
        Mode::Rational => Numeric::Rational,
        Mode::Float => Numeric::Float,
    });
    req.budget = common.budget;
    let mut fail_on_empty = false;
    match command {
        Command::Price { coalition, .. } | Command::Interval { coalition, .. } => req.coalition = coalition.clone(),
        Command::Hedge { coalition, side, .. } => {
            req.coalition = coalition.clone();
            req.side = match side {
                SideArg::Issuer => HedgeSide::Issuer,
                SideArg::Holder => HedgeSide::Holder,
            };
        }
        Command::ValueTranches { check, .. } => req.check = *check,
        Command::CheckArbitrage {
            quote,
            combined,
            fail_on_empty: fail,
            ..
        } => {
            req.quote = quote.clone();
            req.combined = combined.clone();
            fail_on_empty = *fail;
        }
        Command::Equilibrium { .. } => {}
    }
    (req, common, fail_on_empty)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let (mut req, common, fail_on_empty) = request(&cli.command);
    req.state = common.state.as_deref().map(parse_state).transpose()?;
    let config = load_config(&common.config)?;
    let envelope = execute(&config, &req)?;
    let text = match common.output {
        Output::Human => envelope.to_human(),
        Output::Structured => envelope.to_json() + "\n",
    };
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    let empty = matches!(&envelope.report, Report::Feasibility(f) if !f.feasible);
    Ok(if empty && fail_on_empty { EXIT_EMPTY } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
