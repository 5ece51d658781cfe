use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurotrack::analysis::RateKind;
use neurotrack::Condition;
use neurotrack_cli::commands;
use neurotrack_cli::pipeline::CellReport;
use neurotrack_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "neurotrack", version, about = "Rate-distortion analysis of stimulus decoding from EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic competing-talker dataset to --data.
    Simulate(Common),
    /// Fit one decoder per subject and condition.
    Train(Common),
    /// Reconstruct every trial and compute its rates.
    Rates(Common),
    /// KDE, binned curves and fits from the rate-distortion points.
    Report(Common),
    /// simulate, train, rates and report.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Results directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ConditionArg::Both)]
    condition: ConditionArg,
    /// Restrict the report to one rate kind.
    #[arg(long, value_enum)]
    rate_kind: Option<RateKindArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Attended,
    Distractor,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateKindArg {
    #[value(name = "S_to_Shat")]
    SToShat,
    #[value(name = "E_to_Shat")]
    EToShat,
    #[value(name = "S_to_E")]
    SToE,
    #[value(name = "Rmin")]
    Rmin,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn conditions(&self) -> Vec<Condition> {
        match self.condition {
            ConditionArg::Attended => vec![Condition::Attended],
            ConditionArg::Distractor => vec![Condition::Distractor],
            ConditionArg::Both => vec![Condition::Attended, Condition::Distractor],
        }
    }

    fn kinds(&self) -> Vec<RateKind> {
        match self.rate_kind {
            None => RateKind::ALL.to_vec(),
            Some(RateKindArg::SToShat) => vec![RateKind::SToShat],
            Some(RateKindArg::EToShat) => vec![RateKind::EToShat],
            Some(RateKindArg::SToE) => vec![RateKind::SToE],
            Some(RateKindArg::Rmin) => vec![RateKind::Rmin],
        }
    }
}

fn print_cells(cells: &[CellReport]) {
    for c in cells {
        match &c.analysis {
            Ok(a) => println!(
                "{:<10} {:<9} slope {:>9.3} dB/bit  p {:.3e}  n {}",
                c.condition, c.rate_kind, a.fit.slope, a.fit.p_value, a.n_in_support
            ),
            Err(e) => eprintln!("{:<10} {:<9} failed: {e}", c.condition, c.rate_kind),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let n = commands::cmd_simulate(&a.config()?, &a.data)?;
            println!("wrote {n} trials to {}", a.data.display());
        }
        Command::Train(a) => {
            let n = commands::cmd_train(&a.config()?, &a.data, &a.out, &a.conditions())?;
            println!("wrote {n} decoders to {}", a.out.join(commands::DECODER_DIR).display());
        }
        Command::Rates(a) => {
            let n = commands::cmd_rates(&a.config()?, &a.data, &a.out, &a.conditions())?;
            println!("wrote {n} rate bundles to {}", a.out.display());
        }
        Command::Report(a) => print_cells(&commands::cmd_report(&a.config()?, &a.out, &a.conditions(), &a.kinds())?),
        Command::All(a) => print_cells(&commands::cmd_all(&a.config()?, &a.data, &a.out, &a.conditions(), &a.kinds())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
