use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmqubit_cli::{output_root, record, registry, CliError, Format, RunConfig, RunRecord};

#[derive(Parser)]
#[command(name = "mmqubit", version, about = "Synthetic experiments on a millimeter-wave transmon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// List registered experiments.
    List,
    /// Write plot data for a saved record (file or run directory).
    Emit {
        record: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Target directory; defaults to the record's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::List => {
            for line in registry::listing() {
                println!("{line}");
            }
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let art = mmqubit_cli::run(&cfg, &output_root())?;
            println!("{} {} -> {}", art.record.experiment, &art.record.config_hash[..12], art.dir.display());
            for (name, fit) in &art.record.fits {
                if name.starts_with("lines_row") {
                    continue;
                }
                let params: Vec<String> = fit
                    .parameters
                    .iter()
                    .map(|(k, e)| match e.value {
                        Some(v) => format!("{k}={v:.6}"),
                        None => format!("{k}=n/a"),
                    })
                    .collect();
                let status = fit.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
                println!("  fit {name}: {}{status}", params.join(" "));
            }
        }
        Command::Emit { record: path, format, out } => {
            let rec = RunRecord::load(&path)?;
            let dir = out.unwrap_or_else(|| {
                if path.is_dir() {
                    path.clone()
                } else {
                    path.parent().map(PathBuf::from).unwrap_or_default()
                }
            });
            for f in record::emit(&rec, format, &dir)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmqubit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
