use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use reggraph_cli::commands::EXIT_CONFIG;
use reggraph_cli::{parse_config, run};

/// Evaluate, solve and learn with regularization graphs.
#[derive(Parser, Debug)]
#[command(name = "reggraph", version)]
struct Args {
    /// JSON run configuration, or `-` for stdin.
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Run seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn read_config(path: &PathBuf) -> std::io::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match read_config(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(o) = args.output {
        cfg.output = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match run(&cfg) {
        Ok(out) => {
            println!("{}", out.message);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}
