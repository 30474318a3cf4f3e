use std::path::PathBuf;

use clap::Parser;

/// Config-driven analysis of the oxygen-plankton model.
#[derive(Parser)]
#[command(name = "oxydyn", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides "output" in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    std::process::exit(oxydyn_cli::execute(&args.config, args.out.as_deref()));
}
