use clap::Parser;
use cmcal_cli::commands::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cmcal_cli::commands::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
