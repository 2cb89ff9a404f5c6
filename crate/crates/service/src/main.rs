use clap::Parser;
use steamflood_service::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        match serde_json::to_string(&e.report()) {
            Ok(json) => eprintln!("{json}"),
            Err(_) => eprintln!("{e}"),
        }
        std::process::exit(e.exit_code());
    }
}
