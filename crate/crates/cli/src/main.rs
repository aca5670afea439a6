use clap::Parser;

fn main() {
    let cli = qra_cli::Cli::parse();
    let token = std::env::var(qra_cli::TOKEN_ENV).ok().filter(|t| !t.trim().is_empty());
    if let Err(e) = qra_cli::run(cli, token) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
