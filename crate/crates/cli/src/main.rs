use clap::Parser;

fn main() {
    let cli = fvk_cli::Cli::parse();
    if let Err(e) = fvk_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
