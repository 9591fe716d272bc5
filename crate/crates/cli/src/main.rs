use clap::Parser;

fn main() {
    let cli = tutorgrade_cli::Cli::parse();
    if let Err(e) = tutorgrade_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
