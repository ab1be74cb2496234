use clap::Parser;

fn main() {
    std::process::exit(sqfilm::cli::run(sqfilm::cli::Cli::parse()));
}
