use clap::Parser;

fn main() {
    std::process::exit(circfit::cli::run(circfit::cli::Cli::parse()));
}
