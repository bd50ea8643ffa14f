use clap::Parser;

fn main() {
    std::process::exit(awe::cli::main_with(awe::cli::Cli::parse()));
}
