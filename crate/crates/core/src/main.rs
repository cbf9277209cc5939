use clap::Parser;
use pfaffian::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
