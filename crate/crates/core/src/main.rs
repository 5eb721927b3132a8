use clap::Parser;
use kernel_bounds::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
