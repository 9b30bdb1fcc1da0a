use clap::Parser;

fn main() {
    let cli = advmatch::cli::Cli::parse();
    std::process::exit(advmatch::cli::run(&cli));
}
