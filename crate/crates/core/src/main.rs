use clap::Parser;

fn main() {
    let cli = hierpath::cli::Cli::parse();
    std::process::exit(hierpath::cli::main_with(cli));
}
