use clap::Parser;

fn main() {
    let cli = boxword::cli::Cli::parse();
    if let Err(err) = boxword::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
