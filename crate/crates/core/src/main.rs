use clap::Parser;

fn main() {
    let cli = vecrad::cli::Cli::parse();
    match vecrad::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
