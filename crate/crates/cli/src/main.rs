use clap::Parser;

fn main() {
    let cli = dro_ci_cli::Cli::parse();
    match dro_ci_cli::execute(cli) {
        Ok(out) => println!("{out}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
