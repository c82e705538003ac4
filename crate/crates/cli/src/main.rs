use clap::Parser;
use proce_cli::{exit_code, run, Cli, Outcome, EXIT_INVALID, EXIT_OK, EXIT_USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match run(&cli) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Invalid { invalid, total }) => {
            eprintln!("{invalid} of {total} counterfactuals are invalid");
            EXIT_INVALID
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
