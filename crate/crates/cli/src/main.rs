use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match predset_cli::parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let msg = e.to_string();
            // help and version requests are not errors
            if msg.starts_with("Usage") || msg.contains("\nUsage:") && !msg.starts_with("error") {
                print!("{msg}");
                return ExitCode::SUCCESS;
            }
            eprint!("{msg}");
            return ExitCode::from(2);
        }
    };
    match predset_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<predset_core::Error>() {
                Some(core) => eprintln!("error [{}]: {core}", core.kind()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
