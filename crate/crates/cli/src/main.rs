use clap::Parser;
use faceforge_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FACEFORGE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => {}
        Err(e) => {
            log::error!("{e}");
            eprintln!("faceforge: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
