use clap::Parser;

fn main() -> std::process::ExitCode {
    env_logger::init();
    let cli = lensless3d::cli::Cli::parse();
    std::process::ExitCode::from(lensless3d::cli::run(cli) as u8)
}
