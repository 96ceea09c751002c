fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(spt::cli::run(std::env::args_os()))
}
