fn main() -> std::process::ExitCode {
    rowtsm_cli::run(std::env::args_os())
}
