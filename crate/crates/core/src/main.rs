fn main() -> std::process::ExitCode {
    navgraph::cli::main_with_args(std::env::args_os())
}
