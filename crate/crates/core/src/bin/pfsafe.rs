fn main() {
    std::process::exit(powerflow_safety::cli::run_cli(std::env::args_os()));
}
