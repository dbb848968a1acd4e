fn main() {
    std::process::exit(fastwave::cli::run_cli(std::env::args_os()));
}
