fn main() {
    std::process::exit(ktrap_cli::run(std::env::args_os()));
}
