fn main() {
    std::process::exit(iape_cli::run(std::env::args_os()));
}
