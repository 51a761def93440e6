fn main() {
    std::process::exit(refground_cli::run(std::env::args_os()));
}
