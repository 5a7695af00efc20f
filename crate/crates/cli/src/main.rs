fn main() {
    std::process::exit(anomgen_cli::run(std::env::args_os()));
}
