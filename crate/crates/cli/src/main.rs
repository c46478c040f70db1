fn main() {
    std::process::exit(copf_cli::run(std::env::args_os()));
}
