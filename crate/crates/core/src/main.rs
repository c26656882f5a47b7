fn main() {
    std::process::exit(transmeter::cli::run(std::env::args_os()));
}
