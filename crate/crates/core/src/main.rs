fn main() {
    std::process::exit(semprompt::cli::run(std::env::args_os()));
}
