fn main() {
    std::process::exit(typicality_lab::cli::run(std::env::args_os()));
}
