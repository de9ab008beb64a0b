fn main() {
    std::process::exit(modelscore::cli::run(std::env::args_os()));
}
