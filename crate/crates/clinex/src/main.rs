fn main() {
    std::process::exit(clinex::cli::run(std::env::args_os()));
}
