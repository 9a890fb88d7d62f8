fn main() {
    std::process::exit(acnn::cli::run(std::env::args_os()));
}
