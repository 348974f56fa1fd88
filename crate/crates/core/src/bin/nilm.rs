fn main() {
    std::process::exit(nilm::cli::cli(std::env::args_os()));
}
