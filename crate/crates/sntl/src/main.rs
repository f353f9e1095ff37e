fn main() {
    std::process::exit(sntl::cli::parse_and_dispatch(std::env::args_os()));
}
