fn main() {
    std::process::exit(ipoc_vpc::cli::run(std::env::args_os()));
}
