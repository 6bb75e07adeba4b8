fn main() {
    std::process::exit(lpw::cli::run(std::env::args_os()));
}
