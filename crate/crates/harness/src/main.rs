fn main() {
    std::process::exit(ail_harness::cli::run(std::env::args_os()));
}
