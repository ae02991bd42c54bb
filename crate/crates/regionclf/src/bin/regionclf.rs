fn main() {
    std::process::exit(regionclf::cli::run_from_args(std::env::args_os()));
}
