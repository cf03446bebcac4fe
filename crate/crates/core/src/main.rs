fn main() {
    std::process::exit(dynlogit::cli::run(std::env::args_os()));
}
