fn main() {
    std::process::exit(hemobench::cli::run(std::env::args_os()));
}
