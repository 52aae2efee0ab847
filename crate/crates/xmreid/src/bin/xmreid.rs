fn main() {
    std::process::exit(xmreid::cli::run(std::env::args_os()));
}
