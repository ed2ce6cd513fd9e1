fn main() {
    std::process::exit(mshift::cli::run(std::env::args_os()));
}
