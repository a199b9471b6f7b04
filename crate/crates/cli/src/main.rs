fn main() {
    std::process::exit(tile4f_cli::run(std::env::args_os()));
}
