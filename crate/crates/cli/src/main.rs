fn main() {
    std::process::exit(signbt_cli::run(std::env::args_os()));
}
