fn main() {
    std::process::exit(entroprune_cli::run(std::env::args_os()));
}
