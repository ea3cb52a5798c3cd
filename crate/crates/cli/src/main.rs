fn main() {
    std::process::exit(momentbound_cli::run(std::env::args_os()));
}
