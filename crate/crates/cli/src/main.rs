fn main() {
    std::process::exit(hmtc_cli::run(std::env::args_os()));
}
