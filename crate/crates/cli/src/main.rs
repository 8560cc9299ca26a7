fn main() {
    std::process::exit(egogen_cli::run_from(std::env::args_os()));
}
