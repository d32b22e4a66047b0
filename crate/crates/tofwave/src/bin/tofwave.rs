fn main() {
    std::process::exit(tofwave::cli::cli_main(std::env::args_os()));
}
