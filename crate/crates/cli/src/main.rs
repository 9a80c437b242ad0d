fn main() {
    std::process::exit(capsvm_cli::cli_main(std::env::args_os()));
}
