fn main() {
    std::process::exit(sgan_cli::dispatch(std::env::args_os()));
}
