fn main() {
    std::process::exit(fedgdp_cli::run(std::env::args_os()));
}
