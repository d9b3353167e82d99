fn main() {
    std::process::exit(cvek::cli::cli_main(std::env::args_os()));
}
