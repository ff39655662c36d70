fn main() {
    std::process::exit(echoscope::cli::run(std::env::args_os()));
}
