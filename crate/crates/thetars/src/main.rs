fn main() {
    std::process::exit(thetars::cli::run(std::env::args_os()));
}
