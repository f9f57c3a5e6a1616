fn main() {
    std::process::exit(cap_lab::cli::run(std::env::args_os()));
}
