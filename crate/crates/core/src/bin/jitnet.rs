fn main() {
    std::process::exit(jitnet::cli::run(std::env::args_os()));
}
