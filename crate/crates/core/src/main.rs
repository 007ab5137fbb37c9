fn main() {
    std::process::exit(provsketch::cli::run(std::env::args_os()));
}
