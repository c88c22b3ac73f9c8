fn main() {
    std::process::exit(grains::cli::run(std::env::args_os()));
}
