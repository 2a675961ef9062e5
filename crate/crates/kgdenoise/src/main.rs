fn main() {
    std::process::exit(kgdenoise::cli::run(std::env::args_os()));
}
