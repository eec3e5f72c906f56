fn main() {
    std::process::exit(ladder_phase::cli::run(std::env::args_os()));
}
