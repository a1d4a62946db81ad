fn main() {
    std::process::exit(islet_sim::cli::run(std::env::args_os()));
}
