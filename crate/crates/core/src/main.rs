fn main() {
    std::process::exit(sepcont::cli::run(std::env::args_os()));
}
