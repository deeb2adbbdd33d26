fn main() {
    std::process::exit(stmfa::cli::run(std::env::args_os()));
}
