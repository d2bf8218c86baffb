fn main() {
    std::process::exit(transfuse::cli::run(std::env::args_os()));
}
