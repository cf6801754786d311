fn main() {
    std::process::exit(geowl::cli::main_with_args(std::env::args_os()));
}
