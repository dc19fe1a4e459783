fn main() {
    std::process::exit(igmn::cli::main_with_args(std::env::args_os()));
}
