fn main() {
    std::process::exit(dualnup::cli::main_with_args(std::env::args_os()));
}
