fn main() {
    std::process::exit(imagine::cli::main_with(std::env::args_os()));
}
