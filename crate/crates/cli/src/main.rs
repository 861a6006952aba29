fn main() {
    std::process::exit(taplab_cli::main_with(std::env::args_os()));
}
