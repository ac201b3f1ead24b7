fn main() {
    std::process::exit(bevsel_core::cli::main_with(std::env::args_os()));
}
