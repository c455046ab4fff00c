fn main() {
    std::process::exit(attverify::cli::main_with(std::env::args_os()));
}
