fn main() {
    std::process::exit(traitgrade::cli::main_with_args(std::env::args_os()));
}
