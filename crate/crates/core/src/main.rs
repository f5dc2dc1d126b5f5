fn main() {
    std::process::exit(advgame::cli::main_with_args(std::env::args_os()));
}
