fn main() {
    std::process::exit(emitter_entanglement::cli::main_with_args(std::env::args_os()));
}
