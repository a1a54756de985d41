fn main() {
    std::process::exit(subgeom::cli::main_with_args(std::env::args_os()));
}
