fn main() {
    std::process::exit(fuseflow::cli::run(std::env::args_os()));
}
