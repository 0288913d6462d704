fn main() {
    std::process::exit(p3d_inspect::cli::run(std::env::args_os()));
}
