fn main() {
    std::process::exit(voxgan::cli::run(std::env::args_os()));
}
