fn main() {
    std::process::exit(ldsplat::cli::run(std::env::args_os()));
}
