fn main() {
    std::process::exit(recf::cli::run(std::env::args_os()));
}
