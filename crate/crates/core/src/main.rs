fn main() {
    std::process::exit(svi_guard::cli::run(std::env::args_os()));
}
