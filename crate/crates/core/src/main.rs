fn main() {
    std::process::exit(slca::cli::dispatch(std::env::args_os()));
}
