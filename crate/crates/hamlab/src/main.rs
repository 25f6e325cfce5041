fn main() {
    std::process::exit(hamlab::cli::dispatch(std::env::args()));
}
