fn main() {
    std::process::exit(rnnlab::cli::dispatch(std::env::args()));
}
