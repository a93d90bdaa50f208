fn main() {
    std::process::exit(mixnet::cli::dispatch(std::env::args_os()));
}
