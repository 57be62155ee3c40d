fn main() {
    std::process::exit(ocumesh::cli::dispatch(std::env::args_os()));
}
