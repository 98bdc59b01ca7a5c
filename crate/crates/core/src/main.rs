fn main() {
    std::process::exit(nodesplit::cli::run(std::env::args_os()));
}
