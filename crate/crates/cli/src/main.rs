fn main() {
    std::process::exit(hypflow_cli::run(std::env::args_os()));
}
