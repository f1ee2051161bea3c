fn main() {
    std::process::exit(srnn_core::cli::run(std::env::args_os()));
}
