fn main() {
    std::process::exit(imbalance_sim::cli::main_with_args(std::env::args_os()));
}
