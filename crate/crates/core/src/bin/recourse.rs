fn main() {
    std::process::exit(causal_recourse::cli::main());
}
