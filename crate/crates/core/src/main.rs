fn main() {
    std::process::exit(ipvae::cli::main());
}
