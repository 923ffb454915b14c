fn main() {
    std::process::exit(qmc_compress::cli::run(std::env::args_os()));
}
