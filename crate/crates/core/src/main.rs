fn main() {
    std::process::exit(dyadic_porosity::cli::run(std::env::args_os()));
}
