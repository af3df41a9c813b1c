fn main() {
    std::process::exit(spml::cli::run(std::env::args_os()));
}
