fn main() {
    std::process::exit(mtaf_cli::run(std::env::args_os()));
}
