fn main() {
    std::process::exit(linelist_cli::run(std::env::args_os()));
}
