fn main() {
    std::process::exit(xattr_cli::run(std::env::args_os()));
}
