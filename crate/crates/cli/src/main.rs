fn main() {
    std::process::exit(convexdecomp_cli::run(std::env::args_os()));
}
