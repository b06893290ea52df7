fn main() {
    std::process::exit(adaptmreg::cli::run(std::env::args_os()));
}
