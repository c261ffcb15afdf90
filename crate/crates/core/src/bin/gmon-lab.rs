fn main() {
    std::process::exit(gmon_lab::cli::run(std::env::args_os()));
}
