fn main() {
    std::process::exit(r1mq::cli::run(std::env::args_os()));
}
