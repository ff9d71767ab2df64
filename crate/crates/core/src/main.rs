fn main() {
    std::process::exit(traincert::cli::run(std::env::args_os()));
}
