fn main() {
    let code = weedmap::cli::run(std::env::args_os());
    std::process::exit(code);
}
