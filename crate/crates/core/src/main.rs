fn main() {
    let code = apd_qkd::cli::run(std::env::args_os());
    std::process::exit(code);
}
