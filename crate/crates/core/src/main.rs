fn main() {
    std::process::exit(hessform::cli::run(std::env::args_os()));
}
