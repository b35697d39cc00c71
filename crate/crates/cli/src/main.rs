fn main() {
    std::process::exit(flim_cli::run(std::env::args_os()));
}
