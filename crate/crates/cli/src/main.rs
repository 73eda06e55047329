fn main() {
    std::process::exit(spinesim_cli::run(std::env::args_os()));
}
