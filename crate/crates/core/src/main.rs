fn main() {
    std::process::exit(permgd::harness::run_cli(std::env::args_os()));
}
