fn main() {
    std::process::exit(afcoevo::harness::cli_main(std::env::args_os()));
}
