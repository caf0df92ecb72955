fn main() {
    std::process::exit(procams::cli::cli_main());
}
