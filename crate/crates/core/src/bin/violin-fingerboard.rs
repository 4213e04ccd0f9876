fn main() -> std::process::ExitCode {
    violin_fingerboard::cli::main()
}
