fn main() -> std::process::ExitCode {
    dimbound::cli::main()
}
