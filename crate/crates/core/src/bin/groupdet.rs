fn main() -> std::process::ExitCode {
    groupdet::cli::main()
}
