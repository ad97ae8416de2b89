fn main() -> std::process::ExitCode {
    diec::cli::main()
}
