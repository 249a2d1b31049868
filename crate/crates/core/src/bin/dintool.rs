fn main() -> std::process::ExitCode {
    din::cli::main()
}
