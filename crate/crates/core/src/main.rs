fn main() -> std::process::ExitCode {
    seqopt::cli::main()
}
