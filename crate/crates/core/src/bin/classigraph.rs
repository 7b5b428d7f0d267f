fn main() -> std::process::ExitCode {
    classigraph::cli::main()
}
