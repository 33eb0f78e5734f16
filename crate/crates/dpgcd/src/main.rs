fn main() -> std::process::ExitCode {
    dpgcd::cli::main()
}
