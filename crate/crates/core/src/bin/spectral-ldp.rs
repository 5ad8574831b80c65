fn main() -> std::process::ExitCode {
    spectral_ldp::cli::main()
}
