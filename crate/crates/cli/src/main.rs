fn main() -> std::process::ExitCode {
    ftsim_cli::main_entry()
}
