//! `statecon` command-line entry point.

fn main() {
    let code = statecon_cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
