use std::io;

fn main() {
    let code = robust_portfolio::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
