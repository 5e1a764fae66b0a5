use std::io::IsTerminal;

fn main() {
    let stdin = std::io::stdin();
    let tty = stdin.is_terminal();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let mut io = webinj::cli::Io {
        input: &mut input,
        out: &mut out,
        err: &mut err,
        tty,
    };
    let code = webinj::cli::run(std::env::args_os(), &mut io);
    std::process::exit(code);
}
