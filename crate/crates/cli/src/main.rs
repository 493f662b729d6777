use std::io::{self, Write};

fn main() {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut err = stderr.lock();
    let code = safescore::run(std::env::args_os(), &mut out, &mut err);
    if out.flush().is_err() && code == safescore::EXIT_OK {
        std::process::exit(safescore::EXIT_IO);
    }
    drop(out);
    std::process::exit(code);
}
