use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = ddsflow::cli::execute(std::env::args_os(), None);
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(outcome.output.as_bytes());
    let _ = out.flush();
    ExitCode::from(outcome.code as u8)
}
