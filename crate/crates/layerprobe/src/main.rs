use std::panic;
use std::process::ExitCode;

use layerprobe::CliError;

fn main() -> ExitCode {
    panic::set_hook(Box::new(|info| {
        let msg = info
            .payload()
            .downcast_ref::<&str>()
            .map(|s| (*s).to_owned())
            .or_else(|| info.payload().downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        let at = info.location().map(|l| format!(" at {}:{}", l.file(), l.line())).unwrap_or_default();
        eprintln!("{}", CliError::Internal(format!("{msg}{at}")).one_line());
    }));
    let code = panic::catch_unwind(|| layerprobe::cli::run_from(std::env::args_os())).unwrap_or(3);
    ExitCode::from(u8::try_from(code).unwrap_or(3))
}
