use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(vtl::cli::LOG_ENV, "warn")).init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = vtl::cli::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
