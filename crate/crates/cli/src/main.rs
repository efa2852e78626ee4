use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use log::error;

use comap_cli::{exit_code, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "level={} {}", record.level().as_str().to_lowercase(), record.args()))
        .init();
    let cli = Cli::parse();
    let result = cli.command.resolve_config().and_then(|cfg| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads.unwrap_or(0))
            .build_global()
            .map_err(|e| comap_cli::config::invalid(e.to_string()))?;
        cli.command.run(&cfg)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            error!("status=failed exit_code={code} error=\"{e:#}\"");
            ExitCode::from(code as u8)
        }
    }
}
