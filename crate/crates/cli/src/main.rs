use clap::Parser;

use sdrelax_cli::{run, Args};

fn main() {
    let args = Args::parse();
    let code = match run(&args) {
        Ok(report) => {
            for c in &report.checks {
                let tag = if c.passed { "ok" } else { "FAILED" };
                println!("[{tag}] {}: {} ({})", c.module, c.invariant, c.detail);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for c in report.failed_checks() {
                eprintln!("invariant failed in module {}: {}", c.module, c.invariant);
            }
            println!("{} files written to {}", report.files.len() + 1, report.dir.display());
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
