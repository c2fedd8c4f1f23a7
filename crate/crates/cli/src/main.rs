use std::process::ExitCode;

use orthofem_cli::{diff_tables, emit_diff, emit_table, paper_table, parse_config, run_study, CliError};

fn main() -> ExitCode {
    let cfg = match parse_config(std::env::args_os(), None) {
        Ok(c) => c,
        Err(CliError::Help(msg)) => {
            print!("{msg}");
            return ExitCode::SUCCESS;
        }
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("orthofem-study: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run_study(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("orthofem-study: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut text = emit_table(&outcome.table, cfg.format);
    if let Some(name) = &cfg.diff_paper {
        match paper_table(name) {
            Ok(reference) => {
                text.push_str(&format!("\n# deviation from {name}: errors relative, rates absolute\n"));
                text.push_str(&emit_diff(&diff_tables(&outcome.table, &reference), cfg.format));
            }
            Err(e) => {
                eprintln!("orthofem-study: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("orthofem-study: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => print!("{text}"),
    }
    if let Some((n, why)) = &outcome.failure {
        eprintln!("orthofem-study: level N={n} failed: {why}");
    }
    for l in &outcome.levels {
        if !l.solve.converged {
            eprintln!("orthofem-study: level N={} did not converge (residual {:.3e})", l.n, l.solve.residual);
        }
    }
    if outcome.complete(cfg.ns.len()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
