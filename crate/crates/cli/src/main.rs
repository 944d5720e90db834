mod args;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{BenchCommand, Cli, Command};
use manifest::RunManifest;
use run::Status;

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SolveMatrix(_) => "solve-matrix",
        Command::SolveMarkov(_) => "solve-markov",
        Command::EvalMarkov(_) => "eval-markov",
        Command::Estimate(_) => "estimate",
        Command::Check(_) => "check",
        Command::Bench(_) => "bench",
        Command::Replay(_) => "replay",
    }
}

fn build_manifest(cli: &Cli, args: &[String]) -> run::Result<RunManifest> {
    let (out, inputs, seed) = match &cli.command {
        Command::SolveMatrix(a) | Command::SolveMarkov(a) => {
            let mut inputs = vec![a.game.clone()];
            inputs.extend(a.solver.config.iter().map(|p| p.display().to_string()));
            (a.out.as_ref(), inputs, a.solver.seed)
        }
        Command::EvalMarkov(a) => {
            let mut inputs = vec![a.game.clone(), a.policy.display().to_string()];
            inputs.extend(a.solver.config.iter().map(|p| p.display().to_string()));
            (a.out.as_ref(), inputs, a.solver.seed)
        }
        Command::Estimate(a) => (a.out.as_ref(), vec![a.manifest.display().to_string()], None),
        _ => (None, Vec::new(), None),
    };
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        args: manifest::strip_out(args),
        inputs,
        overrides: serde_json::to_value(cli).map_err(rqe::Error::from)?,
        output_dir: run::output_dir(out),
        seed,
        threads: cli.threads,
    })
}

fn dispatch(cli: &Cli, args: &[String]) -> run::Result<Status> {
    let m = build_manifest(cli, args)?;
    match &cli.command {
        Command::SolveMatrix(a) => run::solve_matrix(a, &m),
        Command::SolveMarkov(a) => run::solve_markov(a, &m),
        Command::EvalMarkov(a) => run::eval_markov(a, &m),
        Command::Estimate(a) => run::estimate(a, &m),
        Command::Check(a) => run::check(a),
        Command::Bench(BenchCommand::Make(a)) => run::bench_make(a),
        Command::Bench(BenchCommand::List) => run::bench_list(),
        Command::Replay(a) => {
            let old = RunManifest::read(&a.manifest)?;
            let mut args = old.args.clone();
            let out: PathBuf = run::output_dir(a.out.as_ref());
            args.extend(["--out".to_string(), out.display().to_string()]);
            let cli =
                Cli::try_parse_from(std::iter::once("rqe".to_string()).chain(args.iter().cloned()))
                    .map_err(|e| {
                        rqe::Error::InvalidInput(format!("manifest arguments no longer parse: {e}"))
                    })?;
            if matches!(cli.command, Command::Replay(_)) {
                return Err(rqe::Error::InvalidInput(
                    "a manifest cannot replay another replay".into(),
                ));
            }
            dispatch(&cli, &args)
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(&cli, &args) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::GapAboveTolerance) => ExitCode::from(2),
        Ok(Status::Intractable) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
