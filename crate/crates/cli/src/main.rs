use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use skewtherm_cli::{classify, error_record, parse_config, run, ErrorKind, ExperimentConfig};

/// Batch driver for skewtherm experiments; writes JSON lines.
#[derive(Parser, Debug)]
#[command(name = "skewtherm", version)]
struct Args {
    /// Experiment config (JSON, schema "skewtherm/v1").
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = all cores.
    #[arg(long, env = "SKEWTHERM_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded, deterministic evaluation order.
    #[arg(long)]
    sequential: bool,
}

fn emit(out: &Option<PathBuf>, lines: &[String]) -> anyhow::Result<()> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn execute(args: &Args, cfg: &mut Option<ExperimentConfig>) -> anyhow::Result<Vec<String>> {
    let threads = if args.sequential { 1 } else { args.threads };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("thread pool setup failed")?;
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("cannot read {}", args.config.display()))?;
    let parsed = parse_config(&text)?;
    let seed = args.seed.or(parsed.seed).unwrap_or(0);
    let recs = run(cfg.insert(parsed), seed, args.sequential)?;
    recs.iter().map(|r| serde_json::to_string(r).map_err(Into::into)).collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = None;
    let result = execute(&args, &mut cfg).and_then(|lines| emit(&args.out, &lines));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            let seed = args.seed.or(cfg.as_ref().and_then(|c| c.seed));
            let rec = error_record(cfg.as_ref().map(|c| c.experiment.name()), kind, &format!("{e:#}"), seed, cfg.as_ref());
            if kind != ErrorKind::Io {
                let _ = emit(&args.out, &[rec.to_string()]);
            }
            eprintln!("skewtherm: {e:#}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
