use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use oocluster::config::{self, Config};
use oocluster::golden;
use oocluster::sim::{self, MetricsReport, SimParams};
use oocluster::workload::Algorithm;

#[derive(Parser)]
#[command(name = "oocluster", about = "Simulate and compare object clustering algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print a CSV row.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run every algorithm over a parameter range and a set of seeds.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Parameter to vary, e.g. INOBJ, IBUFF or READPCT.
        #[arg(long)]
        vary: String,
        /// Comma-separated values, or START..END:STEP.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds, or START..END.
        #[arg(long, default_value = "1")]
        seeds: String,
        /// Comma-separated subset of cactis,orion,ck.
        #[arg(long, default_value = "cactis,orion,ck")]
        algorithms: String,
    },
    /// Replay a worked example and compare placements: cactis, ck_on or ck_off.
    Golden { name: String },
}

fn expand(list: &str) -> Result<Vec<String>, String> {
    if let Some((range, step)) = list.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(|| format!("bad range {list:?}"))?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?}"));
        let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
        if step <= 0.0 {
            return Err("range step must be positive".into());
        }
        let mut out = Vec::new();
        let mut v = a;
        while v <= b + 1e-9 {
            out.push(if v.fract() == 0.0 { format!("{}", v as i64) } else { v.to_string() });
            v += step;
        }
        return Ok(out);
    }
    if let Some((a, b)) = list.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range {list:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range {list:?}"))?;
        return Ok((a..=b).map(|v| v.to_string()).collect());
    }
    Ok(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
}

fn load(path: &PathBuf) -> Result<Config, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Config::parse(&text).map_err(|e| e.to_string())
}

fn run_one(path: &PathBuf) -> Result<(), String> {
    let params = load(path)?.to_params().map_err(|e| e.to_string())?;
    let report = sim::run(&params).map_err(|e| e.to_string())?;
    config::write_csv(std::io::stdout().lock(), &[(params, report)]).map_err(|e| e.to_string())
}

fn sweep(path: &PathBuf, vary: &str, values: &str, seeds: &str, algorithms: &str) -> Result<(), String> {
    let base = load(path)?;
    let values = expand(values)?;
    let seeds = expand(seeds)?;
    let mut algs = Vec::new();
    for a in algorithms.split(',') {
        algs.push(Algorithm::parse(a).ok_or_else(|| format!("unknown algorithm {a:?}"))?);
    }
    let mut jobs: Vec<SimParams> = Vec::new();
    for &alg in &algs {
        for v in &values {
            for s in &seeds {
                let mut c = base.clone();
                c.set("ALGORITHM", alg.as_str()).map_err(|e| e.to_string())?;
                c.set(vary, v.as_str()).map_err(|e| e.to_string())?;
                c.set("SEED", s.as_str()).map_err(|e| e.to_string())?;
                jobs.push(c.to_params().map_err(|e| e.to_string())?);
            }
        }
    }
    let rows: Vec<Result<(SimParams, MetricsReport), String>> =
        jobs.into_par_iter().map(|p| sim::run(&p).map(|r| (p, r)).map_err(|e| e.to_string())).collect();
    let rows: Vec<(SimParams, MetricsReport)> = rows.into_iter().collect::<Result<_, _>>()?;
    config::write_csv(std::io::stdout().lock(), &rows).map_err(|e| e.to_string())
}

fn golden(name: &str) -> Result<bool, String> {
    match name {
        "cactis" => {
            let got = golden::packing_blocks().map_err(|e| e.to_string())?;
            let want = golden::packing_expected();
            for (i, b) in got.iter().enumerate() {
                println!("block {}: {}", i + 1, b.join(" "));
            }
            Ok(got == want)
        }
        "ck_on" | "ck_off" => {
            let split = name == "ck_on";
            let got = golden::design_trace(split).map_err(|e| e.to_string())?;
            let want = golden::design_expected(split);
            let mut ok = got.len() == want.len();
            for (step, (g, w)) in got.iter().zip(&want).enumerate() {
                let row: Vec<String> = g.iter().map(|(n, p)| format!("{n}@{p}")).collect();
                let same = g.len() == w.len() && g.iter().zip(w).all(|((gn, gp), (wn, wp))| gn == wn && gp == wp);
                println!("step {}: {}{}", step + 1, row.join(" "), if same { "" } else { "  MISMATCH" });
                ok &= same;
            }
            Ok(ok)
        }
        other => Err(format!("unknown trace {other:?}; expected cactis, ck_on or ck_off")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run_one(config).map(|_| true),
        Command::Sweep { config, vary, values, seeds, algorithms } => sweep(config, vary, values, seeds, algorithms).map(|_| true),
        Command::Golden { name } => golden(name),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("placement differs from the expected trace");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
