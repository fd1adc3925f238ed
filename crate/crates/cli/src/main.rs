mod config;
mod expect;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ExperimentConfig, Kind};
use pipeline::RunError;

#[derive(Parser)]
#[command(name = "viscolab", version, about = "Experiments on monotone schemes for fully nonlinear elliptic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and check its expectations.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `out`, else `out/<config stem>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config and print what `run` would do.
    Describe {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the config grammar.
    Schema,
}

const EXIT_EXPECT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn out_dir(cfg: &ExperimentConfig, path: &Path, cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| cfg.out.clone()).unwrap_or_else(|| {
        let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("out").join(stem)
    })
}

fn load(path: &Path) -> Result<(ExperimentConfig, String), ExitCode> {
    config::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let (cfg, text) = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seed = seed.unwrap_or(cfg.seed);
    let dir = out_dir(&cfg, path, out);
    let art = match pipeline::execute(&cfg, seed) {
        Ok(a) => a,
        Err(RunError::Config(e)) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(RunError::Solver(e)) => {
            eprintln!("solver failure: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    let outcomes = expect::evaluate(&cfg.expect, &art);
    let header = json!({ "schema": viscolab::REPORT_SCHEMA, "kind": cfg.kind.name(), "seed": seed });
    let mut exp_report = header.clone();
    exp_report["all_pass"] = json!(outcomes.iter().all(|o| o.pass));
    exp_report["outcomes"] = serde_json::to_value(&outcomes).expect("outcomes serialize");
    if let Err(e) = output::write_all(&dir, header, &text, &art, &exp_report) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(EXIT_SOLVER);
    }
    println!("wrote {}", dir.display());
    if let Some(msg) = &art.failure {
        eprintln!("solver failure: {msg}");
        return ExitCode::from(EXIT_SOLVER);
    }
    let mut failed = false;
    for o in &outcomes {
        if o.pass {
            println!("ok   {}.{} = {}", o.report, o.path, o.actual);
        } else {
            failed = true;
            println!("FAIL {}.{}: {}", o.report, o.path, o.detail);
        }
    }
    if failed {
        eprintln!("expectations failed; see {}", dir.join("expectations.json").display());
        return ExitCode::from(EXIT_EXPECT);
    }
    ExitCode::SUCCESS
}

fn fraction(x: f64) -> String {
    let k = (1.0 / x).round();
    if x == 1.0 {
        "1".into()
    } else if k > 1.0 && (1.0 / k - x).abs() < 1e-12 {
        format!("1/{k}")
    } else {
        format!("{x}")
    }
}

fn describe(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let (cfg, _) = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seed = seed.unwrap_or(cfg.seed);
    println!("kind: {}", cfg.kind.name());
    println!("seed: {seed}");
    println!("output: {}", out_dir(&cfg, path, out).display());
    if let Some(p) = &cfg.problem {
        if let Ok(op) = cfg.operator() {
            println!("operator: {}", op.label());
        }
        if let Some(h) = p.h {
            if let Ok(g) = cfg.grid(h) {
                println!("grid: h = {}, {} nodes ({} interior)", fraction(h), g.len(), g.n_interior());
            }
        }
    }
    let steps: Vec<String> = match cfg.kind {
        Kind::Solve => vec!["policy iteration with line search".into(), "residual and exact-error report".into()],
        Kind::Eigen => {
            let e = cfg.eigen_config();
            let sched: Vec<String> = e.eps_schedule.iter().map(|&v| fraction(v)).collect();
            let sec = cfg.eigen.as_ref();
            let mut v = vec![
                format!(
                    "power map on branch {}, ε schedule [{}] then 0",
                    if sec.is_none_or(|s| s.sign == viscolab::Sign::Plus) { "+" } else { "-" },
                    sched.join(", ")
                ),
                "Hopf boundary check on the eigenfunction".into(),
            ];
            if let Some(s) = sec.filter(|s| s.trials > 1) {
                v.push(format!("simplicity check over {} starts", s.trials));
            }
            v
        }
        Kind::AbpBatch => {
            let a = cfg.abp_config(0);
            vec![format!("ABP ratios over {} random problems", a.problems)]
        }
        Kind::Regularity => {
            let f = cfg.fit_config();
            let mut v = vec![
                "solve".into(),
                format!("Caffarelli fit, γ={}, K={}", fraction(f.gamma), f.scales),
            ];
            if cfg.fit.as_ref().is_some_and(|s| s.h_theta.is_some()) {
                v.push("(H_θ) report".into());
            }
            v
        }
        Kind::Oscillation => {
            let pairs = cfg.oscillation.as_ref().map_or(64, |o| o.pairs);
            vec![format!("β and β̄ over {pairs} sampled pairs")]
        }
        Kind::Approximation => {
            let n = cfg.approximation.as_ref().map_or(0, |a| a.deltas.len());
            vec![format!("approximation gap ladder over {n} values of δ")]
        }
        Kind::BoundCertificate => vec!["σ-certificate on the configured ball".into(), "compare with computed α₁".into()],
        Kind::Nagumo => {
            let hs: Vec<String> = cfg.nagumo.as_ref().map_or(vec![], |n| n.hs.iter().map(|&h| fraction(h)).collect());
            vec![format!("Nagumo ratio ladder over h in [{}]", hs.join(", "))]
        }
    };
    println!("pipeline:");
    for s in steps {
        println!("  - {s}");
    }
    if !cfg.expect.is_empty() {
        println!("expectations:");
        for e in &cfg.expect {
            println!("  - {}.{}", e.report.as_deref().unwrap_or("report"), e.path);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Describe { config, seed, out } => describe(&config, seed, out),
        Command::Schema => {
            print!("{}", include_str!("../CONFIG.md"));
            ExitCode::SUCCESS
        }
    }
}
