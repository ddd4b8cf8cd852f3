use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sdlab::assembly::PhysParams;
use sdlab::experiments::{cond_sweep, run_floating, run_solve, write_cond_csv, SolveOutcome, SolveSettings};
use sdlab::mesh::BcConfig;
use sdlab::mms::run_mms;
use serde_json::{json, Value};

/// Bumped whenever a field of the JSON sidecar changes meaning.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "sdlab", version, about = "Stokes-Darcy preconditioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Manufactured-solution convergence table.
    Mms(Common),
    /// Condition numbers of the preconditioned system over a parameter grid.
    CondSweep(Common),
    /// MINRES residual histories, one per parameter point.
    Solve(Common),
    /// Channel flow around porous inclusions, plain vs deflated preconditioner.
    Floating(Common),
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Boundary configuration: NN, EE, NE*, EN*, NE, EN or multi.
    #[arg(long, default_value = "NN")]
    case: BcConfig,
    /// Viscosity; repeat or comma-separate for a sweep.
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    /// Permeability; repeat or comma-separate for a sweep.
    #[arg(long = "K", value_delimiter = ',')]
    k: Vec<f64>,
    /// Beavers-Joseph-Saffman coefficient.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Refinement levels.
    #[arg(long, value_delimiter = ',')]
    nref: Vec<usize>,
    #[arg(long, default_value_t = 1e-12)]
    reduction: f64,
    #[arg(long, default_value_t = 2000)]
    maxit: usize,
    /// Use the deflated preconditioner.
    #[arg(long)]
    deflate: bool,
    /// Multiplier on the deflation weight.
    #[arg(long, default_value_t = 1.0)]
    gamma_mult: f64,
    /// Record harmonic Ritz values, F_k, the spectrum and the bound check.
    #[arg(long)]
    diagnostic: bool,
    /// Seed of the random right-hand side.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Solve with the manufactured-solution data instead of a random right-hand side.
    #[arg(long)]
    manufactured: bool,
    /// Number of inclusions for `floating`.
    #[arg(long, default_value_t = 2)]
    inclusions: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Turn the run's pass criterion into the exit code.
    #[arg(long)]
    check: bool,
    /// Allowed deviation of the Stokes rates from 2 under `mms --check`.
    #[arg(long, default_value_t = 0.15)]
    tol_stokes: f64,
    /// Allowed deviation of the Darcy rates from 1 under `mms --check`.
    #[arg(long, default_value_t = 0.1)]
    tol_darcy: f64,
}

const SWEEP_GRID: [f64; 5] = [1e-4, 1e-2, 1.0, 1e2, 1e4];

impl Common {
    fn or_default<T: Clone>(v: &[T], d: &[T]) -> Vec<T> {
        if v.is_empty() { d.to_vec() } else { v.to_vec() }
    }

    fn validate(&self, sweep: bool) -> Result<()> {
        for &v in self.mu.iter().chain(&self.k) {
            if !sweep {
                if !(v > 0.0 && v.is_finite()) {
                    bail!("parameter {v} must be positive");
                }
                continue;
            }
            let e = v.log10();
            if !(v > 0.0) || (e - e.round()).abs() > 1e-9 || e.round().abs() > 8.0 {
                bail!("parameter {v} is not a power of ten in [1e-8, 1e8]");
            }
        }
        Ok(())
    }

    fn settings(&self) -> SolveSettings {
        SolveSettings {
            reduction: self.reduction,
            maxit: self.maxit,
            deflate: self.deflate,
            gamma_mult: self.gamma_mult,
            diagnostic: self.diagnostic,
            seed: self.seed,
            manufactured: self.manufactured,
        }
    }

    fn to_json(&self, subcommand: &str) -> Value {
        json!({
            "subcommand": subcommand,
            "case": self.case.name(),
            "mu": self.mu,
            "K": self.k,
            "alpha": self.alpha,
            "nref": self.nref,
            "reduction": self.reduction,
            "maxit": self.maxit,
            "deflate": self.deflate,
            "gamma_mult": self.gamma_mult,
            "diagnostic": self.diagnostic,
            "seed": self.seed,
            "manufactured": self.manufactured,
            "inclusions": self.inclusions,
        })
    }
}

fn version_string() -> String {
    let git = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn write_sidecar(dir: &Path, csv: &str, config: Value, seconds: f64, results: Value) -> Result<()> {
    let side = json!({
        "schema_version": SCHEMA_VERSION,
        "csv": csv,
        "version": version_string(),
        "config": config,
        "timings": { "wall_seconds": seconds },
        "results": results,
    });
    let name = csv.trim_end_matches(".csv").to_string() + ".json";
    serde_json::to_writer_pretty(create(dir, &name)?, &side)?;
    Ok(())
}

fn fmt_param(v: f64) -> String {
    format!("{v:e}").replace('.', "p")
}

fn outcome_json(o: &SolveOutcome) -> Value {
    json!({
        "iterations": o.iterations,
        "converged": o.converged,
        "termination": o.log.termination,
        "plateaus": o.plateaus.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>(),
        "orthogonality": o.log.orthogonality,
        "spectrum": o.spectrum.as_ref().map(|s| s.summary_json()),
        "bound": o.bound,
        "bound_symmetrized": o.bound_symmetrized,
        "solve_seconds": o.seconds,
    })
}

fn cmd_mms(c: &Common) -> Result<bool> {
    let start = Instant::now();
    let mu = Common::or_default(&c.mu, &[3.0])[0];
    let k = Common::or_default(&c.k, &[1.0])[0];
    let params = PhysParams::new(mu, k, c.alpha)?;
    let nrefs = Common::or_default(&c.nref, &[0, 1, 2, 3, 4]);
    let report = run_mms(params, &nrefs)?;
    print!("{}", report.to_table());
    report.write_csv(create(&c.out, "mms.csv")?)?;
    let pass = report.check(c.tol_stokes, c.tol_darcy);
    let results = json!({ "rows": report.rows, "rates": report.rates(), "check_passed": pass });
    let mut cfg = c.to_json("mms");
    cfg["point"] = json!({ "mu": mu, "K": k, "nref": nrefs });
    write_sidecar(&c.out, "mms.csv", cfg, start.elapsed().as_secs_f64(), results)?;
    Ok(pass)
}

fn cmd_cond_sweep(c: &Common) -> Result<bool> {
    let start = Instant::now();
    let mus = Common::or_default(&c.mu, &SWEEP_GRID);
    let ks = Common::or_default(&c.k, &SWEEP_GRID);
    let nrefs = Common::or_default(&c.nref, &[0, 1, 2]);
    let gamma = c.deflate.then_some(c.gamma_mult);
    let rows = cond_sweep(c.case, &mus, &ks, &nrefs, c.alpha, gamma)?;
    let csv = format!("cond_{}.csv", file_case(c.case));
    write_cond_csv(&rows, create(&c.out, &csv)?)?;
    let ke: Vec<f64> = rows.iter().map(|r| r.kappa_eff).collect();
    let spread = ke.iter().cloned().fold(f64::MIN, f64::max) / ke.iter().cloned().fold(f64::MAX, f64::min);
    for r in &rows {
        println!("mu={:e} K={:e} nref={} kappa={:.4} kappa_eff={:.4}", r.mu, r.k, r.nref, r.kappa, r.kappa_eff);
    }
    let pass = !rows.is_empty() && spread <= 2.0;
    let results = json!({ "rows": rows.len(), "kappa_eff_spread": spread, "check_passed": pass });
    write_sidecar(&c.out, &csv, c.to_json("cond-sweep"), start.elapsed().as_secs_f64(), results)?;
    Ok(pass)
}

fn file_case(config: BcConfig) -> String {
    config.name().replace('*', "star")
}

fn write_outcome(dir: &Path, tag: &str, o: &SolveOutcome, config: Value) -> Result<()> {
    let csv = format!("{tag}.csv");
    o.log.write_csv(create(dir, &csv)?)?;
    let mut w = create(dir, &format!("{tag}_solution.csv"))?;
    use std::io::Write;
    writeln!(w, "index,value")?;
    for (i, v) in o.solution.iter().enumerate() {
        writeln!(w, "{i},{v:.16e}")?;
    }
    if let Some(s) = &o.spectrum {
        s.write_csv(create(dir, &format!("{tag}_spectrum.csv"))?)?;
    }
    write_sidecar(dir, &csv, config, o.seconds, outcome_json(o))
}

fn cmd_solve(c: &Common) -> Result<bool> {
    let mus = Common::or_default(&c.mu, &[1.0]);
    let ks = Common::or_default(&c.k, &[1.0]);
    let nrefs = Common::or_default(&c.nref, &[1]);
    let settings = c.settings();
    let mut pass = true;
    let mut counts = Vec::new();
    for &nref in &nrefs {
        for &mu in &mus {
            for &k in &ks {
                let params = PhysParams::new(mu, k, c.alpha)?;
                let o = run_solve(c.case, params, nref, &settings)?;
                let tag = format!(
                    "solve_{}_mu{}_K{}_n{}{}",
                    file_case(c.case),
                    fmt_param(mu),
                    fmt_param(k),
                    nref,
                    if c.deflate { "_deflated" } else { "" }
                );
                println!(
                    "{tag}: {} iterations, converged={}, plateaus={:?}",
                    o.iterations, o.converged, o.plateaus
                );
                let mut cfg = c.to_json("solve");
                cfg["point"] = json!({ "mu": mu, "K": k, "nref": nref });
                write_outcome(&c.out, &tag, &o, cfg)?;
                pass &= o.converged && (!c.deflate || o.plateaus.is_empty());
                counts.push(o.iterations as f64);
            }
        }
    }
    if c.deflate && counts.len() > 1 {
        let (lo, hi) = counts.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let spread = (hi - lo) / lo;
        println!("iteration spread {:.1}%", 100.0 * spread);
        pass &= spread <= 0.25;
    }
    Ok(pass)
}

fn cmd_floating(c: &Common) -> Result<bool> {
    let mu = Common::or_default(&c.mu, &[3.0])[0];
    let k = Common::or_default(&c.k, &[100.0])[0];
    let nref = Common::or_default(&c.nref, &[2])[0];
    let params = PhysParams::new(mu, k, c.alpha)?;
    let o = run_floating(params, nref, c.inclusions, &c.settings())?;
    for (name, run) in [("plain", &o.plain), ("deflated", &o.deflated)] {
        println!("{name}: {} iterations, plateaus={:?}", run.iterations, run.plateaus);
        let mut cfg = c.to_json("floating");
        cfg["variant"] = json!(name);
        cfg["point"] = json!({ "mu": mu, "K": k, "nref": nref, "inclusions": c.inclusions });
        cfg["dim"] = json!(o.dim);
        write_outcome(&c.out, &format!("floating_{name}"), run, cfg)?;
    }
    Ok(o.deflated.converged && o.deflated.plateaus.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<(bool, bool)> {
        let c = match &cli.command {
            Cmd::Mms(c) | Cmd::CondSweep(c) | Cmd::Solve(c) | Cmd::Floating(c) => c,
        };
        c.validate(matches!(cli.command, Cmd::CondSweep(_)))?;
        fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
        let pass = match &cli.command {
            Cmd::Mms(c) => cmd_mms(c)?,
            Cmd::CondSweep(c) => cmd_cond_sweep(c)?,
            Cmd::Solve(c) => cmd_solve(c)?,
            Cmd::Floating(c) => cmd_floating(c)?,
        };
        Ok((pass, c.check))
    };
    match run() {
        Ok((pass, check)) => {
            if check && !pass {
                eprintln!("check failed");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
