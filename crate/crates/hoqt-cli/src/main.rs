use std::io::Write;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hoqt::choi::CombClass;
use hoqt::protocols::{
    analytic_success_rational, embedding_success, inversion_success, resource_comparison, run_isometry_inversion_full,
    run_pseudo_cc, run_transposition_pbt, ProtocolRun,
};
use hoqt::sdp::{extract_and_verify, optimal_success, SolverOptions};
use hoqt::tensor::haar_isometry;
use hoqt::{HoqtError, RandomSource, Task};
use serde::Serialize;
use serde_json::{json, Value};

mod suites;

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "hoqt", version, about = "Higher-order transformations of isometry operations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Leave out wall-clock times and the tool version.
    #[arg(long, global = true)]
    no_meta: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an explicit protocol and compare with its closed form.
    Protocol {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long = "D", default_value_t = 3)]
        big_d: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run an invariant suite and report the largest residuals.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long = "D", default_value_t = 3)]
        big_d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Tensor power for the twirl suite.
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Optimal success probability over a comb class.
    Sdp {
        #[arg(long)]
        task: Task,
        /// `parallel`, `sequential`, `general`, a comma list, or `all`.
        #[arg(long, default_value = "parallel")]
        comb: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long = "D", default_value_t = 3)]
        big_d: usize,
        /// Number of calls; a comma list sweeps several.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        /// Worker threads for sweeps.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Success probability of our inversion against the embedding strategy
    /// and tomography, as a function of the number of calls.
    Compare {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long = "D", default_value_t = 32)]
        big_d: usize,
        /// Largest number of calls.
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Target diamond-norm accuracy for the tomography estimate.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma2,
    Schur,
    Comb,
}

fn exit_code(e: &HoqtError) -> u8 {
    match e {
        HoqtError::Budget(_) => 3,
        HoqtError::NonConvergence(_) => 4,
        _ => 2,
    }
}

/// Round to six significant digits.
fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(5 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// JSON is canonical; `rows` is its flat CSV projection.
struct Report {
    json: Value,
    rows: Vec<Vec<(String, String)>>,
    code: u8,
}

impl Report {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json).expect("report serializes") + "\n",
            Format::Csv => {
                let Some(first) = self.rows.first() else { return String::new() };
                let header: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
                let mut out = header.join(",") + "\n";
                for r in &self.rows {
                    out += &(r.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(",") + "\n");
                }
                out
            }
        }
    }
}

fn field(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn num(k: &str, x: f64) -> (String, String) {
    let text = if x != 0.0 && x.abs() < 1e-4 { format!("{x:e}") } else { x.to_string() };
    (k.to_string(), text)
}

fn with_meta(mut v: Value, common: &Common, started: Instant) -> Value {
    if !common.no_meta {
        v["meta"] = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seconds": started.elapsed().as_secs_f64(),
        });
    }
    v
}

fn protocol(task: Task, d: usize, big_d: usize, k: usize, seed: u64) -> hoqt::Result<Report> {
    let v = haar_isometry(d, big_d, &mut RandomSource::new(seed))?;
    let run: ProtocolRun = match task {
        Task::Inversion => run_isometry_inversion_full(&v, k)?,
        Task::PseudoCc if k == 1 => run_pseudo_cc(&v)?,
        Task::PseudoCc => {
            return Err(HoqtError::InvalidArgument("the pseudo-conjugation protocol uses a single call (k = 1)".into()))
        }
        Task::Transposition => run_transposition_pbt(&v, k)?,
        Task::Cc | Task::SuccessOrDraw => {
            return Err(HoqtError::Unsupported(format!("no explicit protocol for {task}; use `hoqt sdp`")))
        }
    };
    let exact = analytic_success_rational(task, d, big_d, k);
    let p_analytic = exact.map(|r| r.value());
    let agrees = p_analytic.map_or(true, |p| (p - run.p_succ).abs() <= 1e-9) && run.residual <= 1e-9;
    let json = json!({
        "schema": SCHEMA,
        "task": task,
        "d": d,
        "D": big_d,
        "k": k,
        "p_analytic": p_analytic.map(sig6),
        "p_exact": exact.map(|r| r.to_string()),
        "p_simulated": sig6(run.p_succ),
        "residual": run.residual,
        "completeness_residual": run.completeness_residual()?,
        "seed": seed,
    });
    let csv = vec![
        field("task", task),
        field("d", d),
        field("D", big_d),
        field("k", k),
        field("p_analytic", p_analytic.map(|p| sig6(p).to_string()).unwrap_or_default()),
        field("p_exact", exact.map(|r| r.to_string()).unwrap_or_default()),
        num("p_simulated", sig6(run.p_succ)),
        num("residual", run.residual),
        field("seed", seed),
    ];
    Ok(Report { json, rows: vec![csv], code: if agrees { 0 } else { 2 } })
}

fn verify(suite: Suite, d: usize, big_d: usize, k: usize, n: usize, samples: usize, seed: u64) -> hoqt::Result<Report> {
    let (name, checks) = match suite {
        Suite::Lemma2 => ("lemma2", suites::lemma2(d, big_d, n, samples, seed)?),
        Suite::Schur => ("schur", suites::schur(d, k, seed)?),
        Suite::Comb => ("comb", suites::comb(d, big_d, k, samples.min(5), seed)?),
    };
    let passed = checks.iter().all(|c| c.passed);
    let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let rows = checks
        .iter()
        .map(|c| vec![field("suite", name), field("check", &c.name), num("residual", c.residual), field("passed", c.passed)])
        .collect();
    let json = json!({
        "schema": SCHEMA,
        "suite": name,
        "params": {"d": d, "D": big_d, "k": k, "n": n, "samples": samples, "seed": seed},
        "checks": checks,
        "max_residual": worst,
        "passed": passed,
    });
    Ok(Report { json, rows, code: if passed { 0 } else { 2 } })
}

#[derive(Serialize)]
struct Residuals {
    primal: f64,
    dual: f64,
    gap: f64,
    min_eig: f64,
    fresh_isometries: f64,
    comb_constraints: f64,
    trace: f64,
}

struct Cell {
    task: Task,
    class: CombClass,
    d: usize,
    big_d: usize,
    k: usize,
}

/// JSON entry, CSV row and exit code for one solved cell.
type CellOutcome = (Value, Vec<(String, String)>, u8);

fn sdp_cell(cell: &Cell, seed: u64, opts: &SolverOptions, common: &Common) -> hoqt::Result<CellOutcome> {
    let started = Instant::now();
    let (problem, sol) = optimal_success(cell.task, cell.d, cell.big_d, cell.k, cell.class, seed, opts)?;
    let (_, report) = extract_and_verify(&problem, &sol, 10, &mut RandomSource::new(seed ^ 0x5eed))?;
    let status = if !sol.converged {
        "not converged"
    } else if !report.passed {
        "verification failed"
    } else if cell.task == Task::Cc && sol.p.abs() <= 1e-4 {
        "no-go confirmed"
    } else {
        "optimal"
    };
    let residuals = Residuals {
        primal: sol.primal_residual,
        dual: sol.dual_residual,
        gap: sol.gap,
        min_eig: sol.min_eig,
        fresh_isometries: report.fresh_residual,
        comb_constraints: report.superinstrument.constraint_residual,
        trace: report.superinstrument.trace_residual,
    };
    let p = if cell.task == Task::Cc && sol.p.abs() <= 1e-4 { sol.p.abs() } else { sol.p };
    let value = json!({
        "schema": SCHEMA,
        "task": cell.task,
        "comb": cell.class,
        "d": cell.d,
        "D": cell.big_d,
        "k": cell.k,
        "p_opt": sig6(p),
        "status": status,
        "residuals": residuals,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "verified": report.passed,
        "basis_rank": problem.basis_size,
        "equality_rank": problem.equality_rank(),
        "reduced_variables": problem.n_vars,
        "seed": seed,
        "tol": opts.tol,
    });
    let value = with_meta(value, common, started);
    let csv = vec![
        field("task", cell.task),
        field("comb", cell.class),
        field("d", cell.d),
        field("D", cell.big_d),
        field("k", cell.k),
        num("p_opt", sig6(p)),
        field("status", status),
        num("primal", sol.primal_residual),
        num("gap", sol.gap),
        num("fresh", report.fresh_residual),
        field("iterations", sol.iterations),
    ];
    let code = if !sol.converged {
        4
    } else if !report.passed {
        2
    } else {
        0
    };
    Ok((value, csv, code))
}

fn parse_classes(s: &str) -> hoqt::Result<Vec<CombClass>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(vec![CombClass::Parallel, CombClass::Sequential, CombClass::General]);
    }
    s.split(',').map(|c| c.trim().parse()).collect()
}

fn sdp(cells: Vec<Cell>, seed: u64, opts: &SolverOptions, jobs: usize, common: &Common) -> hoqt::Result<Report> {
    let results: Mutex<Vec<Option<hoqt::Result<CellOutcome>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = sdp_cell(&cells[i], seed, opts, common);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let mut values = Vec::new();
    let mut rows = Vec::new();
    let mut code = 0;
    for r in results.into_inner().expect("no worker panicked") {
        let (v, row, c) = r.expect("every cell ran")?;
        values.push(v);
        rows.push(row);
        code = code.max(c);
    }
    let json = if values.len() == 1 { values.pop().expect("one cell") } else { json!({"schema": SCHEMA, "cells": values}) };
    Ok(Report { json, rows, code })
}

fn compare(d: usize, big_d: usize, kmax: usize, eps: f64) -> hoqt::Result<Report> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HoqtError::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    let mut series = Vec::new();
    let mut rows = Vec::new();
    for k in 1..=kmax {
        let ours = inversion_success(d as u64, k as u64);
        let emb = embedding_success(big_d, k);
        let tomo = resource_comparison(d, big_d, eps, ours.value().min(1.0 - 1e-12))?.tomography_calls;
        series.push(json!({
            "k": k,
            "p_ours": sig6(ours.value()),
            "p_ours_exact": ours.to_string(),
            "p_embedding": sig6(emb.value()),
            "p_embedding_exact": emb.to_string(),
            "tomography_calls": sig6(tomo),
        }));
        rows.push(vec![
            field("k", k),
            num("p_ours", sig6(ours.value())),
            num("p_embedding", sig6(emb.value())),
            num("tomography_calls", sig6(tomo)),
        ]);
    }
    let json = json!({"schema": SCHEMA, "d": d, "D": big_d, "eps": eps, "series": series});
    Ok(Report { json, rows, code: 0 })
}

fn run(cli: &Cli) -> hoqt::Result<Report> {
    let started = Instant::now();
    let common = &cli.common;
    let report = match &cli.command {
        Command::Protocol { task, d, big_d, k, seed } => protocol(*task, *d, *big_d, *k, *seed)?,
        Command::Verify { suite, d, big_d, k, n, samples, seed } => verify(*suite, *d, *big_d, *k, *n, *samples, *seed)?,
        Command::Sdp { task, comb, d, big_d, k, seed, tol, max_iter, jobs } => {
            let opts = SolverOptions { tol: *tol, max_iter: *max_iter, ..Default::default() };
            let mut cells = Vec::new();
            for &kk in k {
                for class in parse_classes(comb)? {
                    cells.push(Cell { task: *task, class, d: *d, big_d: *big_d, k: kk });
                }
            }
            return sdp(cells, *seed, &opts, *jobs, common);
        }
        Command::Compare { d, big_d, k, eps } => compare(*d, *big_d, *k, *eps)?,
    };
    Ok(Report { json: with_meta(report.json, common, started), ..report })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let text = report.render(cli.common.format);
            let written = match &cli.common.out {
                Some(path) => std::fs::write(path, text),
                None => std::io::stdout().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write report: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(report.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
