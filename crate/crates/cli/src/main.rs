use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dmwalk::circuit::{parse_circuit_file, CircuitSpec, Mode};
use dmwalk::compile::{compile_with, export_dot, resource_formulas, CompileOptions, ScatterGraph};
use dmwalk::linalg::{self, C64};
use dmwalk::oracle::{self, CompareReport};
use dmwalk::report::{to_stable_json, RunReport, SweepPoint};
use dmwalk::scatter::{
    propagate_wavepacket, solve_frequency, TimeDomainConfig, TimeDomainResult, WireAmplitudes,
};
use dmwalk::widget;
use dmwalk::K_OPERATING;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Thread count for `--sweep-k`.
const THREADS_ENV: &str = "DMWALK_THREADS";
const FREQ_VERIFY_TOL: f64 = 1e-8;
const TIME_VERIFY_TOL: f64 = 1e-2;

#[derive(Parser)]
#[command(
    name = "dmwalk",
    version,
    about = "Compile noisy circuits to scattering graphs and solve them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Frequency,
    Timedomain,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, compile and solve a circuit file.
    Run(RunArgs),
    /// Check every catalog widget against its target matrix.
    Widgets {
        #[arg(long, default_value_t = K_OPERATING)]
        k: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        json: bool,
        /// Perturbs one hopping of the named widget (test hook).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Graph sizes of the open model against purification.
    Resources {
        n: usize,
        t: usize,
        /// Fraction of steps that are channels.
        f: f64,
        #[arg(long)]
        json: bool,
    },
    /// Write the compiled graph in Graphviz DOT.
    ExportDot {
        circuit: PathBuf,
        #[arg(long)]
        ideal_blocks: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    circuit: PathBuf,
    #[arg(long, default_value_t = K_OPERATING)]
    k: f64,
    #[arg(long, value_enum, default_value_t = Solver::Frequency)]
    solver: Solver,
    /// Wavepacket width in sites.
    #[arg(long, default_value_t = 40.0)]
    sigma: f64,
    /// Lead length in sites (default 10·sigma).
    #[arg(long)]
    lead_len: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Write the JSON report (or sweep records) here.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Allow non-widget unitaries as ideal scattering blocks.
    #[arg(long)]
    ideal_blocks: bool,
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Print the JSON report on stdout.
    #[arg(long)]
    json: bool,
    /// Compare against the density-matrix oracle; exit 1 on mismatch.
    #[arg(long)]
    verify: bool,
    /// Frequency sweep `from:to:steps`, one record per k.
    #[arg(long, value_name = "FROM:TO:STEPS")]
    sweep_k: Option<String>,
}

/// Run outcome other than success: bad input or a failed oracle check.
enum Failure {
    Input(anyhow::Error),
    Verify(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(args) => run(&args),
        Command::Widgets {
            k,
            tol,
            json,
            inject_fault,
        } => widgets(k, tol, json, inject_fault.as_deref()),
        Command::Resources { n, t, f, json } => resources(n, t, f, json).map_err(Failure::Input),
        Command::ExportDot {
            circuit,
            ideal_blocks,
            out,
        } => export(&circuit, ideal_blocks, out.as_deref()).map_err(Failure::Input),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, ideal_blocks: bool) -> Result<(CircuitSpec, ScatterGraph)> {
    let spec = parse_circuit_file(path).with_context(|| format!("reading {}", path.display()))?;
    let opts = CompileOptions {
        allow_ideal: ideal_blocks,
        ..Default::default()
    };
    let sg = compile_with(&spec, &opts).context("compiling")?;
    Ok((spec, sg))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        bail!("--sweep-k expects FROM:TO:STEPS, got {s:?}");
    };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let n: usize = n.parse()?;
    if n == 0 {
        bail!("--sweep-k needs at least one step");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v:?}"))?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

/// Row-major density amplitudes of the solver output (`|ψ⟩⟨ψ|` in pure mode).
fn density_amplitudes(w: &WireAmplitudes) -> Vec<C64> {
    match w.mode {
        Mode::Dm => w.density_vec(),
        Mode::Pure => {
            let psi = &w.amps;
            psi.iter()
                .flat_map(|a| psi.iter().map(move |b| a * b.conj()))
                .collect()
        }
    }
}

fn verify(spec: &CircuitSpec, w: &WireAmplitudes, tol: f64) -> Result<CompareReport> {
    let rho = oracle::simulate(spec)?;
    Ok(oracle::compare_vec(&density_amplitudes(w), &rho, tol)?)
}

fn run(args: &RunArgs) -> std::result::Result<(), Failure> {
    let (spec, sg) = load(&args.circuit, args.ideal_blocks)?;
    if let Some(p) = &args.dot {
        std::fs::write(p, export_dot(&sg)).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(s) = &args.sweep_k {
        let ks = parse_sweep(s)?;
        let pool = thread_pool()?;
        let points: Vec<SweepPoint> = pool
            .install(|| {
                ks.par_iter()
                    .map(|&k| solve_frequency(&sg, k).map(|w| SweepPoint::new(&w)))
                    .collect::<dmwalk::Result<Vec<_>>>()
            })
            .map_err(anyhow::Error::from)?;
        let text = to_stable_json(&points).map_err(anyhow::Error::from)?;
        write_or_print(args.out.as_deref(), &text)?;
        return Ok(());
    }

    let freq = match args.solver {
        Solver::Frequency | Solver::Both => {
            Some(solve_frequency(&sg, args.k).map_err(anyhow::Error::from)?)
        }
        Solver::Timedomain => None,
    };
    let time: Option<TimeDomainResult> = match args.solver {
        Solver::Timedomain | Solver::Both => {
            let cfg = TimeDomainConfig {
                sigma: args.sigma,
                lead_len: args.lead_len.unwrap_or((10.0 * args.sigma).ceil() as usize),
                t_max: args.t_max,
                ..Default::default()
            };
            Some(propagate_wavepacket(&sg, args.k, &cfg).map_err(anyhow::Error::from)?)
        }
        Solver::Frequency => None,
    };

    let verification = if args.verify {
        let (w, tol) = match (&freq, &time) {
            (Some(f), _) => (f, FREQ_VERIFY_TOL),
            (None, Some(t)) => (&t.amplitudes, TIME_VERIFY_TOL),
            _ => unreachable!(),
        };
        Some(verify(&spec, w, tol)?)
    } else {
        None
    };

    let report = RunReport::new(
        &spec,
        &sg,
        freq.as_ref(),
        time.as_ref(),
        verification.clone(),
    );
    let text = report.to_json().map_err(anyhow::Error::from)?;
    if let Some(p) = &args.out {
        std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    if args.json {
        print!("{text}");
    } else {
        print_summary(&report);
    }

    if let Some(v) = verification {
        if !v.pass {
            let labels = freq
                .as_ref()
                .or(time.as_ref().map(|t| &t.amplitudes))
                .unwrap();
            let d = 1usize << labels.n_kept;
            let wire = match labels.mode {
                Mode::Dm => labels.label_strings()[v.worst.0 * d + v.worst.1].clone(),
                Mode::Pure => format!("ψ{}ψ{}*", v.worst.0, v.worst.1),
            };
            return Err(Failure::Verify(format!(
                "worst wire {wire} at ({}, {}): graph [{:.6e}, {:.6e}] vs oracle [{:.6e}, {:.6e}], |err| = {:.3e}",
                v.worst.0, v.worst.1, v.worst_graph[0], v.worst_graph[1], v.worst_oracle[0], v.worst_oracle[1], v.max_abs_err
            )));
        }
    }
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!(
        "circuit   {}",
        if r.circuit.is_empty() {
            "-"
        } else {
            &r.circuit
        }
    );
    println!("solver    {} at k = {:.6}", r.solver, r.k);
    for (label, [re, im]) in &r.wires.0 {
        println!("  {label:<16} {re:>+.10} {im:>+.10}i");
    }
    println!("purity    {:.10}", r.purity);
    if let Some(p) = r.subsystem_purity {
        println!("subsystem {p:.10}");
    }
    println!("survival  {:.10}", r.survival);
    println!("rescale   {:.10}", r.rescale_applied);
    if let Some(td) = &r.time_domain {
        println!(
            "packet    sigma {} lead {} steps {} backscatter {:.3e} (at k {:.3e})",
            td.sigma, td.lead_len, td.steps, td.backscatter, td.filtered_backscatter
        );
        if let Some(dev) = td.max_deviation_from_frequency {
            println!("  max |time - frequency| = {dev:.3e}");
        }
    }
    if let Some(v) = &r.verification {
        println!(
            "verify    {} (max error {:.3e})",
            if v.pass { "pass" } else { "FAIL" },
            v.max_abs_err
        );
    }
}

fn widgets(k: f64, tol: f64, json: bool, fault: Option<&str>) -> std::result::Result<(), Failure> {
    let mut rows = widget::catalog_checks(k, tol).map_err(anyhow::Error::from)?;
    if let Some(name) = fault {
        if name != "u2" {
            return Err(Failure::Input(anyhow!(
                "fault injection supports only the u2 widget"
            )));
        }
        let mut w = widget::u2_widget();
        w.edges[0].hopping *= 0.9;
        let target = linalg::to_dyn2(&linalg::u2());
        let row = rows
            .iter_mut()
            .find(|r| r.name == "u2")
            .expect("u2 in catalog");
        row.report = widget::verify_widget(&w, &target, k, tol).map_err(anyhow::Error::from)?;
    }
    if json {
        print!("{}", to_stable_json(&rows).map_err(anyhow::Error::from)?);
    } else {
        println!(
            "{:<16} {:>12} {:>12}  status",
            "widget", "max_err", "reflection"
        );
        for r in &rows {
            println!(
                "{:<16} {:>12.3e} {:>12.3e}  {}",
                r.name,
                r.report.max_err,
                r.report.reflection_norm,
                if r.report.passed { "ok" } else { "FAIL" }
            );
        }
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.report.passed)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!(
            "widgets off target at k = {k}: {}",
            failed.join(", ")
        )))
    }
}

fn resources(n: usize, t: usize, f: f64, json: bool) -> Result<()> {
    if n == 0 {
        bail!("n must be positive");
    }
    if !(0.0..=1.0).contains(&f) {
        bail!("f must lie in [0, 1], got {f}");
    }
    let ft = f * t as f64;
    if (ft - ft.round()).abs() > 1e-9 {
        bail!("f·T = {ft} is not a whole number of channels");
    }
    let r = resource_formulas(n, t, ft.round() as usize);
    if json {
        print!("{}", to_stable_json(&r)?);
        return Ok(());
    }
    println!("n = {n}, T = {t}, fT = {}", r.ft);
    println!("{:<22} {:>14} {:>14}", "", "open model", "purification");
    println!(
        "{:<22} {:>14} {:>14}",
        "wires", r.wires_formula_open, r.wires_formula_purif
    );
    println!(
        "{:<22} {:>14} {:>14}",
        "nodes (x const)", r.nodes_formula_open, r.nodes_formula_purif
    );
    println!("fT > n regime                {}", r.open_model_advantage);
    println!(
        "survival lower bound         {:.6e}",
        r.survival_lower_bound
    );
    println!("repetition bound             {}", r.repetition_bound);
    Ok(())
}

fn export(circuit: &Path, ideal_blocks: bool, out: Option<&Path>) -> Result<()> {
    let (_, sg) = load(circuit, ideal_blocks)?;
    write_or_print(out, &export_dot(&sg))
}
