use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use cellsense::config::RunConfig;
use cellsense::export;
use cellsense::hinf;
use cellsense::placement::{self, IterationRecord};
use cellsense::sdp::{self, LmiPoint};
use cellsense::sim::{self, NoiseKind};
use cellsense::synthesis::{self, SynthesisOutcome, SynthesisSpec, VERIFICATION_SLACK};
use cellsense::{Error, SensorSelection, ThermalModel};

#[derive(Parser, Debug)]
#[command(name = "cellsense", version, about = "Thermal observer synthesis and sensor placement for battery cell strings")]
struct Cli {
    /// TOML run configuration; the bundled defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset from the configuration (`case1` or `case2`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for placement; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for the simulated noise realisations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Read model matrices from a directory written by `build`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the model matrices and a summary.
    Build,
    /// Synthesise an observer for a fixed sensor set.
    Synthesize {
        /// Sensor cells (1-based), e.g. `3,6,17`.
        #[arg(long, value_delimiter = ',')]
        sensors: Option<Vec<usize>>,
        /// Attenuation level γ (overrides the configuration).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Choose sensor locations by greedy elimination.
    Place {
        /// Search every subset instead (subject to the configured cap).
        #[arg(long)]
        exhaustive: bool,
        /// Number of sensors to keep.
        #[arg(long)]
        target: Option<usize>,
        /// Attenuation level γ (overrides the configuration).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Simulate the estimation error of a synthesised observer.
    Simulate {
        /// Observer directory written by `synthesize` or `place`.
        #[arg(long)]
        observer: Option<PathBuf>,
        /// Simulate without correction (`L = 0`).
        #[arg(long)]
        open_loop: bool,
        /// Run without noise.
        #[arg(long)]
        zero_noise: bool,
    },
    /// Re-check a synthesised observer independently.
    Verify {
        /// Observer directory; defaults to `<out>/observer`.
        #[arg(long)]
        observer: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Infeasible(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotHurwitz(_) | Error::Singular(_) | Error::Numerical(_) | Error::UnstableStep { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

struct Context {
    cfg: RunConfig,
    model: ThermalModel,
    out: PathBuf,
    jobs: Option<usize>,
}

fn load(cli: &Cli) -> CliResult<Context> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.preset {
        cfg = cfg.with_preset(p)?;
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    let model = match &cli.model {
        Some(dir) => {
            let m = export::read_model(dir)?;
            if m.cells() != cfg.cells {
                return Err(Failure::Config(format!(
                    "model in {} has {} cells, configuration says {}",
                    dir.display(),
                    m.cells(),
                    cfg.cells
                )));
            }
            m
        }
        None => ThermalModel::build(&cfg.params, cfg.cells)?,
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok(Context { cfg, model, out, jobs: cli.jobs })
}

fn run(cli: Cli) -> CliResult {
    let ctx = load(&cli)?;
    match cli.command {
        Command::Build => build(&ctx),
        Command::Synthesize { sensors, gamma } => synthesize(&ctx, sensors, gamma),
        Command::Place { exhaustive, target, gamma } => place(&ctx, exhaustive, target, gamma),
        Command::Simulate { observer, open_loop, zero_noise } => simulate(&ctx, observer, open_loop, zero_noise),
        Command::Verify { observer } => verify(&ctx, observer),
    }
}

fn build(ctx: &Context) -> CliResult {
    for w in ctx.cfg.params.warnings() {
        log::warn!("{w}");
    }
    let dir = ctx.out.join("model");
    let summary = export::write_model(&dir, &ctx.model, Some(&ctx.cfg.params))?;
    println!("model: {} cells, {} states", summary.cells, summary.states);
    println!("hurwitz: {} (spectral abscissa {:.6e})", summary.hurwitz, summary.spectral_abscissa);
    println!("equilibrium residual: {:.3e}", summary.equilibrium_residual);
    println!("written to {}", dir.display());
    Ok(())
}

fn cell_weights(cfg: &RunConfig, cells: &[usize]) -> Option<DVector<f64>> {
    cfg.weights.as_ref().map(|w| DVector::from_iterator(cells.len(), cells.iter().map(|&c| w[c - 1])))
}

fn synthesize(ctx: &Context, sensors: Option<Vec<usize>>, gamma: Option<f64>) -> CliResult {
    let cells = sensors
        .or_else(|| ctx.cfg.selection.clone())
        .ok_or_else(|| Failure::Config("no sensor set: pass --sensors or set `selection`".into()))?;
    let gamma = gamma.unwrap_or(ctx.cfg.gamma);
    let sel = SensorSelection::new(&ctx.model, &cells)?;
    let mut spec = SynthesisSpec::new(&ctx.model, &sel, gamma);
    if let Some(w) = cell_weights(&ctx.cfg, sel.indices()) {
        spec = spec.with_weights(w);
    }
    let result = match synthesis::synthesize(&spec, &ctx.cfg.synthesis_settings())? {
        SynthesisOutcome::Optimal(r) => r,
        SynthesisOutcome::Infeasible => {
            return Err(Failure::Infeasible(format!("gamma = {gamma} is not achievable with sensors {cells:?}")))
        }
        SynthesisOutcome::Failed { status, message } => {
            return Err(Failure::Numerical(format!("synthesis ended with {status}: {message}")))
        }
    };
    let dir = ctx.out.join("observer");
    export::write_synthesis(&dir, &result)?;
    println!("sensors: {:?}", result.sensors);
    println!("cost: {:.10}", result.cost);
    println!("p: {}", fmt_vec(&result.p));
    println!("sigma: {}", fmt_vec(&result.sigma));
    if let Some(n) = result.verified_norm {
        println!("verified norm: {n:.9} (gamma {gamma})");
    }
    println!("written to {}", dir.display());
    Ok(())
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn place(ctx: &Context, exhaustive: bool, target: Option<usize>, gamma: Option<f64>) -> CliResult {
    let target = target.unwrap_or(ctx.cfg.sensors);
    let gamma = gamma.unwrap_or(ctx.cfg.gamma);
    let weights = ctx.cfg.weights_vector();
    let settings = ctx.cfg.placement_settings(ctx.jobs);
    let dir = ctx.out.join("placement");

    if exhaustive {
        let run = placement::exhaustive_select(
            &ctx.model,
            gamma,
            target,
            weights.as_ref(),
            &settings,
            ctx.cfg.placement.exhaustive_cap,
        )?;
        export::write_exhaustive(&dir, &run)?;
        let Some((cells, r)) = &run.best else {
            return Err(Failure::Infeasible(format!("no {target}-sensor subset achieves gamma = {gamma}")));
        };
        println!("exhaustive: {} subsets", run.table.len());
        report_selection(cells, r, run.table.len());
        return Ok(());
    }

    let progress = |it: &IterationRecord| {
        log::info!("iteration {}: removed cell {}, cost {:.10}", it.iteration, it.eliminated, it.cost);
    };
    let run = placement::greedy_select(&ctx.model, gamma, target, weights.as_ref(), &settings, Some(&progress))?;
    export::write_placement(&dir, &run)?;
    for it in &run.iterations {
        println!("iteration {:>3}: removed {:>3}  cost {:.10}", it.iteration, it.eliminated, it.cost);
    }
    match (&run.selection, &run.result) {
        (Some(cells), Some(r)) => {
            report_selection(cells, r, run.solves);
            if run.failures > 0 {
                println!("solver failures: {}", run.failures);
            }
            Ok(())
        }
        _ => Err(Failure::Infeasible(format!(
            "greedy elimination could not reach {target} sensors at gamma = {gamma} (see {})",
            dir.display()
        ))),
    }
}

fn report_selection(cells: &[usize], r: &synthesis::SynthesisResult, solves: usize) {
    println!("selected cells: {cells:?}");
    println!("cost: {:.10}", r.cost);
    println!("p: {}", fmt_vec(&r.p));
    println!("sigma: {}", fmt_vec(&r.sigma));
    if let Some(n) = r.verified_norm {
        println!("achieved norm: {n:.9}");
    }
    println!("solves: {solves}");
}

fn observer_dir(ctx: &Context, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| ctx.out.join("observer"))
}

/// Gain and sensor set of a stored observer, checked against the model.
fn load_observer(ctx: &Context, dir: &Path) -> CliResult<(export::SynthesisBundle, DMatrix<f64>, SensorSelection)> {
    let (bundle, l) = export::read_synthesis(dir)?;
    if l.nrows() != ctx.model.states() {
        return Err(Failure::Config(format!(
            "observer in {} has {} states, model has {}",
            dir.display(),
            l.nrows(),
            ctx.model.states()
        )));
    }
    let sel = SensorSelection::new(&ctx.model, &bundle.sensors)?;
    Ok((bundle, l, sel))
}

fn simulate(ctx: &Context, observer: Option<PathBuf>, open_loop: bool, zero_noise: bool) -> CliResult {
    let n = ctx.model.states();
    let (sys, norm, name) = if open_loop {
        let sel = SensorSelection::empty(&ctx.model);
        let sys = hinf::build_error_system(&ctx.model, &sel, &DMatrix::zeros(n, 0), &DVector::zeros(0))?;
        let norm = hinf::hinf_norm(&sys, 1e-6)?.upper;
        (sys, norm, "trace_open_loop.csv")
    } else {
        let dir = observer_dir(ctx, observer);
        let (bundle, l, sel) = load_observer(ctx, &dir)?;
        let sys = hinf::build_error_system(&ctx.model, &sel, &l, &bundle.sigma_vector())?;
        (sys, bundle.gamma, "trace.csv")
    };
    let mut cfg = ctx.cfg.sim_config(n);
    if zero_noise {
        cfg.noise = vec![NoiseKind::Zero];
    }
    let trace = sim::simulate_error(&sys, &cfg)?;
    let path = export::output_file(&ctx.out, name)?;
    export::write_trace(&path, &trace)?;

    let fraction = ctx.cfg.simulation.tail_fraction;
    let report = sim::error_bound_check(&trace, norm, None, fraction);
    println!("samples: {}", trace.len());
    println!("tail max |e|: {:.6} K", trace.tail_max_abs(fraction));
    println!("final max |e|: {:.6e} K", trace.errors.row(trace.len() - 1).amax());
    if report.input_power > 0.0 {
        println!(
            "power bound: pow(e) = {:.6} <= {:.6} x pow(w) = {:.6}: {}",
            report.error_power,
            norm,
            report.input_power,
            if report.holds { "holds" } else { "VIOLATED" }
        );
    } else {
        println!("tail pow(e) = {:.6e} with no input", report.error_power);
    }
    if report.input_power > 0.0 && !report.stationary {
        println!("warning: tail window is not stationary; lengthen the run");
    }
    let json = export::output_file(&ctx.out, &name.replace(".csv", "_bound.json"))?;
    std::fs::write(&json, serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n").map_err(Error::from)?;
    println!("written to {}", path.display());
    Ok(())
}

fn verify(ctx: &Context, observer: Option<PathBuf>) -> CliResult {
    let dir = observer_dir(ctx, observer);
    let (bundle, l, sel) = load_observer(ctx, &dir)?;
    let x = export::read_matrix_csv(&dir.join("X.csv"))?;
    let y = export::read_matrix_csv(&dir.join("Y.csv"))?;
    let mut spec = SynthesisSpec::new(&ctx.model, &sel, bundle.gamma);
    if let Some(w) = cell_weights(&ctx.cfg, sel.indices()) {
        spec = spec.with_weights(w);
    }
    let problem = synthesis::assemble_lmi(&spec)?;
    let point = LmiPoint { p: DVector::from_vec(bundle.p.clone()), x, y };
    let cert = sdp::check_feasible(&problem, &point)?;
    let (stable, abscissa) = hinf::is_hurwitz(&(ctx.model.a() + &l * sel.cy()));
    let sys = hinf::build_error_system(&ctx.model, &sel, &l, &bundle.sigma_vector())?;
    let norm = hinf::hinf_norm(&sys, 1e-8)?;

    let lmi_ok = cert.strictly_feasible();
    let norm_ok = norm.upper < bundle.gamma + VERIFICATION_SLACK;
    println!("sensors: {:?}, gamma {}", bundle.sensors, bundle.gamma);
    println!(
        "LMI certificate: min eig(-F) {:.3e}, min eig(X) {:.3e}, min p {:.3e}: {}",
        cert.min_eig_neg_f,
        cert.min_eig_x,
        cert.min_p,
        ok(lmi_ok)
    );
    println!("A + L Cy Hurwitz: abscissa {abscissa:.6e}: {}", ok(stable));
    println!("H-infinity norm: {:.9} (peak at {:.4e} rad/s): {}", norm.upper, norm.peak_frequency, ok(norm_ok));
    if lmi_ok && stable && norm_ok {
        Ok(())
    } else {
        Err(Failure::Numerical("observer failed verification".into()))
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}
