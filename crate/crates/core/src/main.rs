use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cutoff_core::density::{FpControl, GridSpec};
use cutoff_core::dynamics::{
    asymptotic_direction, auto_step, lyapunov_at_times, semiflow_at_times, spectral_at_origin, uniform_grid,
    DirectionControl, LyapunovMode, Model, ModelSpec,
};
use cutoff_core::experiments::{
    default_c_grid, linearized_distance_curve, nonlinear_distance_curve, profile_curve, rotating_frame_curve,
    run_experiment, truncation_comparison, write_curves_csv, ExperimentConfig, ExperimentError, NonlinearMethod,
    ProfileCurve, CURVE_HEADER, DEFAULT_GAMMA, TRUNCATION_HEADER,
};
use cutoff_core::gaussian_tv::{verify_gaussian_identities, Identity};
use cutoff_core::sde_sim::{moment_report, simulate_coupled_linearization, TimeGrid};

#[derive(Parser)]
#[command(name = "cutoff", version, about = "Cut-off experiments for small-noise coercive diffusions")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Preset (`ou:1,2`, `quadratic:…`, `quartic:a,beta`, `truncated-quartic:a,beta,M`)
    /// or an inline JSON model object.
    #[arg(long)]
    model: String,
    /// Initial condition, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveMethod {
    Exact,
    Fp,
    Kde,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Frozen,
    AlongFlow,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized check of the Gaussian TV identities.
    ValidateLemmas {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Deterministic flow `ψ(t)` as CSV.
    Semiflow {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covariance ODE solution as CSV.
    Lyapunov {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, value_enum, default_value = "along-flow")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profile function on a c-grid.
    Profile {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance-to-equilibrium curves along the cutoff schedule.
    Curve {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long, value_enum)]
        method: CurveMethod,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 2048)]
        cells: usize,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 10)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moment bounds from a coupled Monte-Carlo ensemble.
    Moments {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.5)]
        record_dt: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary TV and exit probabilities for truncated potentials.
    Truncation {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact curve of the 2D rotating linear system in its rotating frame.
    Rotating {
        #[arg(long)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs an experiment configuration file.
    Run {
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn build_model(m: &ModelArgs) -> Result<Model, ExperimentError> {
    let spec = if m.model.trim_start().starts_with('{') {
        serde_json::from_str::<ModelSpec>(&m.model).map_err(|e| ExperimentError::Config(e.to_string()))?
    } else {
        ModelSpec::parse_preset(&m.model)?
    };
    let model = spec.build()?;
    if m.x0.len() != model.as_drift().dim() {
        return Err(ExperimentError::Config(format!(
            "x0 has {} coordinates, model has dimension {}",
            m.x0.len(),
            model.as_drift().dim()
        )));
    }
    Ok(model)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, ExperimentError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_curves(out: &Option<PathBuf>, curves: &[ProfileCurve]) -> Result<(), ExperimentError> {
    for w in curves.iter().flat_map(|c| &c.warnings) {
        eprintln!("warning: {w}");
    }
    match out {
        Some(p) => write_curves_csv(p, curves)?,
        None => {
            println!("{CURVE_HEADER}");
            curves.iter().flat_map(ProfileCurve::csv_rows).for_each(|r| println!("{r}"));
        }
    }
    Ok(())
}

fn potential(model: &Model) -> Result<&cutoff_core::dynamics::PotentialModel, ExperimentError> {
    model.potential().ok_or_else(|| ExperimentError::Config("this command needs a potential model".into()))
}

fn execute(cmd: Command) -> Result<i32, ExperimentError> {
    match cmd {
        Command::ValidateLemmas { cases, seed, tol } => {
            let r = verify_gaussian_identities(seed, cases)?;
            let mut ok = true;
            for id in Identity::ALL {
                let d = r.deviation(id);
                let pass = d <= tol;
                ok &= pass;
                println!("{:<24} max deviation {d:.3e} {}", id.name(), if pass { "ok" } else { "FAIL" });
            }
            return Ok(if ok { 0 } else { 4 });
        }
        Command::Semiflow { m, t_end, dt, out } => {
            let model = build_model(&m)?;
            let f = model.as_drift();
            let s = semiflow_at_times(f, &m.x0, &uniform_grid(t_end, dt), auto_step(f, &m.x0))?;
            let mut w = sink(&out)?;
            let cols: Vec<String> = (0..m.x0.len()).map(|i| format!("x{i}")).collect();
            writeln!(w, "t,{}", cols.join(","))?;
            for (t, x) in s.times.iter().zip(&s.states) {
                let xs: Vec<String> = x.iter().map(f64::to_string).collect();
                writeln!(w, "{t},{}", xs.join(","))?;
            }
            w.flush()?;
        }
        Command::Lyapunov { m, eps, t_end, dt, mode, out } => {
            let model = build_model(&m)?;
            let f = model.as_drift();
            let mode = match mode {
                Mode::Frozen => LyapunovMode::Frozen,
                Mode::AlongFlow => LyapunovMode::AlongFlow,
            };
            let sol = lyapunov_at_times(f, eps, &uniform_grid(t_end, dt), mode, Some(&m.x0), None)?;
            let n = f.dim();
            let mut w = sink(&out)?;
            let cols: Vec<String> = (0..n).flat_map(|i| (0..n).map(move |j| format!("entry_{i}{j}"))).collect();
            writeln!(w, "t,{}", cols.join(","))?;
            for (t, mat) in sol.times.iter().zip(&sol.matrices) {
                let xs: Vec<String> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| mat[(i, j)].to_string()).collect();
                writeln!(w, "{t},{}", xs.join(","))?;
            }
            w.flush()?;
        }
        Command::Profile { m, c_grid, out } => {
            let model = build_model(&m)?;
            let f = model.as_drift();
            let s = spectral_at_origin(f)?;
            let v = asymptotic_direction(f, &m.x0, &s, &DirectionControl::for_spectrum(&s))?;
            eprintln!("alpha1 = {}, v = {:?}, converged = {}", s.alpha1, v.v, v.converged);
            let curve = profile_curve(&s, &v, &c_grid.unwrap_or_else(default_c_grid))?;
            write_curves(&out, &[curve])?;
        }
        Command::Curve { m, method, eps, c_grid, gamma, cells, paths, bootstrap, seed, out } => {
            let model = build_model(&m)?;
            let c_grid = c_grid.unwrap_or_else(default_c_grid);
            let method = match method {
                CurveMethod::Exact => None,
                CurveMethod::Fp => Some(NonlinearMethod::FokkerPlanck { control: FpControl { cells, dt: None } }),
                CurveMethod::Kde => Some(NonlinearMethod::Kde { paths, bootstrap, grid: GridSpec::default() }),
            };
            let curves = eps
                .iter()
                .enumerate()
                .map(|(k, &e)| match &method {
                    None => linearized_distance_curve(model.as_drift(), e, &m.x0, &c_grid),
                    Some(nm) => nonlinear_distance_curve(
                        potential(&model)?,
                        e,
                        &m.x0,
                        &c_grid,
                        nm,
                        gamma,
                        cutoff_core::experiments::derive_seed(seed, k as u64),
                    ),
                })
                .collect::<Result<Vec<_>, _>>()?;
            write_curves(&out, &curves)?;
        }
        Command::Moments { m, eps, t_end, record_dt, paths, orders, seed, out } => {
            let model = build_model(&m)?;
            let f = model.as_drift();
            let grid = TimeGrid::auto(f, eps, &m.x0, t_end, record_dt)?;
            let ens = simulate_coupled_linearization(f, eps, &m.x0, &grid, paths, seed)?;
            let flow = semiflow_at_times(f, &m.x0, &ens.times, auto_step(f, &m.x0))?;
            let report = moment_report(&ens, &flow, &orders)?;
            let mut w = sink(&out)?;
            writeln!(w, "t,n,estimate,stderr,bound,pass")?;
            for r in &report.rows {
                writeln!(w, "{},{},{},{},{},{}", r.t, r.n, r.estimate, r.stderr, r.bound, r.pass)?;
            }
            w.flush()?;
            if !report.all_pass() {
                eprintln!("moment bound violated");
                return Ok(4);
            }
        }
        Command::Truncation { m, eps, radii, b, gamma, paths, seed, out } => {
            let model = build_model(&m)?;
            if m.x0.len() != 1 {
                return Err(ExperimentError::Config("truncation needs a 1D model".into()));
            }
            let r = truncation_comparison(potential(&model)?, &radii, eps, m.x0[0], b, gamma, paths, seed)?;
            let mut w = sink(&out)?;
            writeln!(w, "{TRUNCATION_HEADER}")?;
            r.write_rows(&mut w)?;
            w.flush()?;
            if !r.violations().is_empty() {
                eprintln!("exit bound violated for M in {:?}", r.violations());
                return Ok(4);
            }
        }
        Command::Rotating { a, b, x0, eps, c_grid, out } => {
            let x0: [f64; 2] = x0
                .as_slice()
                .try_into()
                .map_err(|_| ExperimentError::Config("x0 must have two coordinates".into()))?;
            let c_grid = c_grid.unwrap_or_else(default_c_grid);
            let mut curves = Vec::new();
            for &e in &eps {
                let r = rotating_frame_curve(a, b, x0, e, &c_grid)?;
                eprintln!(
                    "eps = {e}: frame deviation {:.3e} (literal matrix {:.3e}), covariance limit {:?}",
                    r.frame_deviation, r.literal_frame_deviation, r.covariance_limit
                );
                curves.push(r.curve);
            }
            write_curves(&out, &curves)?;
        }
        Command::Run { config, out_dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            let manifest = run_experiment(&cfg)?;
            for t in &manifest.tasks {
                match &t.error {
                    None => eprintln!("{}: ok {:?}", t.task, t.outputs),
                    Some(e) => eprintln!("{}: failed ({e})", t.task),
                }
            }
            return Ok(manifest.exit_code());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = cutoff_core::with_workers(cli.workers, || execute(cli.command)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
