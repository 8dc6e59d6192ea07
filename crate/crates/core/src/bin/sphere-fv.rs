//! Command line driver.
//!
//! Exit codes: 0 success, 1 compatibility check failed, 2 configuration or
//! setup error (nothing written), 3 runtime error (partial outputs, flagged in
//! the status file).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sphere_fv::config::{FluxKind, RunConfig};
use sphere_fv::driver::{
    compatibility_report, convergence_csv, convergence_study, prepare_run, run_experiment, state_csv, torus_problem,
    DriverError, COMPATIBILITY_TOLERANCE,
};
use sphere_fv::fmt::fmt_f64;
use sphere_fv::torus1d::{compare, ErrorTable};

const EXIT_COMPAT: u8 = 1;
const EXIT_SETUP: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "sphere-fv", version, about = "Finite volume schemes for conservation laws on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step the configured problem and write states and diagnostics.
    Run(Common),
    /// Error table against the exact rotated solution.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Overrides `converge.resolutions`, e.g. `8x16,16x32`.
        #[arg(long)]
        resolutions: Option<String>,
    },
    /// Report the discrete compatibility residual of the configured flux.
    CheckCompat(Common),
    /// Compare the 1-D torus scheme with the Lax formula.
    Torus(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn setup(msg: impl ToString) -> Self {
        Failure { code: EXIT_SETUP, msg: msg.to_string() }
    }
    fn runtime(msg: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, msg: msg.to_string() }
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Scheme(_) => Failure::runtime(e),
            _ => Failure::setup(e),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_file(&common.config).map_err(Failure::setup)?;
    if let Some(dir) = &common.out {
        cfg.output.directory = dir.clone();
    }
    Ok(cfg)
}

/// Output sink rooted at the configured directory. Created lazily so that
/// validation failures leave nothing behind.
struct Sink {
    dir: PathBuf,
    prefix: String,
}

impl Sink {
    fn open(cfg: &RunConfig) -> Result<Self, Failure> {
        let dir = cfg.output.directory.clone();
        fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
        let sink = Sink { dir, prefix: cfg.output.prefix.clone() };
        sink.write("config.txt", &cfg.to_text())?;
        Ok(sink)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{name}", self.prefix))
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
    }

    /// Writes the status file and turns a runtime error into its exit code.
    fn finish(&self, error: Option<String>) -> Result<(), Failure> {
        let status = match &error {
            None => "status=ok\n".to_string(),
            Some(m) => format!("status=error\nmessage={m}\n"),
        };
        self.write("status.txt", &status)?;
        match error {
            None => Ok(()),
            Some(m) => Err(Failure::runtime(m)),
        }
    }
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let (fv, s0) = prepare_run(&cfg)?;
    let sink = Sink::open(&cfg)?;
    if cfg.output.mesh_dump {
        sink.write("mesh.csv", &fv.mesh().to_csv())?;
    }
    let out = run_experiment(&fv, s0, &cfg);
    for (k, s) in out.states.iter().enumerate() {
        sink.write(&format!("state_{k:04}.csv"), &state_csv(s))?;
    }
    sink.write("diagnostics.csv", &out.diagnostics.to_csv())?;
    let error = out.error.map(|e| e.to_string());
    eprintln!("run: {} steps, {} outputs", out.steps, out.states.len());
    sink.finish(error)
}

fn parse_resolutions(s: &str) -> Result<Vec<(usize, usize)>, Failure> {
    s.split(',')
        .map(|r| {
            let (a, b) = r.trim().split_once('x').ok_or_else(|| Failure::setup(format!("bad resolution `{r}`")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(Failure::setup(format!("bad resolution `{r}`"))),
            }
        })
        .collect()
}

fn cmd_converge(common: &Common, resolutions: Option<&str>) -> Result<(), Failure> {
    let mut cfg = load(common)?;
    if let Some(r) = resolutions {
        cfg.converge_resolutions = parse_resolutions(r)?;
    }
    if !matches!(cfg.flux.kind, FluxKind::Linear | FluxKind::CustomAxis) {
        return Err(Failure::setup("converge needs flux.kind = linear or custom-axis"));
    }
    // Reject bad setups before the output directory exists.
    for &(nb, nl) in &cfg.converge_resolutions {
        let mut c = cfg.clone();
        c.mesh.n_bands = nb;
        c.mesh.n_lon_equator = nl;
        prepare_run(&c)?;
    }
    let sink = Sink::open(&cfg)?;
    match convergence_study(&cfg, &cfg.converge_resolutions) {
        Ok(rows) => {
            let csv = convergence_csv(&rows);
            print!("{csv}");
            sink.write("convergence.csv", &csv)?;
            sink.finish(None)
        }
        Err(e) => sink.finish(Some(e.to_string())),
    }
}

fn cmd_check_compat(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let r = compatibility_report(&cfg)?;
    let pass = r.max_residual <= COMPATIBILITY_TOLERANCE;
    println!("max_residual={}", fmt_f64(r.max_residual));
    println!("worst_cell={}", r.worst_cell);
    println!("worst_u={}", fmt_f64(r.worst_u));
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(Failure { code: EXIT_COMPAT, msg: format!("compatibility residual exceeds {COMPATIBILITY_TOLERANCE:e}") })
    }
}

fn cmd_torus(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let prob = torus_problem(&cfg.torus).map_err(Failure::setup)?;
    let t = &cfg.torus;
    let sink = Sink::open(&cfg)?;
    match compare(&prob, &t.resolutions, t.t_end, t.cfl) {
        Ok(table) => {
            let csv = table.to_csv();
            print!("{csv}");
            sink.write("torus_errors.csv", &csv)?;
            for p in &table.profiles {
                sink.write(&format!("torus_profile_{}.csv", p.n), &ErrorTable::profile_csv(p))?;
            }
            sink.finish(None)
        }
        Err(e) => sink.finish(Some(e.to_string())),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SPHEREFV_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Failure::setup(format!("SPHEREFV_THREADS: bad value `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::setup)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Converge { common, resolutions } => cmd_converge(common, resolutions.as_deref()),
        Command::CheckCompat(c) => cmd_check_compat(c),
        Command::Torus(c) => cmd_torus(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
