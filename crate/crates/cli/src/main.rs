use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use dwellcert::bounds::lyapunov_bounds;
use dwellcert::io::certificate::{describe_failure, emit_certificate, load_and_verify, CertError, CertificateFile};
use dwellcert::io::config::{parse_system_file, OutputFormat, RunConfig, SystemFile};
use dwellcert::io::generate::{generate, Family, GeneratorParams};
use dwellcert::io::plot::export_polytopes_2d;
use dwellcert::io::report::{render_csv, render_json, render_text};
use dwellcert::io::sweep::{run_step, run_sweep};
use dwellcert::io::write_atomic;
use dwellcert::ipa::{verify_certificate, MultinormCertificate};
use dwellcert::system::{build_discretization, SwitchingSystem};

#[derive(Parser)]
#[command(name = "dwellcert", version, about = "Certified Lyapunov exponent bounds for switching systems with a dwell time")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "DWELLCERT_THREADS")]
    threads: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower and upper bounds for every step size.
    Bounds {
        system: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Step sizes, comma separated (overrides the file's list).
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Write the table here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Write one certificate per step into this directory.
        #[arg(long)]
        certificate_dir: Option<PathBuf>,
    },
    /// Leading cycle and growth rate of the discretization at one step.
    Jsr {
        system: PathBuf,
        #[arg(long)]
        step: f64,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Write the certificate here.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Re-check a certificate against a system file without any search.
    Verify { certificate: PathBuf, system: PathBuf },
    /// Draw the polytopes of a planar system as SVG plus a JSON sidecar.
    Plot2d {
        system: PathBuf,
        /// Use this certificate instead of computing one.
        #[arg(long, conflicts_with = "step")]
        certificate: Option<PathBuf>,
        #[arg(long, required_unless_present = "certificate")]
        step: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Write a random system file.
    Generate {
        #[arg(long, default_value = "gaussian")]
        family: Family,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        modes: usize,
        /// Drawn uniformly from (0, 1) when absent.
        #[arg(long)]
        dwell_time: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    enum_length: Option<usize>,
    #[arg(long)]
    block_count: Option<usize>,
    #[arg(long)]
    block_loops: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    max_vertices: Option<usize>,
    /// Extra growth rate per unit time for the polytope iteration.
    #[arg(long)]
    rate_margin: Option<f64>,
    #[arg(long)]
    positive_mode: Option<bool>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.beam, self.beam);
        set(&mut cfg.depth, self.depth);
        set(&mut cfg.enum_length, self.enum_length);
        set(&mut cfg.block_count, self.block_count);
        set(&mut cfg.block_loops, self.block_loops);
        set(&mut cfg.max_iterations, self.max_iterations);
        set(&mut cfg.max_vertices, self.max_vertices);
        if let Some(r) = self.rate_margin {
            cfg.rate_margin = r;
        }
        if self.positive_mode.is_some() {
            cfg.positive_mode = self.positive_mode;
        }
    }
}

/// Exit status classes.
enum Failure {
    Usage(anyhow::Error),
    Verification(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Verification(e) | Failure::Numerical(e) => e,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

fn load(path: &Path, run: &RunArgs) -> Result<(SwitchingSystem, RunConfig), Failure> {
    let (sys, mut cfg) = parse_system_file(path).map_err(usage)?;
    run.apply(&mut cfg);
    Ok((sys, cfg))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(usage),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .context("writing to stdout")
                .map_err(usage)
        }
    }
}

fn check_emitted(cert: &Path, system: &Path) -> Result<(), Failure> {
    match load_and_verify(cert, system) {
        Ok(v) if v.passed() => Ok(()),
        Ok(v) => Err(Failure::Verification(anyhow!(
            "{}: emitted certificate fails verification: {}",
            cert.display(),
            describe_failure(&v)
        ))),
        Err(e) => Err(Failure::Verification(anyhow!("{}: {e}", cert.display()))),
    }
}

fn cmd_bounds(
    system: &Path,
    run: &RunArgs,
    steps: Option<Vec<f64>>,
    format: Option<OutputFormat>,
    output: Option<&Path>,
    certificate_dir: Option<&Path>,
) -> Result<(), Failure> {
    let (sys, mut cfg) = load(system, run)?;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(f) = format {
        cfg.format = f;
    }
    cfg.validate(sys.dwell_time())
        .map_err(|e| usage(anyhow!("{}: {e}", system.display())))?;
    let results = run_sweep(&sys, &cfg);
    let text = match cfg.format {
        OutputFormat::Text => render_text(&results),
        OutputFormat::Csv => render_csv(&results).map_err(usage)?,
        OutputFormat::Json => render_json(&results),
    };
    emit(&text, output)?;
    if let Some(dir) = certificate_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(usage)?;
        for r in &results {
            if let Ok(o) = &r.outcome {
                if let Some(cert) = &o.certificate {
                    let path = dir.join(format!("cert_h{}.json", r.h));
                    emit_certificate(cert, &sys, &path).map_err(usage)?;
                    check_emitted(&path, system)?;
                }
            }
        }
    }
    for r in &results {
        match &r.outcome {
            Err(e) => log::error!("h = {}: {e}", r.h),
            Ok(o) => {
                if let Some(e) = &o.ipa_error {
                    log::error!("h = {}: {e}", r.h);
                }
            }
        }
    }
    match results.iter().filter(|r| r.failed()).count() {
        0 => Ok(()),
        n => Err(numerical(anyhow!("{n} of {} steps failed numerically", results.len()))),
    }
}

fn cmd_jsr(
    system: &Path,
    step: f64,
    run: &RunArgs,
    format: Option<OutputFormat>,
    certificate: Option<&Path>,
) -> Result<(), Failure> {
    let (sys, mut cfg) = load(system, run)?;
    cfg.steps = vec![step];
    cfg.validate(sys.dwell_time())
        .map_err(|e| usage(anyhow!("{}: {e}", system.display())))?;
    let out = run_step(&sys, step, &cfg).map_err(numerical)?;
    let cycle = out.report.leading_cycle.to_string();
    let rho = out.search.best.value;
    let text = match format.unwrap_or(cfg.format) {
        OutputFormat::Json => {
            jsr_json(step, rho, &cycle, out.search.best.edges(), out.certificate.as_ref())
        }
        _ => {
            let mut s = format!("h = {step}\nrho_hat = {rho:.10}\nsigma_h = {:.10}\nleading cycle = {cycle}\n", rho.ln());
            match &out.certificate {
                Some(c) => s.push_str(&format!(
                    "status = {}\nepsilon = {:e}\niterations = {}\nvertices = {}\n",
                    if c.is_certified() { "certified" } else { "approximate" },
                    c.epsilon,
                    c.iterations_used,
                    c.total_vertices()
                )),
                None => s.push_str("status = failed\n"),
            }
            s
        }
    };
    emit(&text, None)?;
    if let (Some(path), Some(cert)) = (certificate, &out.certificate) {
        emit_certificate(cert, &sys, path).map_err(usage)?;
        check_emitted(path, system)?;
    }
    match &out.ipa_error {
        Some(e) => Err(numerical(anyhow!("h = {step}: {e}"))),
        None => Ok(()),
    }
}

fn jsr_json(step: f64, rho: f64, cycle: &str, edges: &[usize], cert: Option<&MultinormCertificate>) -> String {
    let finite = |x: f64| x.is_finite().then_some(x);
    let v = serde_json::json!({
        "h": step,
        "rho_hat": finite(rho),
        "sigma_h": finite(rho.ln()),
        "leading_cycle": cycle,
        "cycle_edges": edges,
        "status": cert.map_or("failed", |c| if c.is_certified() { "certified" } else { "approximate" }),
        "epsilon": cert.and_then(|c| finite(c.epsilon)),
        "iterations": cert.map(|c| c.iterations_used),
        "vertices": cert.map(|c| c.total_vertices()),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

fn cmd_verify(certificate: &Path, system: &Path) -> Result<(), Failure> {
    match load_and_verify(certificate, system) {
        Ok(v) if v.passed() => {
            println!("certificate verified (worst margin {:e})", v.worst_margin);
            Ok(())
        }
        Ok(v) => Err(Failure::Verification(anyhow!(
            "verification failed: {} ({} violated containments)",
            describe_failure(&v),
            v.violations.len()
        ))),
        Err(CertError::Io(e)) => Err(usage(e)),
        Err(e) => Err(Failure::Verification(e.into())),
    }
}

fn cmd_plot2d(
    system: &Path,
    certificate: Option<&Path>,
    step: Option<f64>,
    run: &RunArgs,
    output: &Path,
) -> Result<(), Failure> {
    let (sys, cfg) = load(system, run)?;
    if sys.dim() != 2 {
        return Err(usage(anyhow!("plot2d needs a planar system, got d = {}", sys.dim())));
    }
    let cert = match (certificate, step) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(usage)?;
            let file = CertificateFile::from_json(&text, &p.display().to_string()).map_err(usage)?;
            let cert = file.to_certificate(&sys).map_err(|e| Failure::Verification(e.into()))?;
            let g = build_discretization(&sys, cert.step).map_err(usage)?;
            let v = verify_certificate(&g, &cert);
            if !v.passed() {
                return Err(Failure::Verification(anyhow!(
                    "verification failed: {}",
                    describe_failure(&v)
                )));
            }
            cert
        }
        (None, Some(h)) => {
            let mut cfg = cfg;
            cfg.steps = vec![h];
            cfg.validate(sys.dwell_time())
                .map_err(|e| usage(anyhow!("{}: {e}", system.display())))?;
            let out = run_step(&sys, h, &cfg).map_err(numerical)?;
            if let Some(e) = out.ipa_error {
                return Err(numerical(anyhow!("h = {h}: {e}")));
            }
            // Bounds are computed to surface domain errors before drawing.
            lyapunov_bounds(out.certificate.as_ref().expect("set without ipa error"), &sys, h).map_err(numerical)?;
            out.certificate.expect("set without ipa error")
        }
        (None, None) => return Err(usage(anyhow!("either --step or --certificate is required"))),
    };
    let g = build_discretization(&sys, cert.step).map_err(usage)?;
    let side = export_polytopes_2d(&cert, &g, output).map_err(usage)?;
    log::info!("wrote {} and {}", output.display(), side.display());
    Ok(())
}

fn cmd_generate(params: GeneratorParams, output: Option<&Path>) -> Result<(), Failure> {
    if params.dim == 0 || params.modes == 0 {
        return Err(usage(anyhow!("--dim and --modes must be positive")));
    }
    let sys = generate(&params).map_err(usage)?;
    let mut text = serde_json::to_string_pretty(&SystemFile::from_system(&sys)).map_err(usage)?;
    text.push('\n');
    emit(&text, output)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(usage)?;
    }
    match cli.command {
        Command::Bounds {
            system,
            run,
            steps,
            format,
            output,
            certificate_dir,
        } => cmd_bounds(&system, &run, steps, format, output.as_deref(), certificate_dir.as_deref()),
        Command::Jsr {
            system,
            step,
            run,
            format,
            certificate,
        } => cmd_jsr(&system, step, &run, format, certificate.as_deref()),
        Command::Verify { certificate, system } => cmd_verify(&certificate, &system),
        Command::Plot2d {
            system,
            certificate,
            step,
            run,
            output,
        } => cmd_plot2d(&system, certificate.as_deref(), step, &run, &output),
        Command::Generate {
            family,
            dim,
            modes,
            dwell_time,
            seed,
            output,
        } => cmd_generate(
            GeneratorParams {
                family,
                dim,
                modes,
                dwell_time,
                seed,
            },
            output.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
