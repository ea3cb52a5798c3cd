//! Command-line front end: worst-case solves from JSON problems, the
//! concentration bounds, the robust-stability case study and the
//! verification suites.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use momentbound_core::chernoff::{self, BoundError, CumulantSpec};
use momentbound_core::expr::{self, Expr, ExprError};
use momentbound_core::model::{BoundCertificate, InequalityResult, MomentProblem, ProblemLoadError};
use momentbound_core::oracle::{self, OracleError, SuiteConfig, SuiteReport, CHECK_SUITES, DOMINANCE_SUITES};
use momentbound_core::routh;
use momentbound_core::vecbounds::{self, ComponentBounds, EllipsoidSpec, EnvelopeSpec};
use momentbound_core::worstcase::{self, SolverSettings, WorstCaseError};

/// Published upper bound on the instability probability of the plant.
pub const STABILITY_REFERENCE: f64 = 0.00031;
/// Window the certified value is expected to land in.
pub const STABILITY_WINDOW: (f64, f64) = (1.0e-4, 5.0e-4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Human,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "momentbound", version, about = "Worst-case moment bounds and concentration inequalities")]
struct Cli {
    #[arg(long, value_enum, default_value_t = OutputMode::Human, global = true)]
    output: OutputMode,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a worst-case problem given as JSON.
    Solve {
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Evaluate one of the concentration bounds.
    Bound {
        #[command(subcommand)]
        family: BoundFamily,
    },
    /// Worst-case instability probability of the uncertain quartic plant.
    Stability {
        #[command(flatten)]
        solver: SolverFlags,
        /// Also write the generated problem JSON here.
        #[arg(long)]
        write_problem: Option<PathBuf>,
    },
    /// Run a verification suite by name, or `all`.
    Verify {
        suite: String,
        /// Monte Carlo replicates per dominance cell.
        #[arg(long)]
        reps: Option<u64>,
    },
    /// Parse an expression and print its canonical form.
    ParseCheck {
        expr: String,
        /// Comma-separated variable names; defaults to x1..x{dim}.
        #[arg(long)]
        vars: Option<String>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
    },
}

#[derive(Debug, Args)]
struct SolverFlags {
    #[arg(long)]
    bnb_tol: Option<f64>,
    #[arg(long)]
    max_boxes: Option<usize>,
    #[arg(long)]
    multistarts: Option<usize>,
    #[arg(long)]
    gradient_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum BoundFamily {
    /// Increments in [0, 1] with mean mu.
    HoeffdingMean {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        m: u64,
    },
    /// Increments bounded by b with variance nu.
    BoundedVariance {
        #[arg(long)]
        b: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        m: u64,
    },
    /// Gaussian increments with mean mu and variance nu.
    NormalMean {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        m: u64,
    },
    /// Poisson increments with mean lambda.
    PoissonMean {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        m: u64,
    },
    /// Numerical Chernoff infimum for a cumulant bound phi(s).
    Chernoff {
        /// Expression in `s`.
        #[arg(long)]
        phi: String,
        #[arg(long, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        m: u64,
    },
    /// I.i.d. vectors with norm at most 1 and E||X||^2 <= v.
    IidBounded {
        #[arg(long)]
        v: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
    },
    /// Vector martingale with increment norm bounds c_i.
    Martingale {
        /// Comma-separated c_i.
        #[arg(long, value_delimiter = ',')]
        increments: Vec<f64>,
        #[arg(long)]
        eps: f64,
    },
    /// Optimized MGF bound for a bound g(s) on E exp(s||X||).
    MgfVector {
        /// Expression in `s`.
        #[arg(long)]
        g: String,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        n: u64,
    },
    /// Vectors with norm at most r and average variance sigma^2.
    VarianceRange {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
    },
    /// Small-deviation bound from the sup-norm constant c_n.
    SmallDeviation {
        #[arg(long)]
        cn: f64,
        #[arg(long)]
        x: f64,
    },
    /// Independent bounded components.
    Componentwise {
        /// Comma-separated radii r_i; requires --sigma2.
        #[arg(long, value_delimiter = ',', conflicts_with = "ranges")]
        radii: Option<Vec<f64>>,
        #[arg(long, requires = "radii")]
        sigma2: Option<f64>,
        /// Comma-separated `a:b` ranges.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ranges: Option<Vec<String>>,
        #[arg(long)]
        eps: f64,
    },
    /// Norm and second-moment envelope from a support description.
    MomentEnvelope {
        #[arg(long, conflicts_with = "a")]
        diameter: Option<f64>,
        /// Row-major matrix, rows separated by `;`.
        #[arg(long, allow_hyphen_values = true, requires_all = ["b", "c", "mu"])]
        a: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b: Option<Vec<f64>>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
    },
}

/// A failure with its error code and process exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: String,
    pub message: String,
    pub exit: i32,
}

impl Failure {
    fn usage(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            exit: 2,
        }
    }

    fn domain(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            exit: 1,
        }
    }
}

impl From<ExprError> for Failure {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Domain { .. } => Failure::domain(e.code(), e.to_string()),
            _ => Failure::usage(e.code(), e.to_string()),
        }
    }
}

impl From<BoundError> for Failure {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::Expr(inner) => inner.into(),
            other => Failure::domain(other.code(), other.to_string()),
        }
    }
}

impl From<WorstCaseError> for Failure {
    fn from(e: WorstCaseError) -> Self {
        match e {
            WorstCaseError::Expr(inner) => inner.into(),
            WorstCaseError::BadSettings(_) | WorstCaseError::ObjectiveMismatch(_) => {
                Failure::usage(e.code(), e.to_string())
            }
            other => Failure::domain(other.code(), other.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::UnknownSuite(_) => Failure::usage(e.code(), e.to_string()),
            OracleError::Expr(inner) => inner.into(),
            OracleError::Bound(inner) => inner.into(),
            other => Failure::domain(other.code(), other.to_string()),
        }
    }
}

impl From<ProblemLoadError> for Failure {
    fn from(e: ProblemLoadError) -> Self {
        match &e {
            ProblemLoadError::Json(_) => Failure::usage("BAD_JSON", e.to_string()),
            ProblemLoadError::Model(m) => Failure::usage(m.code(), e.to_string()),
        }
    }
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI; `argv[0]` is the program name.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_mode = json_requested(&argv);
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let f = Failure::usage("USAGE", e.to_string().trim().to_string());
            report(err, json_mode, &f);
            return f.exit;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            report(err, cli.output == OutputMode::Json, &f);
            f.exit
        }
    }
}

fn json_requested(argv: &[OsString]) -> bool {
    argv.windows(2).any(|w| w[0] == "--output" && w[1] == "json") || argv.iter().any(|a| a == "--output=json")
}

fn report(err: &mut dyn Write, json_mode: bool, f: &Failure) {
    if json_mode {
        let line = json!({"error": f.code, "message": f.message});
        let _ = writeln!(err, "{line}");
    } else {
        let _ = writeln!(err, "error[{}]: {}", f.code, f.message);
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::usage("IO_ERROR", e.to_string())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Solve { problem, solver } => {
            let text = std::fs::read_to_string(problem)
                .map_err(|e| Failure::usage("IO_ERROR", format!("{}: {e}", problem.display())))?;
            let p = MomentProblem::from_json(&text)?;
            let cert = worstcase::solve(&p, &settings(cli, solver))?;
            print_certificate(out, cli.output, &cert)?;
            Ok(0)
        }
        Command::Bound { family } => {
            bound(cli.output, family, out)?;
            Ok(0)
        }
        Command::Stability { solver, write_problem } => stability(cli, solver, write_problem.as_ref(), out),
        Command::Verify { suite, reps } => verify(cli, suite, *reps, out),
        Command::ParseCheck { expr: text, vars, dim } => {
            let names: Vec<String> = match vars {
                Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
                None => expr::indexed_vars(*dim),
            };
            let e = Expr::parse_with(text, &names)?;
            let canonical = e.render();
            match cli.output {
                OutputMode::Json => {
                    emit_json(out, &json!({"input": text, "canonical": canonical}))?;
                }
                OutputMode::Human => writeln!(out, "{canonical}").map_err(io_failure)?,
            }
            Ok(0)
        }
    }
}

fn settings(cli: &Cli, flags: &SolverFlags) -> SolverSettings {
    let d = SolverSettings::default();
    SolverSettings {
        multistarts: flags.multistarts.unwrap_or(d.multistarts),
        gradient_iters: flags.gradient_iters.unwrap_or(d.gradient_iters),
        bnb_tol: flags.bnb_tol.unwrap_or(d.bnb_tol),
        bnb_max_boxes: flags.max_boxes.unwrap_or(d.bnb_max_boxes),
        seed: cli.seed.unwrap_or(d.seed),
        threads: cli.threads,
        ..d
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::domain("SERIALIZE", e.to_string()))?;
    writeln!(out, "{text}").map_err(io_failure)
}

fn print_certificate(out: &mut dyn Write, mode: OutputMode, c: &BoundCertificate) -> Result<(), Failure> {
    match mode {
        OutputMode::Json => emit_json(out, c),
        OutputMode::Human => {
            let mut text = format!(
                "status          {}\nupper           {}\nlower           {}\ngap             {:e}\nboxes explored  {}\niterations      {}\ntolerance       {:e}\nwitness ({} points)\n",
                c.status.as_str(),
                c.upper,
                c.lower,
                c.gap(),
                c.boxes_explored,
                c.iterations,
                c.tolerance_used,
                c.witness.len()
            );
            for p in &c.witness.points {
                text.push_str(&format!("  w = {:<22} x = {:?}\n", p.weight, p.location));
            }
            write!(out, "{text}").map_err(io_failure)
        }
    }
}

fn print_inequality(out: &mut dyn Write, mode: OutputMode, r: &InequalityResult) -> Result<(), Failure> {
    match mode {
        OutputMode::Json => emit_json(out, r),
        OutputMode::Human => {
            let zeta = r.zeta.map_or_else(|| "-".to_string(), |z| z.to_string());
            writeln!(
                out,
                "bound          {}\nclipped_bound  {}\nrate           {}\nzeta           {zeta}",
                r.bound, r.clipped_bound, r.rate
            )
            .map_err(io_failure)
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::usage("USAGE", format!("range '{s}' is not of the form a:b"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, Failure> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Failure::usage("USAGE", format!("bad matrix entry '{v}'")))
                })
                .collect()
        })
        .collect()
}

fn bound(mode: OutputMode, family: &BoundFamily, out: &mut dyn Write) -> Result<(), Failure> {
    let result = match family {
        BoundFamily::HoeffdingMean { mu, theta, m } => chernoff::uniform_bound_bernoulli(*mu, *theta, *m)?,
        BoundFamily::BoundedVariance { b, nu, eps, m } => {
            chernoff::uniform_bound_bounded_variance(*b, *nu, *eps, *m)?
        }
        BoundFamily::NormalMean { mu, nu, theta, m } => chernoff::uniform_bound_normal(*mu, *nu, *theta, *m)?,
        BoundFamily::PoissonMean { lambda, theta, m } => chernoff::uniform_bound_poisson(*lambda, *theta, *m)?,
        BoundFamily::Chernoff { phi, lo, hi, eps, m } => {
            let spec = CumulantSpec::new(phi, *lo, *hi)?;
            let inf = chernoff::chernoff_inf(&spec, *eps)?;
            let r = inf.for_samples(*m);
            return match mode {
                OutputMode::Json => emit_json(out, &json!({"result": r, "infimum": inf})),
                OutputMode::Human => {
                    print_inequality(out, mode, &r)?;
                    writeln!(out, "phi(zeta)      {}\nphi(zeta)/zeta {}", inf.phi_zeta, inf.ratio_phi_zeta)
                        .map_err(io_failure)
                }
            };
        }
        BoundFamily::IidBounded { v, n, eps } => vecbounds::iid_bounded_bound(*v, *n, *eps)?,
        BoundFamily::Martingale { increments, eps } => vecbounds::martingale_bound(increments, *eps)?,
        BoundFamily::MgfVector { g, tau, eps, n } => {
            let g = Expr::parse_with(g, &["s"])?;
            vecbounds::mgf_vector_bound(&g, *tau, *eps, *n)?
        }
        BoundFamily::VarianceRange { sigma, r, n, eps } => {
            let v = vecbounds::variance_range_bound(*sigma, *r, *n, *eps)?;
            return match mode {
                OutputMode::Json => emit_json(out, &v),
                OutputMode::Human => {
                    let mut text = String::new();
                    for (name, t) in [
                        ("tier1", v.tier1),
                        ("tier2", v.tier2),
                        ("tier2_relaxed", v.tier2_relaxed),
                        ("tier3", v.tier3),
                    ] {
                        text.push_str(&format!("{name:<14} {} (clipped {})\n", t.bound, t.clipped_bound));
                    }
                    if v.beyond_range {
                        text.push_str("eps exceeds r: the event is impossible\n");
                    }
                    write!(out, "{text}").map_err(io_failure)
                }
            };
        }
        BoundFamily::SmallDeviation { cn, x } => vecbounds::small_deviation_bound(*cn, *x)?,
        BoundFamily::Componentwise {
            radii,
            sigma2,
            ranges,
            eps,
        } => {
            let spec = match (radii, ranges) {
                (Some(radii), None) => ComponentBounds::Radii {
                    radii: radii.clone(),
                    sigma2: sigma2.ok_or_else(|| Failure::usage("USAGE", "--radii needs --sigma2"))?,
                },
                (None, Some(ranges)) => ComponentBounds::Ranges {
                    ranges: ranges.iter().map(|r| parse_range(r)).collect::<Result<_, _>>()?,
                },
                _ => return Err(Failure::usage("USAGE", "give exactly one of --radii or --ranges")),
            };
            vecbounds::componentwise_tail(&spec, *eps)?
        }
        BoundFamily::MomentEnvelope { diameter, a, b, c, mu } => {
            let spec = match (diameter, a) {
                (Some(d), None) => EnvelopeSpec::Diameter(*d),
                (None, Some(a)) => {
                    let (Some(b), Some(c), Some(mu)) = (b, c, mu) else {
                        return Err(Failure::usage("USAGE", "--a needs --b, --c and --mu"));
                    };
                    EnvelopeSpec::Ellipsoid(EllipsoidSpec::from_rows(&parse_matrix(a)?, b.clone(), *c, mu.clone())?)
                }
                _ => return Err(Failure::usage("USAGE", "give exactly one of --diameter or --a")),
            };
            let env = vecbounds::moment_envelope(&spec)?;
            return match mode {
                OutputMode::Json => emit_json(out, &env),
                OutputMode::Human => writeln!(
                    out,
                    "norm_bound           {}\nsecond_moment_bound  {}",
                    env.norm_bound, env.second_moment_bound
                )
                .map_err(io_failure),
            };
        }
    };
    print_inequality(out, mode, &result)
}

fn stability(
    cli: &Cli,
    flags: &SolverFlags,
    write_problem: Option<&PathBuf>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let p = routh::build_stability_problem();
    if let Some(path) = write_problem {
        std::fs::write(path, p.to_json()).map_err(|e| Failure::usage("IO_ERROR", format!("{}: {e}", path.display())))?;
    }
    let cert = worstcase::sup_probability(&p, &settings(cli, flags))?;
    let margin = p.event.eval_interval(&p.domain)?;
    let in_window = cert.upper >= STABILITY_WINDOW.0 && cert.upper <= STABILITY_WINDOW.1;
    match cli.output {
        OutputMode::Json => emit_json(
            out,
            &json!({
                "certificate": cert,
                "reference": STABILITY_REFERENCE,
                "window": [STABILITY_WINDOW.0, STABILITY_WINDOW.1],
                "in_window": in_window,
                "margin_range": [margin.lo, margin.hi],
            }),
        )?,
        OutputMode::Human => {
            print_certificate(out, cli.output, &cert)?;
            writeln!(
                out,
                "stability margin over the perturbation box lies in [{}, {}]",
                margin.lo, margin.hi
            )
            .map_err(io_failure)?;
            writeln!(
                out,
                "reference {STABILITY_REFERENCE}: certified upper {:e} is {} the window [{:e}, {:e}]",
                cert.upper,
                if in_window { "inside" } else { "outside" },
                STABILITY_WINDOW.0,
                STABILITY_WINDOW.1
            )
            .map_err(io_failure)?;
        }
    }
    Ok(0)
}

fn verify(cli: &Cli, suite: &str, reps: Option<u64>, out: &mut dyn Write) -> Result<i32, Failure> {
    let d = SuiteConfig::default();
    let cfg = SuiteConfig {
        reps: reps.unwrap_or(d.reps),
        seed: cli.seed.unwrap_or(d.seed),
    };
    let names: Vec<&str> = if suite == "all" {
        DOMINANCE_SUITES.iter().chain(CHECK_SUITES.iter()).copied().collect()
    } else {
        vec![suite]
    };
    let reports: Vec<SuiteReport> = oracle::in_pool(cli.threads, || {
        names.iter().map(|n| oracle::run_suite(n, &cfg)).collect::<Result<Vec<_>, _>>()
    })?;
    match cli.output {
        OutputMode::Json if reports.len() == 1 => emit_json(out, &reports[0])?,
        OutputMode::Json => emit_json(out, &reports)?,
        OutputMode::Human => {
            let mut text = String::new();
            for r in &reports {
                text.push_str(&format!(
                    "{:<28} {:>4} cells  {} violations\n",
                    r.suite,
                    r.cells.len(),
                    r.violations
                ));
                for c in r.cells.iter().filter(|c| !c.ok) {
                    text.push_str(&format!(
                        "  FAIL {}: value {} reference {} tolerance {}\n",
                        c.label, c.value, c.reference, c.tolerance
                    ));
                }
            }
            write!(out, "{text}").map_err(io_failure)?;
        }
    }
    Ok(if reports.iter().all(SuiteReport::passed) { 0 } else { 1 })
}
