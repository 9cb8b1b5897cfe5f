use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use relay_dde::atlas::{self, BifurcationPoint};
use relay_dde::classify::{classify, ClassifyConfig};
use relay_dde::export::{self, Table};
use relay_dde::map::{self, FixedPoint};
use relay_dde::sim::{simulate, Budget, SimOptions, SystemState, Termination};
use relay_dde::torus::{self, TorusConfig};
use relay_dde::{Parameters, Sign};

mod config;

const SUBCOMMANDS: [&str; 8] = [
    "simulate",
    "fixedpoint",
    "spectrum",
    "locus",
    "region",
    "period-diagram",
    "mode-trace",
    "torus-scan",
];

#[derive(Parser, Debug)]
#[command(name = "relay-dde", version, about = "Simulation and bifurcation analysis of a delayed relay bandpass loop")]
#[command(args_override_self = true)]
struct Cli {
    /// key = value file with defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// worker threads for parallel scans (default: all cores)
    #[arg(long, global = true, env = "RELAY_DDE_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Copy)]
struct ParamArgs {
    #[arg(long = "Q", value_parser = positive)]
    q: f64,
    #[arg(long = "Omega", value_parser = positive)]
    omega: f64,
    #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
    sigma: Sign,
}

impl ParamArgs {
    fn params(&self) -> relay_dde::Result<Parameters> {
        Parameters::new(self.q, self.omega, self.sigma)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct OmegaRange {
    #[arg(long)]
    omega_min: f64,
    #[arg(long)]
    omega_max: f64,
}

impl OmegaRange {
    fn get(&self) -> Result<(f64, f64), Failure> {
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min) {
            return Err(Failure::usage(format!("empty Omega range [{}, {}]", self.omega_min, self.omega_max)));
        }
        Ok((self.omega_min, self.omega_max))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Event-driven run from an initial history; JSON summary on stdout
    Simulate {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long, default_value_t = 20_000)]
        events: usize,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y0: f64,
        /// number of crossings evenly placed in the initial delay window
        #[arg(long, default_value_t = 0)]
        history_zeros: usize,
        /// start on the four-symbol orbit with this nu instead
        #[arg(long, value_name = "NU")]
        from_fixed_point: Option<usize>,
        /// displacement of y_Z when starting from a fixed point
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        perturb: f64,
        /// spacing of dense output written to --samples-out
        #[arg(long)]
        dense_dt: Option<f64>,
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[arg(long, default_value_t = ClassifyConfig::default().rel_tol)]
        rel_tol: f64,
        /// event table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed point of the reduced map
    Fixedpoint {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long)]
        nu: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Characteristic roots at the fixed point
    Spectrum {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long)]
        nu: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Neimark-Sacker points along the mode containing nu, or pitchfork points of nu
    Locus {
        #[arg(long, value_enum)]
        kind: LocusKind,
        #[arg(long)]
        nu: usize,
        #[arg(long = "Q", value_parser = positive)]
        q: f64,
        #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
        sigma: Sign,
        #[command(flatten)]
        range: OmegaRange,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Existence and stability over a (Q, Omega) grid
    Region {
        #[arg(long, value_delimiter = ',', required = true)]
        nu_list: Vec<usize>,
        #[arg(long)]
        q_min: f64,
        #[arg(long)]
        q_max: f64,
        #[arg(long, default_value_t = 400)]
        q_steps: usize,
        #[command(flatten)]
        range: OmegaRange,
        #[arg(long, default_value_t = 400)]
        omega_steps: usize,
        #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
        sigma: Sign,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inverse period against Omega for several nu, with bifurcation markers
    PeriodDiagram {
        #[arg(long, value_delimiter = ',', required = true)]
        nu_list: Vec<usize>,
        #[arg(long = "Q", value_parser = positive)]
        q: f64,
        #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
        sigma: Sign,
        #[command(flatten)]
        range: OmegaRange,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Follow one mode through relabelling corners until it ends
    ModeTrace {
        #[arg(long)]
        nu: usize,
        #[arg(long = "Q", value_parser = positive)]
        q: f64,
        #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
        sigma: Sign,
        #[command(flatten)]
        range: OmegaRange,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Poincare sections at H events over an Omega sweep
    TorusScan {
        #[arg(long = "Q", value_parser = positive)]
        q: f64,
        #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = parse_sigma)]
        sigma: Sign,
        #[command(flatten)]
        range: OmegaRange,
        /// number of Omega intervals; steps + 1 values are scanned
        #[arg(long, default_value_t = 12)]
        steps: usize,
        /// mode whose orbit seeds the scan
        #[arg(long, default_value_t = 3)]
        nu: usize,
        #[arg(long, default_value_t = 1e-2, allow_hyphen_values = true)]
        perturb: f64,
        #[arg(long, default_value_t = 100_000)]
        iterates: usize,
        #[arg(long, default_value_t = 0.2)]
        transient: f64,
        #[arg(long)]
        no_warm_start: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LocusKind {
    Ns,
    Pf,
}

/// A failure with its exit code: 1 for numerical or I/O errors, 2 for usage.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn usage(message: String) -> Self {
        Failure { code: 2, kind: "Usage".into(), message }
    }
}

impl From<relay_dde::Error> for Failure {
    fn from(e: relay_dde::Error) -> Self {
        Failure { code: 1, kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, kind: "Io".into(), message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: 1, kind: "Io".into(), message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 1, kind: "Io".into(), message: e.to_string() }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    message: &'a str,
    exit_code: u8,
}

fn write_table(t: &Table, out: Option<&Path>) -> Result<(), Failure> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Table as CSV or records as JSON lines, depending on `--format`.
fn emit<T: Serialize>(format: Format, kind: &str, records: &[T], table: impl FnOnce() -> Table, out: Option<&Path>) -> Result<(), Failure> {
    match format {
        Format::Csv => write_table(&table(), out),
        Format::Json => write_text(&export::json_lines(kind, records)?, out),
    }
}

fn summary<T: Serialize>(kind: &str, value: &T) -> Result<(), Failure> {
    let line = export::json_record(kind, value)?;
    let mut so = io::stdout().lock();
    writeln!(so, "{line}")?;
    Ok(())
}

fn parse_sigma(s: &str) -> Result<Sign, String> {
    match s.trim() {
        "1" | "+1" => Ok(Sign::Plus),
        "-1" => Ok(Sign::Minus),
        other => Err(format!("sigma must be 1 or -1, got {other}")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {s}"))
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    q: f64,
    omega: f64,
    sigma: Sign,
    events: usize,
    t_end: f64,
    termination: Termination,
    tag: relay_dde::classify::OrbitTag,
    label: Option<String>,
    period: Option<f64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FixedPointRecord<'a> {
    #[serde(flatten)]
    fp: &'a FixedPoint,
    x_h: f64,
    inv_period: f64,
    symbols: String,
    unstable_count: Option<usize>,
}

#[derive(Serialize)]
struct RootRecord {
    nu: usize,
    index: usize,
    re: f64,
    im: f64,
    modulus: f64,
}

#[derive(Serialize)]
struct TorusSummary<'a> {
    q: f64,
    omega: f64,
    tag: relay_dde::classify::OrbitTag,
    label: &'a Option<String>,
    points: usize,
    closed_curve: bool,
    extent: Option<f64>,
    error: &'a Option<String>,
}

fn symbols_string(fp: &FixedPoint) -> String {
    map::symbols(fp).iter().map(|k| k.symbol()).collect::<Vec<_>>().join(",")
}

fn run(cli: Cli) -> Result<(), Failure> {
    let format = cli.format;
    match cli.command {
        Command::Simulate {
            p,
            events,
            t_max,
            x0,
            y0,
            history_zeros,
            from_fixed_point,
            perturb,
            dense_dt,
            samples_out,
            rel_tol,
            out,
        } => {
            let params = p.params()?;
            let st0 = match from_fixed_point {
                Some(nu) => torus::fixed_point_seed(nu, &params, perturb)?,
                None => SystemState::oscillating_history(history_zeros, x0, y0)?,
            };
            if dense_dt.is_some_and(|dt| !(dt > 0.0)) {
                return Err(Failure::usage("--dense-dt must be positive".into()));
            }
            let opts = SimOptions { dense_dt, ..Default::default() };
            let rec = simulate(&params, &st0, Budget { max_events: events, t_max }, &opts)?;
            let class = classify(&rec, &ClassifyConfig { rel_tol, ..Default::default() });
            if let Some(path) = &out {
                emit(format, "event", &rec.events, || export::events_table(&rec.events), Some(path))?;
            }
            if let (Some(path), Some(samples)) = (&samples_out, &rec.samples) {
                emit(format, "sample", samples, || export::samples_table(samples), Some(path))?;
            }
            summary(
                "simulate",
                &SimulateSummary {
                    q: params.q(),
                    omega: params.omega(),
                    sigma: params.sigma(),
                    events: rec.events.len(),
                    t_end: rec.final_state.t,
                    termination: rec.termination,
                    tag: class.tag,
                    label: class.label_string(),
                    period: class.period,
                    out,
                },
            )
        }
        Command::Fixedpoint { p, nu, out } => {
            let fp = map::fixed_point(nu, &p.params()?)?;
            let rec = FixedPointRecord {
                fp: &fp,
                x_h: map::x_h(&fp),
                inv_period: fp.inv_period(),
                symbols: symbols_string(&fp),
                unstable_count: map::spectrum(&fp).ok().map(|s| s.unstable_count),
            };
            emit(format, "fixedpoint", &[rec], || export::fixed_point_table(&fp), out.as_deref())
        }
        Command::Spectrum { p, nu, out } => {
            let fp = map::fixed_point(nu, &p.params()?)?;
            let spec = map::spectrum(&fp)?;
            let roots: Vec<RootRecord> = spec
                .roots
                .iter()
                .enumerate()
                .map(|(index, z)| RootRecord { nu, index, re: z.re, im: z.im, modulus: z.norm() })
                .collect();
            let table = || {
                let mut t = Table::new(&["nu", "index", "re", "im", "modulus"]);
                for r in &roots {
                    t.push(vec![
                        r.nu.to_string(),
                        r.index.to_string(),
                        export::fmt_f64(r.re),
                        export::fmt_f64(r.im),
                        export::fmt_f64(r.modulus),
                    ]);
                }
                t
            };
            emit(format, "root", &roots, table, out.as_deref())
        }
        Command::Locus { kind, nu, q, sigma, range, out } => {
            let range = range.get()?;
                        let points: Vec<BifurcationPoint> = match kind {
                LocusKind::Ns => atlas::mode_ns_locus(nu, q, sigma, range)?,
                LocusKind::Pf => atlas::pitchfork_locus(nu, q, sigma, range)?,
            };
            emit(format, "bifurcation", &points, || export::bifurcation_table(&points), out.as_deref())
        }
        Command::Region { nu_list, q_min, q_max, q_steps, range, omega_steps, sigma, out } => {
            let (om_lo, om_hi) = range.get()?;
            if !(q_min > 0.0 && q_max > q_min) || q_steps < 2 || omega_steps < 2 {
                return Err(Failure::usage("region needs q_min < q_max and at least 2 steps per axis".into()));
            }
            let grid = atlas::region_scan(
                &nu_list,
                &atlas::linspace(q_min, q_max, q_steps),
                &atlas::linspace(om_lo, om_hi, omega_steps),
                sigma,
            )?;
            emit(format, "region", &[&grid], || export::region_table(&grid), out.as_deref())
        }
        Command::PeriodDiagram { nu_list, q, sigma, range, samples, out } => {
            if samples < 2 {
                return Err(Failure::usage("--samples must be at least 2".into()));
            }
            let d = atlas::period_diagram(&nu_list, q, sigma, range.get()?, samples)?;
            emit(format, "period_diagram", &[&d], || export::period_diagram_table(&d), out.as_deref())
        }
        Command::ModeTrace { nu, q, sigma, range, steps, out } => {
            if steps < 2 {
                return Err(Failure::usage("--steps must be at least 2".into()));
            }
            let m = atlas::mode_trace(nu, q, sigma, range.get()?, steps)?;
            emit(format, "mode_branch", &[&m], || export::mode_branch_table(&m), out.as_deref())
        }
        Command::TorusScan { q, sigma, range, steps, nu, perturb, iterates, transient, no_warm_start, out } => {
            let (lo, hi) = range.get()?;
            if steps < 1 || iterates < 1 || !(0.0..1.0).contains(&transient) {
                return Err(Failure::usage("torus-scan needs steps >= 1, iterates >= 1, 0 <= transient < 1".into()));
            }
                        let omegas = atlas::linspace(lo, hi, steps + 1);
            let p0 = Parameters::new(q, omegas[0], sigma)?;
            let seed = torus::fixed_point_seed(nu, &p0, perturb)?;
            let cfg = TorusConfig {
                iterates,
                transient,
                warm_start: !no_warm_start,
                reseed: Some((nu, perturb)),
                ..Default::default()
            };
            let slices = torus::torus_scan(q, sigma, &omegas, &seed, &cfg)?;
            match format {
                Format::Csv => write_table(&export::torus_table(q, &slices), out.as_deref())?,
                Format::Json => {
                    let mut text = String::new();
                    for s in &slices {
                        for h in &s.section {
                            #[derive(Serialize)]
                            struct Point {
                                q: f64,
                                omega: f64,
                                x_h: f64,
                                y_h: f64,
                            }
                            text.push_str(&export::json_record("section_point", &Point { q, omega: s.omega, x_h: h.x, y_h: h.y })?);
                            text.push('\n');
                        }
                    }
                    write_text(&text, out.as_deref())?;
                }
            }
            // with no output file the data went to stdout already
            if out.is_some() {
                for s in &slices {
                    summary(
                        "torus_slice",
                        &TorusSummary {
                            q,
                            omega: s.omega,
                            tag: s.tag,
                            label: &s.label,
                            points: s.section.len(),
                            closed_curve: s.is_closed_curve(),
                            extent: s.shape.map(|c| c.extent),
                            error: &s.error,
                        },
                    )?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = match config::splice(std::env::args().collect(), &SUBCOMMANDS) {
        Ok(a) => a,
        Err(msg) => return report(Failure::usage(msg)),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return report(Failure::usage("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(Failure { code: 1, kind: "Threads".into(), message: e.to_string() });
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let rec = ErrorRecord { kind: &f.kind, message: &f.message, exit_code: f.code };
    match export::json_record("error", &rec) {
        Ok(line) => eprintln!("{line}"),
        Err(_) => eprintln!("{}: {}", f.kind, f.message),
    }
    ExitCode::from(f.code)
}
