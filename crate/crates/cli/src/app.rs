//! Subcommands and the exit-code contract: 0 success, 1 runtime failure,
//! 2 configuration or usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use entangled_mdi::optimize::{loss_grid, optimize_point, scan_curve, Curve, CurvePoint, Mode};

use crate::config::ScenarioConfig;
use crate::{baseline, compare, output};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Thread-count override for the parallel scans.
pub const THREADS_ENV: &str = "ENTMDI_THREADS";

#[derive(Debug, Parser)]
#[command(name = "entmdi", version, about = "Key rates of MDI-QKD with an entangled source between two relays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize one loss value and print the result.
    Point {
        config: PathBuf,
        #[arg(long = "loss-db", allow_negative_numbers = true)]
        loss_db: f64,
        /// Also report the loss as fiber length.
        #[arg(long)]
        fiber: bool,
    },
    /// Optimize a range of losses and write a curve file.
    Scan {
        config: PathBuf,
        /// `min:max:step` in dB.
        #[arg(long = "loss-range")]
        loss_range: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append a `fiber_km` column.
        #[arg(long)]
        fiber: bool,
        /// Compute the two-fold single-relay reference curve (asymptotic) instead.
        #[arg(long = "single-relay")]
        single_relay: bool,
    },
    /// Join two curve files on loss and report cutoff and crossover differences.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Joined table; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn config_error(message: impl ToString) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.to_string() }
}

fn runtime_error(message: impl ToString) -> Failure {
    Failure { code: EXIT_RUNTIME, message: message.to_string() }
}

/// Parses `min:max:step`.
pub fn parse_loss_range(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("loss range `{s}` is not min:max:step"));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|_| format!("`{p}` in loss range `{s}` is not a number"))?;
    }
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(lo >= 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(format!("loss range `{s}` needs 0 <= min <= max"));
    }
    if hi > lo && !(step > 0.0 && step.is_finite()) {
        return Err(format!("loss range `{s}` needs a positive step"));
    }
    Ok((lo, hi, step))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_error(format!("{THREADS_ENV}=`{raw}` is not a positive integer")))?;
    // a pool built earlier in the same process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime_error(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| runtime_error(e)),
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Asymptotic => "asymptotic",
        Mode::Finite { .. } => "finite",
    }
}

fn warn_flags(points: &[CurvePoint], stderr: &mut dyn Write) {
    for p in points {
        if p.flags.truncation {
            let _ = writeln!(stderr, "warning: {} dB: truncated photon-number tail {:e}", p.total_loss_db, p.diagnostics.truncated_tail);
        }
        if p.flags.insufficient_statistics && p.r_optimal == 0.0 {
            let _ = writeln!(stderr, "warning: {} dB: too few counts to bound the single-photon yield", p.total_loss_db);
        }
    }
}

fn point_report(cfg: &ScenarioConfig, p: &CurvePoint, fiber: bool) -> String {
    let alpha = cfg.fiber.alpha_db_per_km;
    let v = &p.variables;
    let d = &p.diagnostics;
    let opt = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    let mut s = format!("mode            {}\n", mode_name(cfg.mode()));
    s += &format!("total loss      {} dB", p.total_loss_db);
    if fiber {
        s += &format!(" ({:.1} km at {alpha} dB/km)", p.fiber_km(alpha));
    }
    s += &format!("\nkey rate        {:.6e} bits per pulse\n", p.r_optimal);
    s += &format!("mu_a, mu_b      {:.6e}, {:.6e}\n", v.mu_a, v.mu_b);
    s += &format!("mu_c            {:.6e}\n", v.mu_c);
    s += &format!("split_a, split_b {:.4}, {:.4}\n", v.split_a, v.split_b);
    if let (Some(a), Some(b)) = (v.decoy_a, v.decoy_b) {
        s += &format!("weak decoys     {a:.6e}, {b:.6e}\n");
    }
    s += &format!("Q_Z             {:.6e}\nE_Z             {}\ne11_X           {}\n", d.q_z, opt(d.e_z), opt(d.e11_x));
    let mut flags = Vec::new();
    if p.flags.dark_count_floor {
        flags.push("dark_count_floor");
    }
    if p.flags.truncation {
        flags.push("truncation");
    }
    if p.flags.insufficient_statistics {
        flags.push("insufficient_statistics");
    }
    s += &format!("flags           {}\n\n", if flags.is_empty() { "none".to_string() } else { flags.join(",") });
    s += &output::curve_to_string(std::slice::from_ref(p), fiber.then_some(alpha));
    s
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Point { config, loss_db, fiber } => {
            let cfg = ScenarioConfig::load(&config).map_err(config_error)?;
            if !(loss_db >= 0.0 && loss_db.is_finite()) {
                return Err(config_error(format!("--loss-db {loss_db} must be finite and non-negative")));
            }
            configure_threads()?;
            let p = optimize_point(loss_db, &cfg.template(), cfg.mode()).map_err(runtime_error)?;
            warn_flags(std::slice::from_ref(&p), stderr);
            write_or_print(None, &point_report(&cfg, &p, fiber), stdout)
        }
        Command::Scan { config, loss_range, out, fiber, single_relay } => {
            let cfg = ScenarioConfig::load(&config).map_err(config_error)?;
            let (lo, hi, step) = parse_loss_range(&loss_range).map_err(config_error)?;
            configure_threads()?;
            let template = cfg.template();
            let curve: Curve = if single_relay {
                let losses = loss_grid(lo, hi, step).map_err(config_error)?;
                baseline::scan_curve(&losses, &template).map_err(runtime_error)?
            } else {
                scan_curve(lo, hi, step, &template, cfg.mode()).map_err(runtime_error)?
            };
            warn_flags(&curve.points, stderr);
            let text = output::curve_to_string(&curve.points, fiber.then_some(cfg.fiber.alpha_db_per_km));
            write_or_print(out.as_deref(), &text, stdout)?;
            let cutoff = curve.cutoff_db().map_or("none".to_string(), |c| format!("{c} dB"));
            let _ = writeln!(stderr, "cutoff: {cutoff}");
            Ok(())
        }
        Command::Compare { a, b, out } => {
            let read = |p: &Path| -> Result<Vec<compare::Sample>, Failure> {
                let f = std::fs::File::open(p).map_err(|e| runtime_error(format!("{}: {e}", p.display())))?;
                compare::read_curve(f, &p.display().to_string()).map_err(runtime_error)
            };
            let c = compare::compare(&read(&a)?, &read(&b)?);
            if c.is_empty() {
                let _ = writeln!(stderr, "warning: the two curves share no loss values; nothing to join");
            }
            write_or_print(out.as_deref(), &compare::joined_csv(&c), stdout)?;
            write_or_print(None, &compare::summary(&c), stdout)
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
