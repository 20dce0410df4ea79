//! Command-line front end. Reports are `key=value` lines; exit codes are
//! 0 (nonsingular and solved, or agreement), 2 (singular) and 1 (error).

use std::io::{Read, Write};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::certify::{certify_system, Certificate, Method};
use crate::error::{Error, Result};
use crate::kernel::Matrix;
use crate::model::{parse_system, serialize_solution, serialize_system, StarFlag, SylvesterSystem};
use crate::oracle::{gen_dense, gen_random, oracle_solve, relative_residual, residuals, BruteOutcome, DEFAULT_CAP};
use crate::trisolve::{solve_periodic, solve_system, solve_triangular};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;

/// Largest solution difference accepted by `oracle-compare`.
pub const ORACLE_DIFF_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "sylsolve", version, about = "Coupled generalized Sylvester and star-Sylvester systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a system and write the solution.
    Solve {
        #[arg(long)]
        input: String,
        #[arg(long)]
        output: Option<String>,
        #[arg(long)]
        check_residual: bool,
    },
    /// Certify nonsingularity.
    Check {
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Formal)]
        method: MethodArg,
    },
    /// Write a random periodic instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value = "1")]
        star: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<String>,
        /// Dense coefficients instead of triangular ones.
        #[arg(long)]
        dense: bool,
    },
    /// Time solves over a list of sizes; CSV on stdout, slope on stderr.
    Bench {
        #[arg(long, value_enum, default_value_t = BenchMode::N)]
        mode: BenchMode,
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<usize>,
        #[arg(long, default_value = "T")]
        star: String,
        /// Fixed r in mode n.
        #[arg(long, default_value_t = 3)]
        r: usize,
        /// Fixed n in mode r.
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Include the periodic Schur phase (dense instances).
        #[arg(long)]
        with_schur: bool,
    },
    /// Compare the fast solver with the Kronecker reference.
    OracleCompare {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Formal,
    Pencil,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    N,
    R,
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn write_output(path: Option<&str>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) if p != "-" => std::fs::write(p, text)?,
        _ => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_star(s: &str) -> Result<StarFlag> {
    StarFlag::parse(s).ok_or_else(|| Error::Unsupported(format!("unknown star flag {:?}", s)))
}

fn load(path: &str) -> Result<SylvesterSystem> {
    parse_system(&read_input(path)?)
}

/// `key=value` lines for a certificate.
pub fn certificate_lines(cert: &Certificate, prefix: &str) -> Vec<String> {
    let mut lines = vec![
        format!("{}verdict={}", prefix, cert.verdict),
        format!("{}reason={}", prefix, cert.reason),
        format!("{}method={}", prefix, cert.method),
    ];
    if let Some(c) = cert.component {
        lines.push(format!("{}component={}", prefix, c + 1));
    }
    if !cert.detail.is_empty() {
        lines.push(format!("{}detail={}", prefix, cert.detail));
    }
    for (k, w) in cert.witnesses.iter().enumerate() {
        lines.push(format!("{}witness{}={}", prefix, k + 1, w));
    }
    for (k, w) in cert.near_misses.iter().enumerate() {
        lines.push(format!("{}near_miss{}={}", prefix, k + 1, w));
    }
    lines
}

fn emit(out: &mut dyn Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(out, "{}", l)?;
    }
    Ok(())
}

fn cmd_solve(input: &str, output: Option<&str>, check: bool, out: &mut dyn Write) -> Result<i32> {
    let sys = load(input)?;
    let t0 = Instant::now();
    let solved = solve_system(&sys);
    let secs = t0.elapsed().as_secs_f64();
    let xs = match solved {
        Ok(xs) => xs,
        Err(Error::Singular(cert)) => {
            let mut lines = vec!["status=singular".to_string()];
            lines.extend(certificate_lines(&cert, ""));
            emit(out, &lines)?;
            return Ok(EXIT_SINGULAR);
        }
        Err(e) => return Err(e),
    };
    let text = serialize_solution(&xs);
    let mut lines = vec!["status=solved".to_string()];
    lines.push(format!("n={}", sys.n));
    lines.push(format!("r={}", sys.equations.len()));
    lines.push(format!("seconds={:.6}", secs));
    lines.push(format!("flop_model={}", sys.n.pow(3) * sys.equations.len()));
    if check {
        let (rk, total) = residuals(&sys, &xs);
        for (k, v) in rk.iter().enumerate() {
            lines.push(format!("residual{}={:.6e}", k + 1, v));
        }
        lines.push(format!("residual={:.6e}", total));
        lines.push(format!("relative_residual={:.6e}", relative_residual(&sys, &xs)));
    }
    match output {
        Some(p) if p != "-" => {
            std::fs::write(p, &text)?;
            emit(out, &lines)?;
        }
        _ => {
            emit(out, &lines)?;
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_check(input: &str, method: MethodArg, out: &mut dyn Write) -> Result<i32> {
    let sys = load(input)?;
    let code = |c: &Certificate| if c.is_nonsingular() { EXIT_OK } else { EXIT_SINGULAR };
    match method {
        MethodArg::Formal | MethodArg::Pencil => {
            let m = if method == MethodArg::Formal { Method::Formal } else { Method::Pencil };
            let cert = certify_system(&sys, m)?;
            emit(out, &certificate_lines(&cert, ""))?;
            Ok(code(&cert))
        }
        MethodArg::Both => {
            let formal = certify_system(&sys, Method::Formal)?;
            let pencil = certify_system(&sys, Method::Pencil)?;
            let agree = formal.verdict == pencil.verdict;
            let mut lines = certificate_lines(&formal, "formal_");
            lines.extend(certificate_lines(&pencil, "pencil_"));
            lines.push(format!("agreement={}", if agree { "yes" } else { "no" }));
            emit(out, &lines)?;
            Ok(if agree { code(&formal) } else { EXIT_ERROR })
        }
    }
}

fn cmd_gen(n: usize, r: usize, star: &str, seed: u64, output: Option<&str>, dense: bool, out: &mut dyn Write) -> Result<i32> {
    if n == 0 || r == 0 {
        return Err(Error::Dimension("n and r must be positive".into()));
    }
    let star = parse_star(star)?;
    let ps = if dense { gen_dense(n, r, star, seed) } else { gen_random(n, r, star, seed) };
    write_output(output, &serialize_system(&ps.to_system()), out)?;
    Ok(EXIT_OK)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    let m = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Median wall-clock seconds of `repeat` solves at one size.
pub fn time_solve(n: usize, r: usize, star: StarFlag, seed: u64, repeat: usize, with_schur: bool) -> Result<f64> {
    let ps = if with_schur { gen_dense(n, r, star, seed) } else { gen_random(n, r, star, seed) };
    let mut times = Vec::with_capacity(repeat.max(1));
    for _ in 0..repeat.max(1) {
        let t0 = Instant::now();
        let xs: Vec<Matrix> = if with_schur { solve_periodic(&ps)? } else { solve_triangular(&ps)? };
        times.push(t0.elapsed().as_secs_f64());
        std::hint::black_box(xs);
    }
    times.sort_by(|a, b| a.total_cmp(b));
    Ok(times[times.len() / 2])
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    mode: BenchMode,
    points: &[usize],
    star: &str,
    r: usize,
    n: usize,
    seed: u64,
    repeat: usize,
    with_schur: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let star = parse_star(star)?;
    writeln!(out, "size,seconds")?;
    let mut pts = Vec::new();
    for &p in points {
        let (nn, rr) = match mode {
            BenchMode::N => (p, r),
            BenchMode::R => (n, p),
        };
        let secs = time_solve(nn, rr, star, seed, repeat, with_schur)?;
        writeln!(out, "{},{:.6e}", p, secs)?;
        pts.push((p as f64, secs));
    }
    writeln!(err, "slope={:.4}", loglog_slope(&pts))?;
    Ok(EXIT_OK)
}

fn cmd_oracle_compare(input: &str, cap: usize, out: &mut dyn Write) -> Result<i32> {
    let sys = load(input)?;
    let brute = oracle_solve(&sys, cap)?;
    let fast = solve_system(&sys);
    let mut lines = Vec::new();
    let code = match (&brute, fast) {
        (BruteOutcome::Solved(want), Ok(got)) => {
            let diff = want.iter().zip(&got).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
            lines.push("oracle=nonsingular".to_string());
            lines.push("fast=nonsingular".to_string());
            lines.push(format!("max_abs_diff={:.6e}", diff));
            let ok = diff <= ORACLE_DIFF_TOL;
            lines.push(format!("agreement={}", if ok { "yes" } else { "no" }));
            if ok {
                EXIT_OK
            } else {
                EXIT_ERROR
            }
        }
        (BruteOutcome::Singular { rank, size }, Err(Error::Singular(_) | Error::SingularSmallSystem { .. })) => {
            lines.push(format!("oracle=singular rank={} size={}", rank, size));
            lines.push("fast=singular".to_string());
            lines.push("agreement=yes".to_string());
            EXIT_OK
        }
        (b, f) => {
            let o = match b {
                BruteOutcome::Solved(_) => "nonsingular".to_string(),
                BruteOutcome::Singular { rank, size } => format!("singular rank={} size={}", rank, size),
            };
            lines.push(format!("oracle={}", o));
            lines.push(match f {
                Ok(_) => "fast=nonsingular".to_string(),
                Err(e) => format!("fast=error {}", e),
            });
            lines.push("agreement=no".to_string());
            EXIT_ERROR
        }
    };
    emit(out, &lines)?;
    Ok(code)
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e);
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let res = match &cli.command {
        Command::Solve { input, output, check_residual } => cmd_solve(input, output.as_deref(), *check_residual, out),
        Command::Check { input, method } => cmd_check(input, *method, out),
        Command::Gen { n, r, star, seed, output, dense } => cmd_gen(*n, *r, star, *seed, output.as_deref(), *dense, out),
        Command::Bench { mode, points, star, r, n, seed, repeat, with_schur } => {
            cmd_bench(*mode, points, star, *r, *n, *seed, *repeat, *with_schur, out, err)
        }
        Command::OracleCompare { input, cap } => cmd_oracle_compare(input, *cap, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            EXIT_ERROR
        }
    }
}
