use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpalm::mri::io::{
    evaluate_files, fmt4, read_dataset, write_dataset, write_image, write_metrics, Metrics,
    METRICS_FILE, RECON_FILE, TRACE_FILE,
};
use cpalm::mri::{build_problem, synthesize_dataset, MaskKind, ModelKind, ModelSpec, SynthConfig};
use cpalm::solver::{
    run_multi_cpalm, write_trace_csv, CouplingMode, IterateRecord, SolverConfig, Tolerance,
};
use cpalm::Error;

#[derive(Parser)]
#[command(name = "cpalm", version, about = "Simulated parallel-MRI reconstruction with CPALM")]
struct Cli {
    /// Worker threads for pixel maps and per-channel FFTs (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Reconstruct an image from a dataset directory.
    Solve(SolveArgs),
    /// Compare a reconstruction with a dataset's ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Image size, `N` or `MxN`; each side a power of two.
    #[arg(long, default_value = "64")]
    size: String,
    #[arg(long, default_value_t = 4)]
    coils: usize,
    /// `poisson:<ratio>` or `radial:<ratio>`.
    #[arg(long, default_value = "poisson:0.3")]
    mask: String,
    /// Standard deviation of the complex k-space noise.
    #[arg(long, default_value_t = 0.003)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    GaussSeidel,
    Jacobi,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `logsum` or `lp:<p>`.
    #[arg(long, default_value = "logsum")]
    model: String,
    #[arg(long, default_value_t = 1000.0)]
    lambda: f64,
    /// Log-sum curvature `μ`.
    #[arg(long, default_value_t = 1e-4)]
    mu: f64,
    /// ℓ_p weight `θ`.
    #[arg(long, default_value_t = 1e-4)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Metric shift `δ`; must exceed `λρ(AᵀA) + γ₁L₁`. Defaults to a 10% margin.
    #[arg(long)]
    delta: Option<f64>,
    /// Fixed `β` for the `w` step instead of `γ₂ρ₂L₂`.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    gamma1: f64,
    #[arg(long, default_value_t = 1.1)]
    gamma2: f64,
    #[arg(long, default_value_t = 300)]
    maxiter: usize,
    /// Stop when the subgradient residual falls below this fraction of its first value.
    #[arg(long, default_value_t = 1e-6)]
    tol_residual: f64,
    /// Treat `--tol-residual` as an absolute threshold.
    #[arg(long)]
    tol_absolute: bool,
    #[arg(long, default_value_t = 0.0)]
    tol_increment: f64,
    #[arg(long, value_enum, default_value_t = Mode::GaussSeidel)]
    coupling: Mode,
    /// Split the gradient field into this many row bands (Multi-CPALM).
    #[arg(long, default_value_t = 1)]
    w_blocks: usize,
    /// Seed for the spectral radius estimate.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the per-iteration objective check.
    #[arg(long)]
    no_descent_check: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstruction image (`recon.pgm`).
    #[arg(long)]
    recon: PathBuf,
    /// Dataset directory holding `ground_truth.pgm`.
    #[arg(long)]
    data: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Shape { .. } => 2,
        Error::Estimation { .. }
        | Error::Oracle(_)
        | Error::Diverged { .. }
        | Error::DescentViolation { .. } => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Parameter(format!("size `{s}` is not N or MxN"));
    match s.split_once('x') {
        Some((m, n)) => Ok((m.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?)),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn parse_model(a: &SolveArgs) -> Result<ModelKind, Error> {
    match a.model.as_str() {
        "logsum" => Ok(ModelKind::LogSum { mu: a.mu }),
        m => match m.strip_prefix("lp:").map(str::parse::<f64>) {
            Some(Ok(p)) => Ok(ModelKind::Lp { theta: a.theta, p }),
            _ => Err(Error::Parameter(format!("model `{m}` is not `logsum` or `lp:<p>`"))),
        },
    }
}

fn synth(a: &SynthArgs) -> Result<(), Error> {
    let (rows, cols) = parse_size(&a.size)?;
    let mask: MaskKind = a.mask.parse()?;
    let d = synthesize_dataset(&SynthConfig {
        rows,
        cols,
        coils: a.coils,
        mask,
        noise_sigma: a.sigma,
        seed: a.seed,
    })?;
    write_dataset(&a.out, &d)?;
    println!("ratio={:.3}", d.ratio());
    Ok(())
}

fn resolve(a: &SolveArgs) -> Result<(ModelSpec, SolverConfig), Error> {
    let spec = ModelSpec {
        kind: parse_model(a)?,
        lambda: a.lambda,
        tau: a.tau,
        delta: a.delta,
        w_blocks: a.w_blocks,
        seed: a.seed,
    };
    spec.validate()?;
    let cfg = SolverConfig {
        gamma1: a.gamma1,
        gamma2: a.gamma2,
        gamma2_blocks: None,
        beta_override: a.beta,
        max_iter: a.maxiter,
        tol_residual: if a.tol_absolute {
            Tolerance::Absolute(a.tol_residual)
        } else {
            Tolerance::Relative(a.tol_residual)
        },
        tol_increment: a.tol_increment,
        descent_check: !a.no_descent_check,
        coupling_mode: match a.coupling {
            Mode::GaussSeidel => CouplingMode::GaussSeidel,
            Mode::Jacobi => CouplingMode::Jacobi,
        },
    };
    cfg.validate(spec.w_blocks)?;
    Ok((spec, cfg))
}

fn config_lines(a: &SolveArgs, spec: &ModelSpec, cfg: &SolverConfig, delta: Option<f64>) -> String {
    let opt = |v: Option<f64>| v.map_or("auto".to_string(), |v| format!("{v:?}"));
    let mut kv = vec![
        ("data", a.data.display().to_string()),
        ("out", a.out.display().to_string()),
        ("model", a.model.clone()),
    ];
    match spec.kind {
        ModelKind::LogSum { mu } => kv.push(("mu", format!("{mu:?}"))),
        ModelKind::Lp { theta, p } => {
            kv.push(("theta", format!("{theta:?}")));
            kv.push(("p", format!("{p:?}")));
        }
    }
    kv.extend([
        ("lambda", format!("{:?}", spec.lambda)),
        ("tau", format!("{:?}", spec.tau)),
        ("delta", opt(delta.or(spec.delta))),
        ("beta", opt(cfg.beta_override)),
        ("gamma1", format!("{:?}", cfg.gamma1)),
        ("gamma2", format!("{:?}", cfg.gamma2)),
        ("maxiter", cfg.max_iter.to_string()),
        ("tol_residual", format!("{:?}", cfg.tol_residual)),
        ("tol_increment", format!("{:?}", cfg.tol_increment)),
        ("coupling", format!("{:?}", cfg.coupling_mode)),
        ("w_blocks", spec.w_blocks.to_string()),
        ("descent_check", cfg.descent_check.to_string()),
        ("seed", spec.seed.to_string()),
    ]);
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn write_trace(out: &Path, trace: &[IterateRecord]) -> Result<(), Error> {
    let f = fs::File::create(out.join(TRACE_FILE))?;
    write_trace_csv(std::io::BufWriter::new(f), trace)
}

fn solve(a: &SolveArgs) -> Result<(), Error> {
    let (spec, cfg) = resolve(a)?;
    if a.dump_config {
        print!("{}", config_lines(a, &spec, &cfg, None));
        return Ok(());
    }
    let data = read_dataset(&a.data)?;
    let start = Instant::now();
    let mp = build_problem(&data, &spec, &cfg)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.txt"), config_lines(a, &spec, &cfg, Some(mp.delta)))?;
    let run = match run_multi_cpalm(&mp.problem, mp.init.clone(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            if let Some(t) = e.trace() {
                write_trace(&a.out, t)?;
            }
            return Err(e);
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    write_trace(&a.out, &run.trace)?;
    let recon = a.out.join(RECON_FILE);
    write_image(&recon, data.rows, data.cols, &run.state.x.magnitude())?;
    let (snr_db, psnr_db, relerr) = evaluate_files(&recon, &a.data)?;
    write_metrics(
        &a.out.join(METRICS_FILE),
        &Metrics {
            snr_db,
            psnr_db,
            relerr,
            iters: run.trace.len(),
            cpu_s: seconds,
        },
    )?;
    println!(
        "status={:?} iters={} F={:?} delta={:?} snr_db={} relerr={}",
        run.status,
        run.trace.len(),
        run.trace.last().map_or(run.initial_objective, |r| r.objective),
        mp.delta,
        fmt4(snr_db),
        fmt4(relerr)
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), Error> {
    let (s, p, r) = evaluate_files(&a.recon, &a.data)?;
    println!("snr_db={}\npsnr_db={}\nrelerr={}", fmt4(s), fmt4(p), fmt4(r));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_args(model: &str) -> SolveArgs {
        Cli::try_parse_from(["cpalm", "solve", "--data", "d", "--out", "o", "--model", model])
            .map(|c| match c.command {
                Command::Solve(a) => a,
                _ => unreachable!(),
            })
            .unwrap()
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64").unwrap(), (64, 64));
        assert_eq!(parse_size("32x128").unwrap(), (32, 128));
        assert!(parse_size("32x").is_err());
        assert!(parse_size("big").is_err());
    }

    #[test]
    fn models() {
        assert!(matches!(parse_model(&solve_args("logsum")).unwrap(), ModelKind::LogSum { mu } if mu == 1e-4));
        assert!(matches!(parse_model(&solve_args("lp:0.5")).unwrap(), ModelKind::Lp { p, .. } if p == 0.5));
        assert!(parse_model(&solve_args("lp:")).is_err());
        assert!(parse_model(&solve_args("tv")).is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Parameter("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 4);
        assert_eq!(exit_code(&Error::Oracle("x".into())), 3);
    }
}
