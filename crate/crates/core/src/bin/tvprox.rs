use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvprox::exact::{fpg_prox, prox_residual, OracleConfig};
use tvprox::experiments::config::{parse_list, parse_modes};
use tvprox::experiments::sweep::table_csv;
use tvprox::experiments::{gen_foam_phantom, run_mode, Overrides, ProxKind, SolverKind, Task};
use tvprox::forward::add_awgn;
use tvprox::shrink::{approx_prox, ProxParams};
use tvprox::signal::l2_norm;
use tvprox::tv::tv;
use tvprox::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "tvprox", version, about = "Approximate vs exact TV proximal operators in APGM/ADMM sweeps")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoising sweep with g(x) = ½‖x − y‖².
    Denoise(SweepArgs),
    /// Sparse-view parallel-beam CT sweep with g(x) = ½‖Ax − y‖².
    Ct(SweepArgs),
    /// Compare the approximate and exact TV prox on a noisy phantom.
    ProxCheck(CheckArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated regularisation weights.
    #[arg(long)]
    lambda: Option<String>,
    /// Comma-separated step sizes / penalties (fractions of 1/L for CT with APGM).
    #[arg(long)]
    gamma: Option<String>,
    /// aniso, iso or both.
    #[arg(long)]
    mode: Option<String>,
    /// apgm or admm.
    #[arg(long)]
    solver: Option<String>,
    /// approx or exact.
    #[arg(long)]
    prox: Option<String>,
    /// Image side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of CT views.
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    phantoms: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// 10 phantoms and 45 views unless given explicitly.
    #[arg(long)]
    paper_scale: bool,
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fill the seconds column of table.csv.
    #[arg(long)]
    timing: bool,
    /// Skip writing images and traces.
    #[arg(long)]
    no_images: bool,
    /// FPG iterations per prox call of the fixed-budget reference (0 disables it).
    #[arg(long)]
    fpg_budget: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Comma-separated prox scales.
    #[arg(long, default_value = "1e-3,1e-2,1e-1")]
    tau: String,
    #[arg(long, default_value = "both")]
    mode: String,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Also write prox_check.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn overrides(&self) -> Result<Overrides, Error> {
        Ok(Overrides {
            task: None,
            lambda: self.lambda.as_deref().map(parse_list).transpose()?,
            gamma: self.gamma.as_deref().map(parse_list).transpose()?,
            modes: self.mode.as_deref().map(parse_modes).transpose()?,
            solver: self.solver.as_deref().map(str::parse::<SolverKind>).transpose()?,
            prox: self.prox.as_deref().map(str::parse::<ProxKind>).transpose()?,
            size: self.size,
            seed: self.seed,
            angles: self.angles,
            phantoms: self.phantoms,
            sigma: self.sigma,
            out: self.out.clone(),
            paper_scale: self.paper_scale.then_some(true),
            timing: self.timing.then_some(true),
            images: self.no_images.then_some(false),
            fpg_budget: self.fpg_budget,
        })
    }
}

fn sweep(task: Task, args: &SweepArgs) -> ExitCode {
    let cfg = args
        .config
        .as_ref()
        .map(Overrides::load)
        .transpose()
        .and_then(|file| Ok(file.unwrap_or_default().merge(args.overrides()?)))
        .and_then(|o| o.into_config(task));
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut aborted = false;
    for &mode in &cfg.modes {
        match run_mode(&cfg, mode) {
            Ok(m) => {
                println!("# {task} {mode} -> {}", cfg.output_dir.join(mode.tag()).display());
                if let Some(l) = m.lipschitz {
                    println!("# L = {l:.6e}");
                }
                print!("{}", table_csv(&m.rows, cfg.timing));
                aborted |= m.any_failed();
            }
            Err(e) => {
                eprintln!("error: {mode} sweep failed: {e}");
                aborted = true;
            }
        }
    }
    if aborted {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    }
}

fn prox_check(args: &CheckArgs) -> ExitCode {
    let setup = (|| -> Result<_, Error> {
        let taus: Vec<f64> = parse_list(&args.tau)?;
        if taus.is_empty() || taus.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(Error::InvalidParameter("tau values must be positive".into()));
        }
        let modes = parse_modes(&args.mode)?;
        let z = add_awgn(&gen_foam_phantom(args.size, args.seed, 30)?, args.sigma, args.seed.wrapping_add(1))?;
        Ok((taus, modes, z))
    })();
    let (taus, modes, z) = match setup {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut text = String::from("mode,tau,distance,bound,tv_input,tv_approx,tv_exact,residual_approx\n");
    let mut ok = true;
    for mode in modes {
        for &tau in &taus {
            let row = (|| -> Result<String, Error> {
                let approx = approx_prox(&z, &ProxParams::new(tau, mode)?);
                let exact = fpg_prox(&z, tau, &OracleConfig::new(mode).with_tol(1e-12).with_max_iter(100_000))?.x;
                let dist = l2_norm(&exact.sub(&approx)?);
                let bound = 4.0 * tau * z.ndim() as f64 * (z.len() as f64).sqrt();
                let (t0, ta, te) = (tv(&z, mode), tv(&approx, mode), tv(&exact, mode));
                ok &= dist <= bound && ta <= t0 + 1e-10;
                let resid = prox_residual(&z, &approx, tau, mode)?;
                Ok(format!("{},{tau},{dist:.6e},{bound:.6e},{t0:.6e},{ta:.6e},{te:.6e},{resid:.6e}\n", mode.tag()))
            })();
            match row {
                Ok(r) => text.push_str(&r),
                Err(e) => {
                    eprintln!("error: {mode} tau={tau}: {e}");
                    return ExitCode::from(EXIT_SOLVER);
                }
            }
        }
    }
    print!("{text}");
    if let Some(dir) = &args.out {
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("prox_check.csv"), &text)) {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: a distance or descent check failed");
        ExitCode::from(EXIT_SOLVER)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match &cli.command {
        Command::Denoise(a) => sweep(Task::Denoise, a),
        Command::Ct(a) => sweep(Task::Ct, a),
        Command::ProxCheck(a) => prox_check(a),
    }
}
